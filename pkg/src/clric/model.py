"""The overfitted latent function: grid pyramid, autoregressive context
model, learnable upsampler, synthesis network, rate proxy, MAC counter.

All trainable state lives in plain numpy arrays inside small dataclasses;
the training path wraps them in autograd Tensors, while the decode path
(`decode_latent`) runs the same forward kernels tape-free so the encoder
and decoder reconstruct bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autograd as ag
from .autograd import CONTEXT_OFFSETS, ConfigError, Tensor

ARM_CONTEXT_SIZE = 8
ARM_HIDDEN = 8
DEFAULT_GRIDS = 7
DEFAULT_HIDDEN_WIDTH = 16
SCALE_MIN = 1e-2
SCALE_MAX = 1e3


# ---------------------------------------------------------------------------
# domain types


@dataclass
class LatentTensor:
    """A latent map (C,H_l,W_l) plus the source-image dimensions for bpp."""

    values: np.ndarray
    image_height: int
    image_width: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3:
            raise ConfigError(f"latent must be (C,H,W), got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("latent contains non-finite values")
        c, h, w = v.shape
        if min(c, h, w) < 1:
            raise ConfigError("latent extents must all be >= 1")
        if h > self.image_height or w > self.image_width:
            raise ConfigError("latent cannot be larger than the source image")
        self.values = v

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def latent_height(self) -> int:
        return self.values.shape[1]

    @property
    def latent_width(self) -> int:
        return self.values.shape[2]

    @property
    def image_pixels(self) -> int:
        return self.image_height * self.image_width


@dataclass
class ArchConfig:
    """Architecture knobs; arch_id 0 is the default layout."""

    channels: int
    latent_height: int
    latent_width: int
    num_grids: int = DEFAULT_GRIDS
    hidden_width: int = DEFAULT_HIDDEN_WIDTH
    arch_id: int = 0

    def __post_init__(self):
        if min(self.channels, self.latent_height, self.latent_width, self.num_grids) < 1:
            raise ConfigError("all architecture extents must be >= 1")
        if self.hidden_width < 1:
            raise ConfigError("hidden width must be >= 1")


class LaplaceParams(NamedTuple):
    """Per-symbol distribution: location mu and scale b in [1e-2, 1e3]."""

    mu: float
    b: float


@dataclass
class ArmWeights:
    """8-context MLP, widths 8->8->8->2, residual from layer 1 into layer 2.

    Outputs are (mu, s); the coder uses scale b = clamp(exp(s), 1e-2, 1e3).
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.arrays()])

    def arrays(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]

    @staticmethod
    def shapes() -> list[tuple]:
        return [(ARM_HIDDEN, ARM_CONTEXT_SIZE), (ARM_HIDDEN,),
                (ARM_HIDDEN, ARM_HIDDEN), (ARM_HIDDEN,),
                (2, ARM_HIDDEN), (2,)]

    @staticmethod
    def from_flat(flat: np.ndarray) -> "ArmWeights":
        return ArmWeights(*_unflatten(flat, ArmWeights.shapes()))

    @staticmethod
    def zeros() -> "ArmWeights":
        return ArmWeights(*[np.zeros(s, dtype=np.float32) for s in ArmWeights.shapes()])

    def param_count(self) -> int:
        return sum(int(np.prod(s)) for s in self.shapes())


@dataclass
class SynthesisWeights:
    """Four conv layers over the stacked grid channels.

    L1: 1x1 K->width, relu. L2: 1x1 width->width, plus L1 output.
    L3: 3x3 width->C, relu. L4: 3x3 C->C, plus L3 output.
    """

    layers: list[tuple[np.ndarray, np.ndarray]]

    @staticmethod
    def shapes(num_grids: int, width: int, channels: int) -> list[tuple]:
        return [(width, num_grids, 1, 1), (width,),
                (width, width, 1, 1), (width,),
                (channels, width, 3, 3), (channels,),
                (channels, channels, 3, 3), (channels,)]

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in self.layers for a in pair]

    def flat(self) -> np.ndarray:
        return np.concatenate([a.reshape(-1) for a in self.arrays()])

    @staticmethod
    def from_flat(flat: np.ndarray, num_grids: int, width: int, channels: int) -> "SynthesisWeights":
        arrs = _unflatten(flat, SynthesisWeights.shapes(num_grids, width, channels))
        return SynthesisWeights(layers=[(arrs[i], arrs[i + 1]) for i in range(0, 8, 2)])

    @staticmethod
    def param_count(num_grids: int, width: int, channels: int) -> int:
        return sum(int(np.prod(s)) for s in SynthesisWeights.shapes(num_grids, width, channels))


@dataclass
class CodecParameters:
    """Everything that is trained, quantized, coded and transmitted."""

    config: ArchConfig
    pyramid: list[np.ndarray]
    arm: ArmWeights
    upsampler: np.ndarray
    synthesis: SynthesisWeights

    def validate(self):
        shapes = pyramid_shapes(self.config.latent_height, self.config.latent_width, self.config.num_grids)
        if len(self.pyramid) != self.config.num_grids:
            raise ConfigError(f"pyramid has {len(self.pyramid)} grids, config says {self.config.num_grids}")
        for k, (g, s) in enumerate(zip(self.pyramid, shapes)):
            if g.shape != s:
                raise ConfigError(f"grid {k} shape {g.shape} != expected {s}")
        if self.upsampler.shape != (8, 8):
            raise ConfigError(f"upsampler kernel must be 8x8, got {self.upsampler.shape}")
        want = SynthesisWeights.shapes(self.config.num_grids, self.config.hidden_width, self.config.channels)
        got = [a.shape for a in self.synthesis.arrays()]
        if got != want:
            raise ConfigError(f"synthesis shapes {got} != expected {want}")


def _unflatten(flat: np.ndarray, shapes: list[tuple]) -> list[np.ndarray]:
    out, pos = [], 0
    for s in shapes:
        n = int(np.prod(s))
        out.append(np.asarray(flat[pos:pos + n], dtype=np.float32).reshape(s))
        pos += n
    if pos != len(flat):
        raise ConfigError(f"flat weight buffer has {len(flat)} values, expected {pos}")
    return out


# ---------------------------------------------------------------------------
# pyramid


def pyramid_shapes(h: int, w: int, num_grids: int) -> list[tuple[int, int]]:
    """Dyadically shrinking grid shapes, ceil division, never below 1."""
    if min(h, w, num_grids) < 1:
        raise ConfigError("pyramid_shapes arguments must all be >= 1")
    return [(-(-h // (1 << k)), -(-w // (1 << k))) for k in range(num_grids)]


def init_pyramid(h: int, w: int, num_grids: int) -> list[np.ndarray]:
    """All-zero grids: zero initial rate and a clean distortion baseline."""
    return [np.zeros(s, dtype=np.float32) for s in pyramid_shapes(h, w, num_grids)]


def add_uniform_noise(grid: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """grid + U[-0.5, 0.5) per element; the rounding proxy used in training."""
    return grid + (rng.random(grid.shape, dtype=np.float64) - 0.5).astype(grid.dtype)


def quantize_round(grid: np.ndarray) -> np.ndarray:
    """Round half away from zero, clamped to the i16 symbol range."""
    return np.clip(ag.round_half_away(grid), -32768, 32767)


def quantize_clip_count(grid: np.ndarray) -> int:
    """How many values quantize_round had to clamp (encoder warning count)."""
    r = ag.round_half_away(grid)
    return int(np.sum((r < -32768) | (r > 32767)))


# ---------------------------------------------------------------------------
# context + ARM


def extract_context(grid: np.ndarray, row: int, col: int) -> np.ndarray:
    """The 8 causal neighbors of (row, col), zeros outside the grid."""
    h, w = grid.shape
    out = np.zeros(ARM_CONTEXT_SIZE, dtype=np.float64)
    for i, (dr, dc) in enumerate(CONTEXT_OFFSETS):
        r, c = row + dr, col + dc
        if 0 <= r < h and 0 <= c < w:
            out[i] = grid[r, c]
    return out


def arm_forward_single(ctx: np.ndarray, arm: ArmWeights) -> LaplaceParams:
    """(mu, b) for one context row; float64, the coding-path evaluation.

    Both encoder and decoder call exactly this function symbol by symbol,
    so the distribution they build for each position is identical.
    """
    a1 = np.maximum(arm.w1.astype(np.float64) @ ctx + arm.b1, 0.0)
    a2 = np.maximum(arm.w2.astype(np.float64) @ a1 + arm.b2 + a1, 0.0)
    out = arm.w3.astype(np.float64) @ a2 + arm.b3
    b = float(np.clip(np.exp(min(out[1], ag._EXP_MAX_ARG)), SCALE_MIN, SCALE_MAX))
    return LaplaceParams(mu=float(out[0]), b=b)


def arm_forward_batch(ctx: Tensor, w: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Vectorized (mu, b) for (N,8) contexts on the training tape."""
    a1 = ag.relu(ag.linear(ctx, w["w1"], w["b1"]))
    a2 = ag.relu(ag.add(ag.linear(a1, w["w2"], w["b2"]), a1))
    out = ag.linear(a2, w["w3"], w["b3"])
    mu = ag.select_col(out, 0)
    b = ag.clamp(ag.exp(ag.select_col(out, 1)), SCALE_MIN, SCALE_MAX)
    return mu, b


def rate_bits(value: float, mu: float, b: float) -> float:
    """Coding cost in bits of one value under Laplace(mu, b), 1-wide bins."""
    return float(ag.laplace_rate_fw(np.asarray(value, dtype=np.float64),
                                    np.asarray(mu, dtype=np.float64),
                                    np.asarray(b, dtype=np.float64)))


def grid_rate_estimate(grid: np.ndarray, arm: ArmWeights) -> float:
    """Continuous rate proxy of a whole grid, per-symbol evaluation."""
    h, w = grid.shape
    total = 0.0
    for r in range(h):
        for c in range(w):
            mu, b = arm_forward_single(extract_context(grid, r, c), arm)
            total += rate_bits(float(grid[r, c]), mu, b)
    return total


def grid_rate_estimate_batched(grid: np.ndarray, arm: ArmWeights) -> np.ndarray:
    """Same rate proxy, whole grid at once; returns per-symbol bits (f64)."""
    g = grid.astype(np.float64)
    ctx = ag.gather_context_fw(g)
    a1 = np.maximum(ctx @ arm.w1.astype(np.float64).T + arm.b1, 0.0)
    a2 = np.maximum(a1 @ arm.w2.astype(np.float64).T + arm.b2 + a1, 0.0)
    out = a2 @ arm.w3.astype(np.float64).T + arm.b3
    mu = out[:, 0]
    b = np.clip(np.exp(np.minimum(out[:, 1], ag._EXP_MAX_ARG)), SCALE_MIN, SCALE_MAX)
    return ag.laplace_rate_fw(g.reshape(-1), mu, b)


# ---------------------------------------------------------------------------
# upsampling + synthesis


def bicubic_kernel8() -> np.ndarray:
    """Separable bicubic (a=-0.5) stride-2 kernel; each phase sums to 1."""
    def weight(x: float) -> float:
        x = abs(x)
        if x <= 1.0:
            return 1.5 * x ** 3 - 2.5 * x ** 2 + 1.0
        if x < 2.0:
            return -0.5 * x ** 3 + 2.5 * x ** 2 - 4.0 * x + 2.0
        return 0.0

    taps = np.array([weight(1.75), weight(1.25), weight(0.75), weight(0.25),
                     weight(0.25), weight(0.75), weight(1.25), weight(1.75)], dtype=np.float32)
    return np.outer(taps, taps).astype(np.float32)


def _upsample_chain_fw(grid: np.ndarray, kern: np.ndarray, shapes: list[tuple[int, int]], level: int) -> np.ndarray:
    """Walk grid `level` up to full resolution, cropping overshoot per step."""
    cur = grid
    for j in range(level, 0, -1):
        th, tw = shapes[j - 1]
        up = ag.upsample2x_fw(cur, kern)
        # ceil shapes overshoot by at most 1; drop the trailing row/col
        cur = up[(up.shape[0] - th) // 2:(up.shape[0] - th) // 2 + th,
                 (up.shape[1] - tw) // 2:(up.shape[1] - tw) // 2 + tw]
    return cur


def upsample_pyramid_fw(pyramid: list[np.ndarray], kern: np.ndarray) -> np.ndarray:
    """(K,H_l,W_l) feature stack; channel k is grid k brought to full size."""
    shapes = [g.shape for g in pyramid]
    return np.stack([_upsample_chain_fw(g, kern, shapes, k) for k, g in enumerate(pyramid)], axis=0)


def upsample_pyramid(grids: list[Tensor], kern: Tensor) -> Tensor:
    shapes = [g.data.shape for g in grids]
    chans = []
    for k, g in enumerate(grids):
        cur = g
        for j in range(k, 0, -1):
            th, tw = shapes[j - 1]
            cur = ag.upsample2x(cur, kern)
            oh, ow = cur.data.shape
            cur = ag.crop2d(cur, (oh - th) // 2, (ow - tw) // 2, th, tw)
        chans.append(cur)
    return ag.stack0(chans)


def synthesis_forward_fw(features: np.ndarray, syn: SynthesisWeights) -> np.ndarray:
    (w1, b1), (w2, b2), (w3, b3), (w4, b4) = syn.layers
    t1 = np.maximum(ag.conv2d_fw(features, w1, b1), 0.0)
    t2 = ag.conv2d_fw(t1, w2, b2) + t1
    t3 = np.maximum(ag.conv2d_fw(t2, w3, b3), 0.0)
    return ag.conv2d_fw(t3, w4, b4) + t3


def synthesis_forward(features: Tensor, w: dict[str, Tensor]) -> Tensor:
    t1 = ag.relu(ag.conv2d(features, w["sw1"], w["sb1"]))
    t2 = ag.add(ag.conv2d(t1, w["sw2"], w["sb2"]), t1)
    t3 = ag.relu(ag.conv2d(t2, w["sw3"], w["sb3"]))
    return ag.add(ag.conv2d(t3, w["sw4"], w["sb4"]), t3)


def decode_latent(params: CodecParameters) -> np.ndarray:
    """The one and only reconstruction path: pyramid -> upsample -> synthesis.

    Pure function of the (quantized) parameters; the encoder reports
    distortion through this same call, so both sides agree bitwise.
    """
    params.validate()
    pyramid = [g.astype(np.float32) for g in params.pyramid]
    feats = upsample_pyramid_fw(pyramid, params.upsampler.astype(np.float32))
    return synthesis_forward_fw(feats, params.synthesis)


# ---------------------------------------------------------------------------
# initialization


def init_parameters(cfg: ArchConfig, rng: np.random.Generator) -> CodecParameters:
    """Zero grids, fan-based uniform MLP/conv weights, exact bicubic kernel."""
    def fan_uniform(shape, fan_in, fan_out):
        lim = float(np.sqrt(6.0 / (fan_in + fan_out)))
        return rng.uniform(-lim, lim, size=shape).astype(np.float32)

    arm = ArmWeights(
        w1=fan_uniform((ARM_HIDDEN, ARM_CONTEXT_SIZE), ARM_CONTEXT_SIZE, ARM_HIDDEN),
        b1=np.zeros(ARM_HIDDEN, dtype=np.float32),
        w2=fan_uniform((ARM_HIDDEN, ARM_HIDDEN), ARM_HIDDEN, ARM_HIDDEN),
        b2=np.zeros(ARM_HIDDEN, dtype=np.float32),
        w3=fan_uniform((2, ARM_HIDDEN), ARM_HIDDEN, 2),
        b3=np.zeros(2, dtype=np.float32),
    )
    layers = []
    for (ws, bs) in zip(SynthesisWeights.shapes(cfg.num_grids, cfg.hidden_width, cfg.channels)[0::2],
                        SynthesisWeights.shapes(cfg.num_grids, cfg.hidden_width, cfg.channels)[1::2]):
        co, ci, k, _ = ws
        layers.append((fan_uniform(ws, ci * k * k, co * k * k), np.zeros(bs, dtype=np.float32)))
    return CodecParameters(
        config=cfg,
        pyramid=init_pyramid(cfg.latent_height, cfg.latent_width, cfg.num_grids),
        arm=arm,
        upsampler=bicubic_kernel8(),
        synthesis=SynthesisWeights(layers=layers),
    )


# ---------------------------------------------------------------------------
# decoder complexity


@dataclass
class MacReport:
    """Analytic decoder multiply-accumulate counts, per component."""

    arm: int
    upsampler: int
    synthesis: int
    fixed: int
    image_pixels: int

    @property
    def total(self) -> int:
        return self.arm + self.upsampler + self.synthesis + self.fixed

    @property
    def per_pixel(self) -> float:
        return self.total / self.image_pixels

    def breakdown_per_pixel(self) -> dict[str, float]:
        return {
            "arm": self.arm / self.image_pixels,
            "upsampler": self.upsampler / self.image_pixels,
            "synthesis": self.synthesis / self.image_pixels,
            "fixed": self.fixed / self.image_pixels,
            "total": self.per_pixel,
        }


ARM_MACS_PER_SYMBOL = ARM_CONTEXT_SIZE * ARM_HIDDEN + ARM_HIDDEN * ARM_HIDDEN + ARM_HIDDEN * 2
UPSAMPLE_MACS_PER_PIXEL = 16  # 4x4 taps feed each produced pixel


def count_macs(cfg: ArchConfig, image_height: int, image_width: int) -> MacReport:
    """Decoder MAC count: ARM per coded symbol, 16 per upsampled pixel,
    the four synthesis layers per latent pixel, plus the fixed per-image
    cost of rebuilding the network weights from their integer symbols."""
    shapes = pyramid_shapes(cfg.latent_height, cfg.latent_width, cfg.num_grids)
    symbols = sum(h * w for h, w in shapes)
    arm = ARM_MACS_PER_SYMBOL * symbols

    ups = 0
    for k in range(len(shapes)):
        cur = shapes[k]
        for j in range(k, 0, -1):
            ups += UPSAMPLE_MACS_PER_PIXEL * (2 * cur[0]) * (2 * cur[1])
            cur = shapes[j - 1]

    kf, wdt, c = cfg.num_grids, cfg.hidden_width, cfg.channels
    per_px = kf * wdt + wdt * wdt + 9 * wdt * c + 9 * c * c
    syn = per_px * cfg.latent_height * cfg.latent_width

    fixed = (ArmWeights.zeros().param_count() + 64
             + SynthesisWeights.param_count(kf, wdt, c))
    return MacReport(arm=arm, upsampler=ups, synthesis=syn, fixed=fixed,
                     image_pixels=image_height * image_width)
