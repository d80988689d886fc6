"""Per-latent rate-distortion overfitting.

The schedule runs warm-up candidates from independent seeds, advances the
best through a finalist round, then trains the winner with a cosine-decayed
learning rate. Quantization is approximated by uniform noise for most of
training and by straight-through rounding for the final stretch. A terminal
search picks one quantization step per network, trading reconstruction
error against the exact coded size.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import bitstream as bs
from . import model as md
from . import rangecoder as rc
from .autograd import ConfigError, Tensor
from .model import ArchConfig, ArmWeights, CodecParameters, LatentTensor, SynthesisWeights

NOISE = "noise"
HARD = "hard-ste"

_ARM_NAMES = ("w1", "b1", "w2", "b2", "w3", "b3")
_SYN_NAMES = ("sw1", "sb1", "sw2", "sb2", "sw3", "sb3", "sw4", "sb4")


class TrainingError(RuntimeError):
    """Every candidate diverged or the winner hit a non-finite loss."""


@dataclass
class RdConfig:
    """Schedule and objective knobs; the defaults are the full-budget run."""

    lam: float = 1e-3
    warmup_candidates: int = 5
    warmup_iters: int = 400
    finalist_count: int = 2
    finalist_iters: int = 400
    main_iters: int = 13_100
    total_iterations: int | None = 15_900
    initial_lr: float = 1e-2
    final_lr: float = 1e-5
    hard_quant_tail: int = 600
    num_grids: int = md.DEFAULT_GRIDS
    hidden_width: int = md.DEFAULT_HIDDEN_WIDTH
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if self.finalist_count > self.warmup_candidates:
            raise ConfigError("cannot keep more finalists than warm-up candidates")
        if min(self.warmup_candidates, self.warmup_iters, self.finalist_count,
               self.finalist_iters, self.main_iters) < 1:
            raise ConfigError("all schedule phases need at least one iteration")
        accounted = (self.warmup_candidates * self.warmup_iters
                     + self.finalist_count * self.finalist_iters + self.main_iters)
        if self.total_iterations is None:
            self.total_iterations = accounted
        elif self.total_iterations != accounted:
            raise ConfigError(
                f"iteration accounting broken: {self.warmup_candidates}x{self.warmup_iters} + "
                f"{self.finalist_count}x{self.finalist_iters} + {self.main_iters} = {accounted}, "
                f"config says {self.total_iterations}")
        if not (0 <= self.hard_quant_tail <= self.main_iters):
            raise ConfigError("hard-quantization tail cannot exceed the main phase")
        if self.initial_lr <= 0 or self.final_lr <= 0:
            raise ConfigError("learning rates must be positive")

    @staticmethod
    def paper_preset(lam: float, seed: int = 0, **kw) -> "RdConfig":
        return RdConfig(lam=lam, seed=seed, **kw)

    @staticmethod
    def smoke_preset(lam: float, seed: int = 0, **kw) -> "RdConfig":
        """Desk-scale budget: 2x50 warm-up, 1x50 finalist, 400 main."""
        return RdConfig(lam=lam, warmup_candidates=2, warmup_iters=50,
                        finalist_count=1, finalist_iters=50, main_iters=400,
                        total_iterations=550, hard_quant_tail=100, seed=seed, **kw)


@dataclass
class CandidateResult:
    index: int
    seed: int
    ranking_loss: float
    error: str | None = None


@dataclass
class TrainingReport:
    """What the encoder measured; all final numbers come from the
    hard-quantized parameters through the real decode path."""

    chosen_candidate: int = -1
    chosen_seed: int = 0
    candidates: list[CandidateResult] = field(default_factory=list)
    warmup_traces: list[list[float]] = field(default_factory=list)
    finalist_traces: list[list[float]] = field(default_factory=list)
    main_trace: list[float] = field(default_factory=list)
    steps_per_phase: dict = field(default_factory=dict)
    total_steps: int = 0
    initial_loss: float = math.nan
    final_loss: float = math.nan
    final_mse: float = math.nan
    rate_estimate_bits: float = math.nan
    rate_estimate_bpp: float = math.nan
    actual_bytes: int = 0
    bpp: float = math.nan
    step_exponents: tuple = (0, 0, 0)
    grid_clip_count: int = 0
    wall_time_s: float = 0.0
    bitstream: bytes = b""

    def to_json_dict(self) -> dict:
        return {
            "chosen_candidate": self.chosen_candidate,
            "chosen_seed": self.chosen_seed,
            "total_steps": self.total_steps,
            "steps_per_phase": self.steps_per_phase,
            "initial_loss": self.initial_loss,
            "final_loss": self.final_loss,
            "final_mse": self.final_mse,
            "rate_estimate_bits": self.rate_estimate_bits,
            "rate_estimate_bpp": self.rate_estimate_bpp,
            "actual_bytes": self.actual_bytes,
            "bpp": self.bpp,
            "step_exponents": list(self.step_exponents),
            "grid_clip_count": self.grid_clip_count,
            "wall_time_s": self.wall_time_s,
        }


# ---------------------------------------------------------------------------
# schedule helpers


def mix_seed(seed: int, index: int) -> int:
    """splitmix64 of (seed, candidate index); stated so runs are replayable."""
    z = (seed + 0x9E3779B97F4A7C15 * (index + 1)) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def lr_schedule(iteration: int, config: RdConfig) -> float:
    """Constant through warm-up/finalist steps, cosine decay over the main
    phase from initial_lr down to final_lr. `iteration` counts the winning
    candidate's own optimizer steps from its first warm-up step."""
    pre = config.warmup_iters + config.finalist_iters
    if iteration < pre:
        return config.initial_lr
    t = iteration - pre
    n = config.main_iters
    if n <= 1 or t >= n:
        return config.final_lr
    cos = math.cos(math.pi * t / (n - 1))
    return config.final_lr + 0.5 * (config.initial_lr - config.final_lr) * (1.0 + cos)


# ---------------------------------------------------------------------------
# trainable state


class TrainState:
    """Autograd tensors for one candidate plus its rng and Adam state."""

    def __init__(self, arch: ArchConfig, seed: int):
        self.arch = arch
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        start = md.init_parameters(arch, self.rng)
        self.grids = [Tensor(g, requires_grad=True) for g in start.pyramid]
        self.arm = {n: Tensor(a, requires_grad=True) for n, a in zip(_ARM_NAMES, start.arm.arrays())}
        self.syn = {n: Tensor(a, requires_grad=True) for n, a in zip(_SYN_NAMES, start.synthesis.arrays())}
        self.kernel = Tensor(start.upsampler, requires_grad=True)
        self.params = (self.grids + [self.kernel]
                       + [self.arm[n] for n in _ARM_NAMES] + [self.syn[n] for n in _SYN_NAMES])
        self.adam = ag.AdamState(self.params)
        self.steps_taken = 0

    def zero_grads(self):
        for p in self.params:
            p.zero_grad()

    def export(self, quantize_grids: bool = False) -> CodecParameters:
        pyramid = [g.data.copy() for g in self.grids]
        if quantize_grids:
            pyramid = [md.quantize_round(g) for g in pyramid]
        return CodecParameters(
            config=self.arch,
            pyramid=pyramid,
            arm=ArmWeights(*[self.arm[n].data.copy() for n in _ARM_NAMES]),
            upsampler=self.kernel.data.copy(),
            synthesis=SynthesisWeights(
                layers=[(self.syn[_SYN_NAMES[i]].data.copy(), self.syn[_SYN_NAMES[i + 1]].data.copy())
                        for i in range(0, 8, 2)]),
        )


def state_from_params(params: CodecParameters, seed: int = 0) -> TrainState:
    """Wrap existing parameters (used by tests and the loss entry point)."""
    st = TrainState(params.config, seed)
    for g, src in zip(st.grids, params.pyramid):
        g.data = src.astype(np.float32).copy()
    for n, a in zip(_ARM_NAMES, params.arm.arrays()):
        st.arm[n].data = a.copy()
    for n, a in zip(_SYN_NAMES, params.synthesis.arrays()):
        st.syn[n].data = a.copy()
    st.kernel.data = params.upsampler.copy()
    return st


# ---------------------------------------------------------------------------
# the objective


def build_loss(state: TrainState, y: LatentTensor, lam: float, phase: str):
    """Eq: distortion + lam * (grid bits / image pixels).

    Network-weight rate is handled by the terminal step search, not here.
    """
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    if phase not in (NOISE, HARD):
        raise ConfigError(f"unknown phase {phase!r}")
    staged = []
    for g in state.grids:
        if phase == NOISE:
            noise = (state.rng.random(g.data.shape, dtype=np.float64) - 0.5).astype(np.float32)
            staged.append(ag.add_const(g, noise))
        else:
            staged.append(ag.ste_round(g))
    feats = md.upsample_pyramid(staged, state.kernel)
    yhat = md.synthesis_forward(feats, state.syn)
    dist = ag.mse(yhat, Tensor(y.values))
    ctx = ag.concat0([ag.gather_context(g) for g in staged])
    vals = ag.concat0([ag.flatten(g) for g in staged])
    mu, b = md.arm_forward_batch(ctx, state.arm)
    rate = ag.tsum(ag.laplace_rate(vals, mu, b))
    loss = ag.add(dist, ag.scale(rate, lam / y.image_pixels))
    return loss, float(dist.data), float(rate.data)


def loss_value(y: LatentTensor, params: CodecParameters, lam: float, phase: str,
               seed: int = 0) -> float:
    """Evaluate the objective for a fixed parameter set (no training)."""
    return float(build_loss(state_from_params(params, seed), y, lam, phase)[0].data)


# ---------------------------------------------------------------------------
# training phases


class _CandidateDiverged(Exception):
    pass


def _train_steps(state: TrainState, y: LatentTensor, config: RdConfig, steps: int,
                 phase_of=None, trace=None):
    for _ in range(steps):
        phase = NOISE if phase_of is None else phase_of(state.steps_taken)
        state.zero_grads()
        loss, _, _ = build_loss(state, y, config.lam, phase)
        val = float(loss.data)
        if not math.isfinite(val):
            raise _CandidateDiverged(f"non-finite loss at step {state.steps_taken}")
        ag.backward(loss)
        ag.adam_step(state.params, lr_schedule(state.steps_taken, config), state.adam)
        state.steps_taken += 1
        if trace is not None:
            trace.append(val)


def _ranking_loss(state: TrainState, y: LatentTensor, config: RdConfig) -> float:
    loss, _, _ = build_loss(state, y, config.lam, NOISE)
    return float(loss.data)


def train(y: LatentTensor, config: RdConfig) -> tuple[CodecParameters, TrainingReport]:
    """Overfit the latent and return hard-quantized parameters plus a report.

    Deterministic given (y, config); warm-up candidates may run on
    `config.threads` threads, with selection merged by (loss, index).
    """
    t0 = time.monotonic()
    arch = ArchConfig(channels=y.channels, latent_height=y.latent_height,
                      latent_width=y.latent_width, num_grids=config.num_grids,
                      hidden_width=config.hidden_width)
    report = TrainingReport()
    report.warmup_traces = [[] for _ in range(config.warmup_candidates)]

    def run_warmup(idx: int):
        seed = mix_seed(config.seed, idx)
        state = TrainState(arch, seed)
        trace: list[float] = []
        try:
            _train_steps(state, y, config, config.warmup_iters, trace=trace)
            rank = _ranking_loss(state, y, config)
            return CandidateResult(idx, seed, rank), state, trace
        except _CandidateDiverged as e:
            return CandidateResult(idx, seed, math.inf, error=str(e)), state, trace

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            outcomes = list(pool.map(run_warmup, range(config.warmup_candidates)))
    else:
        outcomes = [run_warmup(i) for i in range(config.warmup_candidates)]

    states = {}
    for result, state, trace in outcomes:
        report.candidates.append(result)
        report.warmup_traces[result.index] = trace
        states[result.index] = state
    report.steps_per_phase["warmup"] = sum(len(t) for t in report.warmup_traces)

    alive = sorted((c for c in report.candidates if c.error is None),
                   key=lambda c: (c.ranking_loss, c.index))
    if not alive:
        raise TrainingError("all warm-up candidates diverged: "
                            + "; ".join(c.error or "?" for c in report.candidates))

    finalists = alive[:config.finalist_count]
    finalist_results = []
    report.steps_per_phase["finalist"] = 0
    for cand in finalists:
        state = states[cand.index]
        trace: list[float] = []
        try:
            _train_steps(state, y, config, config.finalist_iters, trace=trace)
            finalist_results.append(CandidateResult(cand.index, cand.seed,
                                                    _ranking_loss(state, y, config)))
        except _CandidateDiverged as e:
            finalist_results.append(CandidateResult(cand.index, cand.seed, math.inf, error=str(e)))
        report.finalist_traces.append(trace)
        report.steps_per_phase["finalist"] += len(trace)

    alive = sorted((c for c in finalist_results if c.error is None),
                   key=lambda c: (c.ranking_loss, c.index))
    if not alive:
        raise TrainingError("all finalists diverged")
    winner = alive[0]
    report.chosen_candidate = winner.index
    report.chosen_seed = winner.seed
    state = states[winner.index]

    hard_from = config.main_iters - config.hard_quant_tail

    def phase_of(step_idx: int) -> str:
        step_in_main = step_idx - (config.warmup_iters + config.finalist_iters)
        return HARD if step_in_main >= hard_from else NOISE

    try:
        _train_steps(state, y, config, config.main_iters, phase_of=phase_of,
                     trace=report.main_trace)
    except _CandidateDiverged as e:
        raise TrainingError(f"winning candidate diverged in main phase: {e}") from e
    report.steps_per_phase["main"] = len(report.main_trace)
    report.total_steps = sum(report.steps_per_phase.values())
    report.initial_loss = report.warmup_traces[winner.index][0]

    report.grid_clip_count = sum(md.quantize_clip_count(g.data) for g in state.grids)
    raw = state.export(quantize_grids=True)
    params, exponents, search = quantize_weights_search(raw, y, config.lam)
    report.step_exponents = exponents

    stream = bs.serialize_bitstream(params, y.image_height, y.image_width, exponents)
    report.bitstream = stream
    report.actual_bytes = len(stream)
    report.bpp = bs.bpp(len(stream), y.image_height, y.image_width)
    report.final_mse = float(np.mean((y.values - md.decode_latent(params)) ** 2))
    report.rate_estimate_bits = search["estimate_bits"]
    report.rate_estimate_bpp = search["estimate_bits"] / y.image_pixels
    report.final_loss = report.final_mse + config.lam * search["exact_bits"] / y.image_pixels
    report.wall_time_s = time.monotonic() - t0
    return params, report


# ---------------------------------------------------------------------------
# terminal weight quantization


STEP_EXPONENTS = tuple(range(0, -13, -1))  # 2^0 down to 2^-12, largest first


def _coded_weight_bits(vec: np.ndarray, step: float) -> int:
    enc = rc.RangeEncoder()
    rc.encode_weights(vec, step, enc)
    return len(enc.finish()) * 8


def _coded_grid_bits(pyramid: list[np.ndarray], arm: ArmWeights) -> int:
    total = 0
    for grid in pyramid:
        enc = rc.RangeEncoder()
        rc.encode_grid(grid.astype(np.int32), arm, enc, int(grid.min()), int(grid.max()))
        total += len(enc.finish()) * 8
    return total


def _estimated_bits(params: CodecParameters, exponents) -> float:
    """Quantized-CDF estimate of the payload, flush overhead included."""
    total = 0.0
    for vec, e in zip((params.arm.flat(), params.upsampler.reshape(-1), params.synthesis.flat()),
                      exponents):
        total += rc.estimate_weight_bits(vec, 2.0 ** e)
    for grid in params.pyramid:
        total += rc.estimate_grid_bits(grid.astype(np.int32), params.arm,
                                       int(grid.min()), int(grid.max()))
    segments = 3 + params.config.num_grids
    return total + 8.0 * rc.CODER_OVERHEAD_BYTES * segments


def quantize_weights_search(params: CodecParameters, y: LatentTensor, lam: float):
    """Pick one step per network from {2^0 .. 2^-12} minimizing
    distortion + lam * exact-coded-bits / image pixels.

    Networks are handled one at a time: the context model first (it only
    moves the rate), then the upsampler, then synthesis (they only move
    distortion and their own weight bits). Ties go to the larger step.
    """
    img_px = y.image_pixels
    arm_vec = params.arm.flat()
    ups_vec = params.upsampler.reshape(-1).copy()
    syn_vec = params.synthesis.flat()
    cfg = params.config

    def try_exponents(vec):
        for e in STEP_EXPONENTS:
            try:
                snapped = rc.snap_weights(vec, 2.0 ** e)
            except rc.SymbolRangeError:
                continue
            yield e, snapped

    evals = {"arm": [], "upsampler": [], "synthesis": []}

    # context model: distortion is untouched, minimize coded bits
    best_arm = None
    for e, snapped in try_exponents(arm_vec):
        arm_q = ArmWeights.from_flat(snapped)
        try:
            bits = _coded_weight_bits(arm_vec, 2.0 ** e) + _coded_grid_bits(params.pyramid, arm_q)
        except rc.SymbolRangeError:
            continue  # step finer than the scale-derived coder range allows
        evals["arm"].append((e, lam * bits / img_px))
        if best_arm is None or lam * bits / img_px < best_arm[0] - 1e-12:
            best_arm = (lam * bits / img_px, e, arm_q, bits)
    if best_arm is None:
        raise TrainingError("no admissible quantization step for the context model")
    _, e_arm, arm_q, arm_grid_bits = best_arm

    # upsampler: moves distortion and its own bits; synthesis still float
    def distortion(upsampler, synthesis):
        candidate = CodecParameters(config=cfg, pyramid=params.pyramid, arm=arm_q,
                                    upsampler=upsampler, synthesis=synthesis)
        return float(np.mean((y.values - md.decode_latent(candidate)) ** 2))

    best_ups = None
    for e, snapped in try_exponents(ups_vec):
        kern = snapped.reshape(8, 8)
        try:
            obj = distortion(kern, params.synthesis) + lam * _coded_weight_bits(ups_vec, 2.0 ** e) / img_px
        except rc.SymbolRangeError:
            continue
        evals["upsampler"].append((e, obj))
        if best_ups is None or obj < best_ups[0] - 1e-12:
            best_ups = (obj, e, kern)
    if best_ups is None:
        raise TrainingError("no admissible quantization step for the upsampler")
    _, e_ups, kern_q = best_ups

    best_syn = None
    for e, snapped in try_exponents(syn_vec):
        syn_q = SynthesisWeights.from_flat(snapped, cfg.num_grids, cfg.hidden_width, cfg.channels)
        try:
            obj = distortion(kern_q, syn_q) + lam * _coded_weight_bits(syn_vec, 2.0 ** e) / img_px
        except rc.SymbolRangeError:
            continue
        evals["synthesis"].append((e, obj))
        if best_syn is None or obj < best_syn[0] - 1e-12:
            best_syn = (obj, e, syn_q)
    if best_syn is None:
        raise TrainingError("no admissible quantization step for the synthesis network")
    _, e_syn, syn_q = best_syn

    quantized = CodecParameters(config=cfg, pyramid=[g.copy() for g in params.pyramid],
                                arm=arm_q, upsampler=kern_q, synthesis=syn_q)
    exponents = (e_arm, e_ups, e_syn)
    weight_bits = sum(_coded_weight_bits(v, 2.0 ** e)
                      for v, e in zip((arm_vec, ups_vec, syn_vec), exponents))
    search = {
        "exact_bits": weight_bits + arm_grid_bits,
        "weight_bits": weight_bits,
        "grid_bits": arm_grid_bits,
        "estimate_bits": _estimated_bits(quantized, exponents),
        "evals": evals,
    }
    return quantized, exponents, search
