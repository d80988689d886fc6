"""Byte-exact file formats: the latent interchange file (.clrt) and the
coded bitstream container (.clrc).

.clrt layout (28-byte header, all integers little-endian):
    magic "CLRT" | version u16 | dtype u8 (0 = float32 LE) | reserved u8
    | C u32 | H_l u32 | W_l u32 | image_height u32 | image_width u32
    | payload C*H_l*W_l float32, channel-major row-major

.clrc layout (header computable from K alone, all little-endian):
    magic "CLRC" | version u16 | image_height u32 | image_width u32
    | C u32 | H_l u32 | W_l u32 | K u8 | arch_id u8 | hidden_width u16
    | step exponents i8 x3 (context model, upsampler, synthesis)
    | weight scale b-hat u16 x3 (8.8 fixed point)
    | K x (s_min i16, s_max i16) grid symbol bounds
    | (3+K) x segment byte length u32
    | segments: context-model weights, upsampler kernel, synthesis
      weights, then grids coarsest to finest
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from . import rangecoder as rc
from .autograd import ConfigError
from .model import (
    ArchConfig,
    ArmWeights,
    CodecParameters,
    LatentTensor,
    SynthesisWeights,
    pyramid_shapes,
)

LATENT_MAGIC = b"CLRT"
STREAM_MAGIC = b"CLRC"
FORMAT_VERSION = 1
LATENT_HEADER_BYTES = 28
MIN_STEP_EXPONENT = -12


class FormatError(Exception):
    """Base class for malformed files."""


class BadMagicError(FormatError):
    pass


class UnsupportedVersionError(FormatError):
    pass


class UnsupportedDtypeError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class NonFiniteDataError(FormatError):
    pass


class HeaderInvariantError(FormatError):
    pass


def bpp(num_bytes: int, image_height: int, image_width: int) -> float:
    """Bits per pixel of the original image: 8 * bytes / (H * W)."""
    return 8.0 * num_bytes / (image_height * image_width)


# ---------------------------------------------------------------------------
# latent file


def latent_to_bytes(latent: LatentTensor) -> bytes:
    if not np.all(np.isfinite(latent.values)):
        raise NonFiniteDataError("latent payload contains non-finite values")
    c, h, w = latent.values.shape
    header = struct.pack("<4sHBBIIIII", LATENT_MAGIC, FORMAT_VERSION, 0, 0,
                         c, h, w, latent.image_height, latent.image_width)
    assert len(header) == LATENT_HEADER_BYTES
    return header + latent.values.astype("<f4").tobytes()


def latent_from_bytes(data: bytes) -> LatentTensor:
    if len(data) < LATENT_HEADER_BYTES:
        raise TruncatedFileError(f"latent file is {len(data)} bytes, header needs {LATENT_HEADER_BYTES}")
    magic, version, dtype, _res, c, h, w, img_h, img_w = struct.unpack_from("<4sHBBIIIII", data, 0)
    if magic != LATENT_MAGIC:
        raise BadMagicError(f"bad latent magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"latent version {version} unsupported")
    if dtype != 0:
        raise UnsupportedDtypeError(f"latent dtype code {dtype} unsupported")
    if min(c, h, w) < 1 or min(img_h, img_w) < 1:
        raise HeaderInvariantError("latent extents must all be >= 1")
    need = LATENT_HEADER_BYTES + 4 * c * h * w
    if len(data) < need:
        raise TruncatedFileError(f"latent payload truncated: {len(data)} < {need} bytes")
    if len(data) > need:
        raise HeaderInvariantError(f"{len(data) - need} trailing bytes after latent payload")
    values = np.frombuffer(data, dtype="<f4", count=c * h * w, offset=LATENT_HEADER_BYTES)
    values = values.reshape(c, h, w).astype(np.float32)
    if not np.all(np.isfinite(values)):
        raise NonFiniteDataError("latent payload contains non-finite values")
    try:
        return LatentTensor(values=values, image_height=int(img_h), image_width=int(img_w))
    except (ConfigError, ValueError) as e:
        raise HeaderInvariantError(str(e)) from e


def write_latent(latent: LatentTensor, path) -> None:
    data = latent_to_bytes(latent)
    with open(path, "wb") as f:
        f.write(data)


def read_latent(path) -> LatentTensor:
    with open(path, "rb") as f:
        return latent_from_bytes(f.read())


# ---------------------------------------------------------------------------
# bitstream container


@dataclass
class StreamHeader:
    image_height: int
    image_width: int
    channels: int
    latent_height: int
    latent_width: int
    num_grids: int
    arch_id: int
    hidden_width: int
    step_exponents: tuple[int, int, int]
    weight_scales: tuple[int, int, int]
    grid_bounds: list[tuple[int, int]]
    segment_lengths: list[int]

    @property
    def header_bytes(self) -> int:
        return header_size(self.num_grids)

    def arch_config(self) -> ArchConfig:
        return ArchConfig(channels=self.channels, latent_height=self.latent_height,
                          latent_width=self.latent_width, num_grids=self.num_grids,
                          hidden_width=self.hidden_width, arch_id=self.arch_id)


_FIXED_HEADER = "<4sHIIIIIBBHbbbHHH"
_FIXED_HEADER_BYTES = struct.calcsize(_FIXED_HEADER)  # 39


def header_size(num_grids: int) -> int:
    return _FIXED_HEADER_BYTES + 4 * num_grids + 4 * (3 + num_grids)


def _weight_vectors(params: CodecParameters) -> list[np.ndarray]:
    return [params.arm.flat(), params.upsampler.reshape(-1).copy(), params.synthesis.flat()]


def serialize_bitstream(params: CodecParameters, image_height: int, image_width: int,
                        step_exponents: tuple[int, int, int]) -> bytes:
    """Entropy-code quantized parameters into a self-describing stream.

    Grids must already be integer-valued and weights are snapped to their
    declared steps; the grids are coded with the same dequantized context
    model the decoder will reconstruct.
    """
    params.validate()
    cfg = params.config
    if image_height < cfg.latent_height or image_width < cfg.latent_width:
        raise ConfigError("image dimensions smaller than the latent")
    for e in step_exponents:
        if not (MIN_STEP_EXPONENT <= e <= 0):
            raise ConfigError(f"step exponent {e} outside [{MIN_STEP_EXPONENT}, 0]")

    segments: list[bytes] = []
    scales: list[int] = []
    dequant: list[np.ndarray] = []
    for vec, e in zip(_weight_vectors(params), step_exponents):
        step = 2.0 ** e
        enc = rc.RangeEncoder()
        fixed = rc.encode_weights(vec, step, enc)
        segments.append(enc.finish())
        scales.append(fixed)
        dequant.append((rc.weight_symbols(vec, step) * step).astype(np.float32))
    coding_arm = ArmWeights.from_flat(dequant[0])

    bounds: list[tuple[int, int]] = []
    for grid in reversed(params.pyramid):  # coarsest first
        if not np.array_equal(grid, np.round(grid)):
            raise ConfigError("pyramid grids must be hard-quantized before serialization")
        lo, hi = int(grid.min()), int(grid.max())
        if lo < -32768 or hi > 32767:
            raise rc.SymbolRangeError(f"grid bounds [{lo}, {hi}] exceed i16")
        bounds.append((lo, hi))
        enc = rc.RangeEncoder()
        rc.encode_grid(grid.astype(np.int32), coding_arm, enc, lo, hi)
        segments.append(enc.finish())

    head = struct.pack(
        _FIXED_HEADER, STREAM_MAGIC, FORMAT_VERSION,
        image_height, image_width,
        cfg.channels, cfg.latent_height, cfg.latent_width,
        cfg.num_grids, cfg.arch_id, cfg.hidden_width,
        *step_exponents, *scales)
    body = io.BytesIO()
    body.write(head)
    for lo, hi in bounds:
        body.write(struct.pack("<hh", lo, hi))
    for seg in segments:
        body.write(struct.pack("<I", len(seg)))
    for seg in segments:
        body.write(seg)
    return body.getvalue()


def parse_header(data: bytes) -> StreamHeader:
    """Validate and read the header; sizes every buffer without payload access."""
    if len(data) < _FIXED_HEADER_BYTES:
        raise TruncatedFileError(f"stream is {len(data)} bytes, fixed header needs {_FIXED_HEADER_BYTES}")
    (magic, version, img_h, img_w, c, lh, lw, k, arch_id, width,
     e0, e1, e2, s0, s1, s2) = struct.unpack_from(_FIXED_HEADER, data, 0)
    if magic != STREAM_MAGIC:
        raise BadMagicError(f"bad stream magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"stream version {version} unsupported")
    if min(c, lh, lw, img_h, img_w) < 1 or k < 1 or width < 1:
        raise HeaderInvariantError("stream extents must all be >= 1")
    if img_h < lh or img_w < lw:
        raise HeaderInvariantError("image dimensions smaller than the latent")
    for e in (e0, e1, e2):
        if not (MIN_STEP_EXPONENT <= e <= 0):
            raise HeaderInvariantError(f"step exponent {e} outside [{MIN_STEP_EXPONENT}, 0]")
    for s in (s0, s1, s2):
        if s < 1:
            raise HeaderInvariantError("weight scale must be positive")
    total_header = header_size(k)
    if len(data) < total_header:
        raise TruncatedFileError(f"stream is {len(data)} bytes, header for {k} grids needs {total_header}")
    pos = _FIXED_HEADER_BYTES
    bounds = []
    for _ in range(k):
        lo, hi = struct.unpack_from("<hh", data, pos)
        if lo > hi:
            raise HeaderInvariantError(f"grid bounds [{lo}, {hi}] are empty")
        bounds.append((lo, hi))
        pos += 4
    seg_lengths = []
    for _ in range(3 + k):
        (n,) = struct.unpack_from("<I", data, pos)
        seg_lengths.append(n)
        pos += 4
    if sum(seg_lengths) != len(data) - total_header:
        raise HeaderInvariantError(
            f"segment lengths sum to {sum(seg_lengths)} but {len(data) - total_header} payload bytes remain")
    return StreamHeader(image_height=img_h, image_width=img_w, channels=c,
                        latent_height=lh, latent_width=lw, num_grids=k,
                        arch_id=arch_id, hidden_width=width,
                        step_exponents=(e0, e1, e2), weight_scales=(s0, s1, s2),
                        grid_bounds=bounds, segment_lengths=seg_lengths)


def parse_bitstream(data: bytes) -> tuple[CodecParameters, StreamHeader]:
    """Decode a stream back into parameters ready for latent reconstruction."""
    header = parse_header(data)
    cfg = header.arch_config()
    pos = header.header_bytes
    seg_views = []
    for n in header.segment_lengths:
        seg_views.append(data[pos:pos + n])
        pos += n

    counts = [ArmWeights.zeros().param_count(), 64,
              SynthesisWeights.param_count(cfg.num_grids, cfg.hidden_width, cfg.channels)]
    weights: list[np.ndarray] = []
    for seg, count, e, scale in zip(seg_views[:3], counts, header.step_exponents, header.weight_scales):
        dec = rc.RangeDecoder(seg)
        weights.append(rc.decode_weights(count, 2.0 ** e, scale, dec))
    arm = ArmWeights.from_flat(weights[0])
    upsampler = weights[1].reshape(8, 8)
    synthesis = SynthesisWeights.from_flat(weights[2], cfg.num_grids, cfg.hidden_width, cfg.channels)

    shapes = pyramid_shapes(cfg.latent_height, cfg.latent_width, cfg.num_grids)
    pyramid: list[np.ndarray] = [None] * cfg.num_grids
    for i, (seg, (lo, hi)) in enumerate(zip(seg_views[3:], header.grid_bounds)):
        k = cfg.num_grids - 1 - i  # segments run coarsest to finest
        dec = rc.RangeDecoder(seg)
        pyramid[k] = rc.decode_grid(shapes[k], arm, dec, lo, hi).astype(np.float32)

    params = CodecParameters(config=cfg, pyramid=pyramid, arm=arm,
                             upsampler=upsampler, synthesis=synthesis)
    params.validate()
    return params, header


def write_bitstream(data: bytes, path) -> None:
    with open(path, "wb") as f:
        f.write(data)


def read_bitstream(path) -> bytes:
    with open(path, "rb") as f:
        return f.read()
