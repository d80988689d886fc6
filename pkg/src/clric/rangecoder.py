"""Bit-exact range coder plus quantized-CDF symbol models.

The coder is a 32-bit-range / 64-bit-low byte-wise renormalizing range
coder with carry propagation through a cached byte (the classic LZMA
construction). Frequency tables always total 2^16 with a minimum count
of 1 per symbol, which matches the 2^-16 probability floor used by the
training-time rate proxy, so payload sizes track the estimate closely.

Everything here is deterministic integer arithmetic once the frequency
table exists; the table itself is built in float64 by the same code on
the encoding and decoding side.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .autograd import ConfigError, laplace_mass_fw, round_half_away
from .model import ArmWeights, arm_forward_single, extract_context

CDF_TOTAL_BITS = 16
CDF_TOTAL = 1 << CDF_TOTAL_BITS
MAX_RANGE_WIDTH = 1 << 15  # s_max - s_min may not exceed this
WEIGHT_SYMBOL_BOUND = 1 << 14  # network weights are coded over [-B, B]

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF


class CorruptStreamError(Exception):
    """Decoder ran off the end of a segment or met an impossible symbol."""


class SymbolRangeError(ValueError):
    """Encoder was handed a symbol outside the declared range."""


# ---------------------------------------------------------------------------
# quantized CDFs


@dataclass
class QuantizedCdf:
    """Cumulative counts over [s_min, s_max]; cum[0]=0, cum[-1]=2^16."""

    s_min: int
    s_max: int
    cum: list[int]

    def count(self, symbol: int) -> int:
        i = symbol - self.s_min
        return self.cum[i + 1] - self.cum[i]

    def bits(self, symbol: int) -> float:
        return float(CDF_TOTAL_BITS - np.log2(self.count(symbol)))

    @property
    def num_symbols(self) -> int:
        return self.s_max - self.s_min + 1


def _apportion(mass: np.ndarray, total: int = CDF_TOTAL) -> np.ndarray:
    """Integer counts proportional to mass: floor at 1, then hand out the
    remainder by largest fractional part, or claw back from the largest
    counts. Fully deterministic (ties break toward the lower index)."""
    n = mass.size
    mass = np.maximum(mass, 0.0)
    peak = float(mass.max())
    if not np.isfinite(peak) or peak <= 0.0:
        mass = np.ones(n)
    else:
        mass = mass / peak  # guards total/s against overflow when the
    s = float(mass.sum())   # whole mass is subnormal (mean far off-range)
    ideal = mass * (total / s)
    base = np.maximum(np.floor(ideal).astype(np.int64), 1)
    diff = total - int(base.sum())
    idx = np.arange(n)
    if diff > 0:
        rem = ideal - np.floor(ideal)
        order = np.lexsort((idx, -rem))
        base[order[:diff]] += 1
    elif diff < 0:
        order = np.lexsort((idx, -base))
        for i in order:
            take = min(int(base[i]) - 1, -diff)
            if take > 0:
                base[i] -= take
                diff += take
            if diff == 0:
                break
    return base


def quantize_cdf(mu: float, b: float, s_min: int, s_max: int) -> QuantizedCdf:
    """Discretize Laplace(mu, b) over the integers [s_min, s_max]."""
    if s_min > s_max:
        raise ConfigError(f"empty symbol range [{s_min}, {s_max}]")
    if s_max - s_min > MAX_RANGE_WIDTH:
        raise ConfigError(f"symbol range wider than {MAX_RANGE_WIDTH}: [{s_min}, {s_max}]")
    sym = np.arange(s_min, s_max + 1, dtype=np.float64)
    mass = laplace_mass_fw(sym, np.full_like(sym, mu), np.full_like(sym, b))
    counts = _apportion(mass)
    cum = np.zeros(counts.size + 1, dtype=np.int64)
    np.cumsum(counts, out=cum[1:])
    return QuantizedCdf(s_min=int(s_min), s_max=int(s_max), cum=cum.tolist())


# ---------------------------------------------------------------------------
# range coder core


class RangeEncoder:
    """Carry-cached range encoder; totals are always 2^16."""

    def __init__(self):
        self._low = 0
        self._range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()

    def _shift_low(self):
        if self._low < 0xFF000000 or self._low > _MASK32:
            carry = self._low >> 32
            self._out.append((self._cache + carry) & 0xFF)
            for _ in range(self._cache_size - 1):
                self._out.append((0xFF + carry) & 0xFF)
            self._cache = (self._low >> 24) & 0xFF
            self._cache_size = 0
        self._cache_size += 1
        self._low = (self._low << 8) & _MASK32

    def encode_symbol(self, symbol: int, cdf: QuantizedCdf):
        if symbol < cdf.s_min or symbol > cdf.s_max:
            raise SymbolRangeError(f"symbol {symbol} outside [{cdf.s_min}, {cdf.s_max}]")
        i = symbol - cdf.s_min
        lo, hi = cdf.cum[i], cdf.cum[i + 1]
        r = self._range >> CDF_TOTAL_BITS
        self._low += lo * r
        self._range = (hi - lo) * r
        while self._range < _TOP:
            self._shift_low()
            self._range = (self._range << 8) & _MASK32

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self._out)


class RangeDecoder:
    """Mirror of RangeEncoder over an in-memory segment."""

    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._range = _MASK32
        self._code = 0
        for _ in range(5):
            self._code = ((self._code << 8) | self._next_byte()) & _MASK32

    def _next_byte(self) -> int:
        if self._pos >= len(self._data):
            raise CorruptStreamError("range-coded segment truncated")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def decode_symbol(self, cdf: QuantizedCdf) -> int:
        r = self._range >> CDF_TOTAL_BITS
        target = self._code // r
        if target >= CDF_TOTAL:
            target = CDF_TOTAL - 1
        i = bisect_right(cdf.cum, target) - 1
        if i < 0 or i >= cdf.num_symbols:
            raise CorruptStreamError("decoded cumulative frequency out of table")
        lo, hi = cdf.cum[i], cdf.cum[i + 1]
        self._code -= lo * r
        self._range = (hi - lo) * r
        while self._range < _TOP:
            self._code = ((self._code << 8) | self._next_byte()) & _MASK32
            self._range = (self._range << 8) & _MASK32
        return cdf.s_min + i


# flushing costs exactly five shift-outs beyond the coded information
CODER_OVERHEAD_BYTES = 5


# ---------------------------------------------------------------------------
# grid coding (autoregressive, raster scan)


def encode_grid(grid: np.ndarray, arm: ArmWeights, enc: RangeEncoder, s_min: int, s_max: int):
    """Code an integer grid; the context of each symbol is built from the
    same values the decoder will have already reconstructed."""
    g = grid.astype(np.float64)
    if np.any(g < s_min) or np.any(g > s_max):
        raise SymbolRangeError("grid value outside declared bounds")
    h, w = g.shape
    for r in range(h):
        for c in range(w):
            mu, b = arm_forward_single(extract_context(g, r, c), arm)
            cdf = quantize_cdf(mu, b, s_min, s_max)
            enc.encode_symbol(int(g[r, c]), cdf)


def decode_grid(shape: tuple[int, int], arm: ArmWeights, dec: RangeDecoder,
                s_min: int, s_max: int) -> np.ndarray:
    g = np.zeros(shape, dtype=np.float64)
    h, w = shape
    for r in range(h):
        for c in range(w):
            mu, b = arm_forward_single(extract_context(g, r, c), arm)
            cdf = quantize_cdf(mu, b, s_min, s_max)
            g[r, c] = dec.decode_symbol(cdf)
    return g.astype(np.int32)


def estimate_grid_bits(grid: np.ndarray, arm: ArmWeights, s_min: int, s_max: int) -> float:
    """Sum of -log2(count/2^16) under the exact CDFs the coder will use."""
    g = grid.astype(np.float64)
    h, w = g.shape
    total = 0.0
    for r in range(h):
        for c in range(w):
            mu, b = arm_forward_single(extract_context(g, r, c), arm)
            cdf = quantize_cdf(mu, b, s_min, s_max)
            total += cdf.bits(int(g[r, c]))
    return total


# ---------------------------------------------------------------------------
# network-weight coding


def weight_symbols(weights: np.ndarray, step: float) -> np.ndarray:
    """Integer symbols n = round(w / step), checked against the coder range."""
    if step <= 0:
        raise ConfigError(f"weight step must be positive, got {step}")
    sym = round_half_away(np.asarray(weights, dtype=np.float64) / step)
    if np.any(np.abs(sym) > WEIGHT_SYMBOL_BOUND):
        raise SymbolRangeError("weight symbol exceeds coder bound; step too small")
    return sym.astype(np.int64)


def weight_scale_fixed(sym: np.ndarray) -> int:
    """b-hat = max(mean |n|, 0.1) as unsigned 8.8 fixed point for the header."""
    bhat = max(float(np.mean(np.abs(sym))), 0.1)
    return int(np.clip(round(bhat * 256.0), 1, 0xFFFF))


def weight_scale_from_fixed(fixed: int) -> float:
    return fixed / 256.0


def weight_symbol_bound(bhat: float) -> int:
    """Symbol range [-B, B] derived from the transmitted scale, so the
    decoder rebuilds the same table without extra header fields. 48 scales
    of tail keep the range generous; symbols beyond it mean the step was
    too small for this weight vector and the encoder rejects it."""
    return int(min(WEIGHT_SYMBOL_BOUND, max(128, np.ceil(48.0 * bhat))))


def _weight_cdf(bhat: float) -> QuantizedCdf:
    bound = weight_symbol_bound(bhat)
    return quantize_cdf(0.0, bhat, -bound, bound)


def encode_weights(weights: np.ndarray, step: float, enc: RangeEncoder) -> int:
    """Code a flat weight vector; returns the fixed-point scale for the header."""
    sym = weight_symbols(weights, step)
    fixed = weight_scale_fixed(sym)
    bhat = weight_scale_from_fixed(fixed)
    if np.abs(sym).max(initial=0) > weight_symbol_bound(bhat):
        raise SymbolRangeError("weight symbol outside the scale-derived range")
    cdf = _weight_cdf(bhat)
    for s in sym:
        enc.encode_symbol(int(s), cdf)
    return fixed


def decode_weights(count: int, step: float, scale_fixed: int, dec: RangeDecoder) -> np.ndarray:
    """Reconstruct w = n * step; exact in float32 for the steps in use."""
    cdf = _weight_cdf(weight_scale_from_fixed(scale_fixed))
    sym = np.array([dec.decode_symbol(cdf) for _ in range(count)], dtype=np.float64)
    return (sym * step).astype(np.float32)


def estimate_weight_bits(weights: np.ndarray, step: float) -> float:
    sym = weight_symbols(weights, step)
    cdf = _weight_cdf(weight_scale_from_fixed(weight_scale_fixed(sym)))
    return float(sum(cdf.bits(int(s)) for s in sym))


def snap_weights(weights: np.ndarray, step: float) -> np.ndarray:
    """Round weights to the step lattice exactly as the decoder rebuilds them."""
    return (weight_symbols(weights, step) * step).astype(np.float32)
