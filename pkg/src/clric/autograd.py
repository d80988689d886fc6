"""Minimal dense-tensor math with reverse-mode gradients.

Covers exactly the operations the codec networks need: elementwise
arithmetic, relu/exp/clamp, 1x1 and 3x3 convolutions, a stride-2
transposed convolution with an 8x8 kernel, causal context gather,
the discretized-Laplace rate, straight-through rounding, and Adam.

The tape is dynamic: every op returns a new Tensor that remembers its
parents and a closure that routes the output gradient back to them.
Shapes must match exactly; there is no broadcasting. Tensors default to
float32. float64 is accepted as well, which keeps finite-difference
checks out of round-off trouble.
"""

from __future__ import annotations

import numpy as np

_ALLOWED_DTYPES = (np.float32, np.float64)

# exp() saturates here so float32 never overflows to inf
_EXP_MAX_ARG = 88.0


class Tensor:
    """A dense array plus an optional gradient and a backward closure."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            arr = arr.astype(np.float32)
        if arr.ndim > 4:
            raise ConfigError(f"tensors are limited to 4 axes, got {arr.ndim}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"


class ConfigError(ValueError):
    """Raised for shape/parameter misuse that no input data can cause."""


def _result(data, parents, backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward = backward
        out.requires_grad = False
        out.grad = None
    return out


def _accum(t: Tensor, g):
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def backward(loss: Tensor):
    """Populate .grad of every reachable tensor with d(loss)/d(tensor).

    ``loss`` must be a scalar. Grads accumulate across calls unless zeroed
    in between. The tape hanging off ``loss`` is released afterwards.
    """
    if loss.data.shape != ():
        raise ConfigError("backward() expects a scalar loss")
    topo: list[Tensor] = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    _accum(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
        if node._parents:
            # release the graph and scratch grads of interior nodes
            node._parents = ()
            node._backward = None
            if not node.requires_grad:
                node.grad = None


def _same_shape(a: Tensor, b: Tensor, opname: str):
    if a.data.shape != b.data.shape:
        raise ConfigError(f"{opname}: shape mismatch {a.data.shape} vs {b.data.shape}")


# ---------------------------------------------------------------------------
# elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    def bw(g):
        _accum(a, g)
        _accum(b, g)
    return _result(a.data + b.data, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    def bw(g):
        _accum(a, g)
        _accum(b, -g)
    return _result(a.data - b.data, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    def bw(g):
        _accum(a, g * b.data)
        _accum(b, g * a.data)
    return _result(a.data * b.data, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    def bw(g):
        _accum(a, g * c)
    return _result(a.data * np.asarray(c, dtype=a.data.dtype), (a,), bw)


def add_const(a: Tensor, arr) -> Tensor:
    """a + constant array (gradient passes through a unchanged)."""
    arr = np.asarray(arr, dtype=a.data.dtype)
    if arr.shape != a.data.shape:
        raise ConfigError(f"add_const: shape mismatch {a.data.shape} vs {arr.shape}")
    def bw(g):
        _accum(a, g)
    return _result(a.data + arr, (a,), bw)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    def bw(g):
        _accum(a, g * mask)
    return _result(np.where(mask, a.data, 0.0), (a,), bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(np.minimum(a.data, _EXP_MAX_ARG))
    def bw(g):
        _accum(a, g * out)
    return _result(out, (a,), bw)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    if lo > hi:
        raise ConfigError(f"clamp: lo={lo} > hi={hi}")
    inside = (a.data >= lo) & (a.data <= hi)
    def bw(g):
        _accum(a, g * inside)
    return _result(np.clip(a.data, lo, hi), (a,), bw)


def ste_round(a: Tensor) -> Tensor:
    """Round half away from zero; backward is the identity (straight-through)."""
    def bw(g):
        _accum(a, g)
    return _result(round_half_away(a.data), (a,), bw)


def round_half_away(x: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(x) + 0.5), x).astype(x.dtype)


# ---------------------------------------------------------------------------
# reductions


def tsum(a: Tensor) -> Tensor:
    def bw(g):
        _accum(a, np.full_like(a.data, float(g)))
    return _result(np.asarray(a.data.sum(), dtype=a.data.dtype), (a,), bw)


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared difference; gradient is 2(a-b)/N into a (and -that into b)."""
    _same_shape(a, b, "mse")
    diff = a.data - b.data
    n = diff.size
    def bw(g):
        d = (2.0 / n) * float(g) * diff
        _accum(a, d.astype(a.data.dtype))
        _accum(b, (-d).astype(b.data.dtype))
    return _result(np.asarray(np.mean(diff * diff), dtype=a.data.dtype), (a, b), bw)


# ---------------------------------------------------------------------------
# linear / conv kernels (forward math shared with the tape-free decode path)


def linear_fw(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ w.T + b


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x:(N,I) @ w:(O,I).T + b:(O,) -> (N,O)"""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[1]:
        raise ConfigError(f"linear: bad shapes x{x.data.shape} w{w.data.shape}")
    if b.data.shape != (w.data.shape[0],):
        raise ConfigError(f"linear: bias shape {b.data.shape} != ({w.data.shape[0]},)")
    def bw(g):
        _accum(x, g @ w.data)
        _accum(w, g.T @ x.data)
        _accum(b, g.sum(axis=0))
    return _result(linear_fw(x.data, w.data, b.data), (x, w, b), bw)


def select_col(x: Tensor, col: int) -> Tensor:
    """(N,M) -> (N,) column view with scatter-back gradient."""
    if x.data.ndim != 2:
        raise ConfigError("select_col expects a 2-D tensor")
    def bw(g):
        full = np.zeros_like(x.data)
        full[:, col] = g
        _accum(x, full)
    return _result(x.data[:, col].copy(), (x,), bw)


def flatten(x: Tensor) -> Tensor:
    shape = x.data.shape
    def bw(g):
        _accum(x, g.reshape(shape))
    return _result(x.data.reshape(-1).copy(), (x,), bw)


def concat0(parts: list[Tensor]) -> Tensor:
    sizes = [p.data.shape[0] for p in parts]
    offs = np.cumsum([0] + sizes)
    def bw(g):
        for p, o, s in zip(parts, offs[:-1], sizes):
            _accum(p, g[o:o + s])
    return _result(np.concatenate([p.data for p in parts], axis=0), tuple(parts), bw)


def stack0(parts: list[Tensor]) -> Tensor:
    """Stack 2-D tensors into (K,H,W)."""
    def bw(g):
        for k, p in enumerate(parts):
            _accum(p, g[k])
    return _result(np.stack([p.data for p in parts], axis=0), tuple(parts), bw)


def crop2d(x: Tensor, off_r: int, off_c: int, h: int, w: int) -> Tensor:
    if x.data.ndim != 2:
        raise ConfigError("crop2d expects a 2-D tensor")
    H, W = x.data.shape
    if off_r < 0 or off_c < 0 or off_r + h > H or off_c + w > W:
        raise ConfigError(f"crop2d: window ({off_r},{off_c},{h},{w}) outside {x.data.shape}")
    def bw(g):
        full = np.zeros_like(x.data)
        full[off_r:off_r + h, off_c:off_c + w] = g
        _accum(x, full)
    return _result(x.data[off_r:off_r + h, off_c:off_c + w].copy(), (x,), bw)


def conv2d_fw(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-correlation with zero same-padding. x:(Ci,H,W) w:(Co,Ci,k,k) b:(Co,)."""
    co, ci, k, _ = w.shape
    p = k // 2
    _, H, W = x.shape
    xp = np.pad(x, ((0, 0), (p, p), (p, p))) if p else x
    out = np.zeros((co, H * W), dtype=x.dtype)
    for dr in range(k):
        for dc in range(k):
            patch = np.ascontiguousarray(xp[:, dr:dr + H, dc:dc + W]).reshape(ci, H * W)
            out += w[:, :, dr, dc] @ patch
    out = out.reshape(co, H, W)
    out += b[:, None, None]
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded conv, kernel size 1 or 3, gradient for input/weight/bias."""
    if x.data.ndim != 3 or w.data.ndim != 4:
        raise ConfigError(f"conv2d: bad ranks x{x.data.shape} w{w.data.shape}")
    co, ci, k, k2 = w.data.shape
    if k != k2 or k not in (1, 3):
        raise ConfigError(f"conv2d: kernel must be 1x1 or 3x3, got {k}x{k2}")
    if x.data.shape[0] != ci:
        raise ConfigError(f"conv2d: input channels {x.data.shape[0]} != weight channels {ci}")
    if b.data.shape != (co,):
        raise ConfigError(f"conv2d: bias shape {b.data.shape} != ({co},)")
    p = k // 2
    _, H, W = x.data.shape
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p))) if p else x.data

    def bw(g):
        g2 = np.ascontiguousarray(g).reshape(co, H * W)
        dw = np.zeros_like(w.data)
        dxp = np.zeros_like(xp)
        for dr in range(k):
            for dc in range(k):
                patch = np.ascontiguousarray(xp[:, dr:dr + H, dc:dc + W]).reshape(ci, H * W)
                dw[:, :, dr, dc] = g2 @ patch.T
                dxp[:, dr:dr + H, dc:dc + W] += (w.data[:, :, dr, dc].T @ g2).reshape(ci, H, W)
        _accum(w, dw)
        _accum(b, g.sum(axis=(1, 2)))
        _accum(x, dxp[:, p:p + H, p:p + W] if p else dxp)

    return _result(conv2d_fw(x.data, w.data, b.data), (x, w, b), bw)


# ---------------------------------------------------------------------------
# stride-2 transposed convolution (8x8 kernel, replicate-padded border)

# Tap index tables per output phase: even outputs read kernel rows/cols
# {7,5,3,1} at input offsets {-2,-1,0,+1}; odd outputs read {6,4,2,0} at
# offsets {-1,0,+1,+2}. Derived from aligning output pixel 2i+d with input
# pixel i (output grid centered on the input grid).
_TAPS = {
    0: [(-2, 7), (-1, 5), (0, 3), (1, 1)],
    1: [(-1, 6), (0, 4), (1, 2), (2, 0)],
}
_TAP_IDX = {0: np.array([7, 5, 3, 1]), 1: np.array([6, 4, 2, 0])}
_PHASE_IX = {(pr, pc): np.ix_(_TAP_IDX[pr], _TAP_IDX[pc]) for pr in (0, 1) for pc in (0, 1)}


def _pad2_replicate(x: np.ndarray) -> np.ndarray:
    return np.pad(x, 2, mode="edge")


def _pad2_adjoint(gp: np.ndarray) -> np.ndarray:
    # fold gradient of the replicated border back onto the edge rows/cols
    g = gp.copy()
    g[2] += g[0] + g[1]
    g[-3] += g[-1] + g[-2]
    g = g[2:-2]
    g[:, 2] += g[:, 0] + g[:, 1]
    g[:, -3] += g[:, -1] + g[:, -2]
    return g[:, 2:-2].copy()


def _tap_windows(xp: np.ndarray, r0: int, c0: int, h: int, w: int) -> np.ndarray:
    """(h, w, 4, 4) sliding 4x4 tap view anchored at (r0, c0), no copy."""
    s0, s1 = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp[r0:, c0:], shape=(h, w, 4, 4), strides=(s0, s1, s0, s1), writeable=False)


def upsample2x_fw(x: np.ndarray, kern: np.ndarray) -> np.ndarray:
    """(H,W) -> (2H,2W) stride-2 transposed conv, border replicated."""
    H, W = x.shape
    xp = _pad2_replicate(x)
    out = np.empty((2 * H, 2 * W), dtype=x.dtype)
    for pr in (0, 1):
        for pc in (0, 1):
            phase_kern = kern[_PHASE_IX[pr, pc]].astype(x.dtype)
            windows = _tap_windows(xp, pr, pc, H, W)
            out[pr::2, pc::2] = np.tensordot(windows, phase_kern, axes=([2, 3], [0, 1]))
    return out


def upsample2x(x: Tensor, kern: Tensor) -> Tensor:
    """Stride-2 transposed convolution of a single grid with a shared 8x8 kernel.

    Output pixel (2i+d, 2j+e) is a 16-tap dot product centered on input
    pixel (i, j); taps that fall outside the grid read the nearest edge
    value, so a kernel whose per-phase taps sum to 1 maps constants to
    constants everywhere, edges included.
    """
    if x.data.ndim != 2:
        raise ConfigError("upsample2x expects a 2-D grid")
    if kern.data.shape != (8, 8):
        raise ConfigError(f"upsample2x kernel must be 8x8, got {kern.data.shape}")
    H, W = x.data.shape
    xp = _pad2_replicate(x.data)

    def bw(g):
        dk = np.zeros_like(kern.data)
        dxp = np.zeros_like(xp)
        for pr in (0, 1):
            for pc in (0, 1):
                gp = g[pr::2, pc::2]
                windows = _tap_windows(xp, pr, pc, H, W)
                dk[_PHASE_IX[pr, pc]] += np.tensordot(
                    gp, windows, axes=([0, 1], [0, 1]))
                phase_kern = kern.data[_PHASE_IX[pr, pc]]
                for a in range(4):
                    for bb in range(4):
                        dxp[pr + a:pr + a + H, pc + bb:pc + bb + W] += phase_kern[a, bb] * gp
        _accum(kern, dk)
        _accum(x, _pad2_adjoint(dxp))

    return _result(upsample2x_fw(x.data, kern.data), (x, kern), bw)


# ---------------------------------------------------------------------------
# causal context gather

# Offsets (drow, dcol) read in this order; positions outside the grid read 0.
CONTEXT_OFFSETS = ((0, -1), (0, -2), (-1, -2), (-1, -1), (-1, 0), (-1, 1), (-1, 2), (-2, 0))


def gather_context_fw(grid: np.ndarray) -> np.ndarray:
    """(H,W) -> (H*W, 8) causal context rows in raster order."""
    H, W = grid.shape
    gp = np.pad(grid, ((2, 0), (2, 2)))
    cols = [gp[2 + dr:2 + dr + H, 2 + dc:2 + dc + W].reshape(-1) for dr, dc in CONTEXT_OFFSETS]
    return np.stack(cols, axis=1)


def gather_context(grid: Tensor) -> Tensor:
    if grid.data.ndim != 2:
        raise ConfigError("gather_context expects a 2-D grid")
    H, W = grid.data.shape

    def bw(g):
        dgp = np.zeros((H + 2, W + 4), dtype=grid.data.dtype)
        for i, (dr, dc) in enumerate(CONTEXT_OFFSETS):
            dgp[2 + dr:2 + dr + H, 2 + dc:2 + dc + W] += g[:, i].reshape(H, W)
        _accum(grid, dgp[2:, 2:-2])

    return _result(gather_context_fw(grid.data), (grid,), bw)


# ---------------------------------------------------------------------------
# discretized-Laplace coding cost

RATE_PROB_FLOOR = 2.0 ** -16
_LN2 = float(np.log(2.0))


def laplace_mass_fw(v: np.ndarray, mu: np.ndarray, b: np.ndarray) -> np.ndarray:
    """P(v-0.5 < X <= v+0.5) for X ~ Laplace(mu, b), evaluated stably."""
    a = v - 0.5 - mu
    c = v + 0.5 - mu
    both_left = c <= 0
    both_right = a >= 0
    # exponent arguments are clamped to <= 0 so the branches numpy
    # evaluates but np.where discards cannot overflow
    neg_c = np.minimum(c, 0.0)
    pos_a = np.maximum(a, 0.0)
    m_left = 0.5 * np.exp(neg_c / b) * (1.0 - np.exp(-1.0 / b))
    m_right = 0.5 * np.exp(-pos_a / b) * (1.0 - np.exp(-1.0 / b))
    m_mid = 1.0 - 0.5 * (np.exp(np.minimum(a, 0.0) / b) + np.exp(-np.maximum(c, 0.0) / b))
    return np.where(both_left, m_left, np.where(both_right, m_right, m_mid))


def laplace_rate_fw(v: np.ndarray, mu: np.ndarray, b: np.ndarray) -> np.ndarray:
    mass = np.maximum(laplace_mass_fw(v, mu, b), RATE_PROB_FLOOR)
    return -np.log2(mass)


def laplace_rate(v: Tensor, mu: Tensor, b: Tensor) -> Tensor:
    """Coding cost in bits of each value under Laplace(mu, b), one-wide bins.

    Floored at 2^-16 probability (16 bits max). Differentiable in all three
    arguments; the gradient is zero wherever the floor is active.
    """
    _same_shape(v, mu, "laplace_rate")
    _same_shape(v, b, "laplace_rate")
    vv, mm, bb = v.data, mu.data, b.data
    mass = laplace_mass_fw(vv, mm, bb)
    floored = mass < RATE_PROB_FLOOR

    def bw(g):
        a = vv - 0.5 - mm
        c = vv + 0.5 - mm
        fa = np.exp(-np.abs(a) / bb) / (2.0 * bb)
        fc = np.exp(-np.abs(c) / bb) / (2.0 * bb)
        dmass_dv = fc - fa
        dmass_db = -(c * fc - a * fa) / bb
        coeff = np.where(floored, 0.0, -g / (np.maximum(mass, RATE_PROB_FLOOR) * _LN2))
        _accum(v, (coeff * dmass_dv).astype(vv.dtype))
        _accum(mu, (-coeff * dmass_dv).astype(mm.dtype))
        _accum(b, (coeff * dmass_db).astype(bb.dtype))

    return _result(laplace_rate_fw(vv, mm, bb).astype(vv.dtype), (v, mu, b), bw)


# ---------------------------------------------------------------------------
# Adam


class AdamState:
    """First/second moment accumulators for one parameter set."""

    def __init__(self, params: list[Tensor], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params: list[Tensor], lr: float, state: AdamState):
    """One bias-corrected Adam update from the grads currently on params."""
    if lr <= 0:
        raise ConfigError(f"adam_step: lr must be positive, got {lr}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for i, p in enumerate(params):
        g = p.grad
        if g is None:
            continue
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        mhat = state.m[i] / c1
        vhat = state.v[i] / c2
        p.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.data.dtype)
