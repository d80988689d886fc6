"""Round-trip, rate-fidelity and symbol-model checks for the range coder."""

import numpy as np
import pytest

from clric import autograd as ag
from clric import model as m
from clric import rangecoder as rc
from clric.autograd import Tensor
from clric.model import ArmWeights


def random_cdf(rng, width=None, s_min=None):
    width = width or int(rng.integers(2, 64))
    s_min = s_min if s_min is not None else int(rng.integers(-100, 100))
    counts = rc._apportion(rng.random(width) + 1e-3)
    cum = np.zeros(width + 1, dtype=np.int64)
    np.cumsum(counts, out=cum[1:])
    return rc.QuantizedCdf(s_min, s_min + width - 1, cum.tolist())


def code_sequence(pairs):
    enc = rc.RangeEncoder()
    for sym, cdf in pairs:
        enc.encode_symbol(sym, cdf)
    payload = enc.finish()
    dec = rc.RangeDecoder(payload)
    return payload, [dec.decode_symbol(cdf) for _, cdf in pairs]


# ---------------------------------------------------------------------------
# quantize_cdf


def test_cdf_symmetric_peak_at_mean():
    cdf = rc.quantize_cdf(0.0, 1.0, -8, 8)
    counts = np.diff(cdf.cum)
    assert counts.tolist() == counts[::-1].tolist()
    assert counts.argmax() == 8  # symbol 0
    assert cdf.cum[0] == 0 and cdf.cum[-1] == rc.CDF_TOTAL


@pytest.mark.parametrize("seed", range(20))
def test_cdf_total_is_exact(seed):
    rng = np.random.default_rng(seed)
    mu = float(rng.normal() * 20)
    b = float(np.exp(rng.normal() * 3))
    cdf = rc.quantize_cdf(mu, max(min(b, 1e3), 1e-2), -int(rng.integers(1, 300)), int(rng.integers(0, 300)))
    counts = np.diff(cdf.cum)
    assert counts.sum() == rc.CDF_TOTAL
    assert counts.min() >= 1
    assert (np.diff(cdf.cum) > 0).all()  # strictly increasing table


def test_cdf_near_uniform_at_max_scale():
    # measured construction: the maximum deviation from 65536/17 is ~15
    cdf = rc.quantize_cdf(0.0, 1e3, -8, 8)
    counts = np.diff(cdf.cum)
    assert np.abs(counts - rc.CDF_TOTAL / 17).max() <= 16
    assert counts.sum() == rc.CDF_TOTAL


def test_cdf_rejects_empty_or_oversized_range():
    with pytest.raises(ag.ConfigError):
        rc.quantize_cdf(0.0, 1.0, 3, 2)
    with pytest.raises(ag.ConfigError):
        rc.quantize_cdf(0.0, 1.0, 0, rc.MAX_RANGE_WIDTH + 1)


# ---------------------------------------------------------------------------
# symbol round trips


def test_round_trip_small():
    rng = np.random.default_rng(0)
    pool = [random_cdf(rng) for _ in range(64)]
    pairs = []
    for _ in range(10_000):
        cdf = pool[int(rng.integers(0, len(pool)))]
        pairs.append((int(rng.integers(cdf.s_min, cdf.s_max + 1)), cdf))
    _, decoded = code_sequence(pairs)
    assert decoded == [s for s, _ in pairs]


def test_encoder_rejects_out_of_range_symbol():
    cdf = rc.quantize_cdf(0.0, 1.0, -4, 4)
    enc = rc.RangeEncoder()
    with pytest.raises(rc.SymbolRangeError):
        enc.encode_symbol(5, cdf)


def test_decoder_raises_on_truncation():
    cdf = rc.quantize_cdf(0.0, 1.0, -4, 4)
    enc = rc.RangeEncoder()
    for _ in range(100):
        enc.encode_symbol(3, cdf)
    payload = enc.finish()
    with pytest.raises(rc.CorruptStreamError):
        dec = rc.RangeDecoder(payload[:4])  # shorter than the 5-byte preamble
    dec = rc.RangeDecoder(payload[:12])
    with pytest.raises(rc.CorruptStreamError):
        for _ in range(100):
            dec.decode_symbol(cdf)


def test_uniform_256_codes_at_one_byte_per_symbol():
    rng = np.random.default_rng(0)
    cum = [i * 256 for i in range(257)]
    cdf = rc.QuantizedCdf(0, 255, cum)
    pairs = [(int(s), cdf) for s in rng.integers(0, 256, size=4096)]
    payload, decoded = code_sequence(pairs)
    assert abs(len(payload) - 4096) <= 8
    assert decoded == [s for s, _ in pairs]


def test_most_probable_symbol_is_nearly_free():
    cdf = rc.QuantizedCdf(0, 1, [0, 1, rc.CDF_TOTAL])
    enc = rc.RangeEncoder()
    for _ in range(10_000):
        enc.encode_symbol(1, cdf)
    assert len(enc.finish()) * 8 / 10_000 < 0.01


def test_flush_overhead_is_bounded():
    enc = rc.RangeEncoder()
    assert len(enc.finish()) <= 8  # empty stream is flush bytes only


# ---------------------------------------------------------------------------
# grid coding


def random_arm(rng) -> ArmWeights:
    cfg = m.ArchConfig(channels=1, latent_height=4, latent_width=4, num_grids=1)
    return m.init_parameters(cfg, rng).arm


@pytest.mark.parametrize("seed", range(10))
def test_grid_round_trip_random(seed):
    rng = np.random.default_rng(seed)
    arm = random_arm(rng)
    h, w = int(rng.integers(1, 24)), int(rng.integers(1, 24))
    grid = rng.integers(-15, 16, size=(h, w)).astype(np.int32)
    s_min, s_max = int(grid.min()), int(grid.max())
    enc = rc.RangeEncoder()
    rc.encode_grid(grid, arm, enc, s_min, s_max)
    dec = rc.RangeDecoder(enc.finish())
    out = rc.decode_grid((h, w), arm, dec, s_min, s_max)
    np.testing.assert_array_equal(out, grid)


def test_zero_grid_under_zero_arm_codes_cheaply():
    grid = np.zeros((40, 40), dtype=np.int32)
    enc = rc.RangeEncoder()
    rc.encode_grid(grid, ArmWeights.zeros(), enc, -2, 2)
    bits_per_symbol = len(enc.finish()) * 8 / grid.size
    assert bits_per_symbol < 1.5


def test_encode_grid_rejects_out_of_bounds_values():
    grid = np.full((4, 4), 9, dtype=np.int32)
    with pytest.raises(rc.SymbolRangeError):
        rc.encode_grid(grid, ArmWeights.zeros(), rc.RangeEncoder(), -2, 2)


@pytest.mark.parametrize("seed", range(8))
def test_payload_matches_cdf_estimate(seed):
    rng = np.random.default_rng(1000 + seed)
    arm = random_arm(rng)
    h, w = int(rng.integers(8, 40)), int(rng.integers(8, 40))
    grid = rng.integers(-12, 13, size=(h, w)).astype(np.int32)
    s_min, s_max = int(grid.min()), int(grid.max())
    enc = rc.RangeEncoder()
    rc.encode_grid(grid, arm, enc, s_min, s_max)
    payload_bits = len(enc.finish()) * 8
    estimate = rc.estimate_grid_bits(grid, arm, s_min, s_max)
    assert abs(payload_bits - estimate) <= max(64.0, 0.01 * payload_bits)


def test_context_model_beats_static_laplace_on_ar1_field():
    # AR(1)-correlated integers: a trained context model must code them in
    # fewer bits than the best single Laplace fitted to the whole grid
    rng = np.random.default_rng(99)
    rho, n = 0.9, 32
    x = np.zeros((n, n))
    eps = rng.normal(size=(n, n))
    for r in range(n):
        for c in range(n):
            up = x[r - 1, c] if r else 0.0
            left = x[r, c - 1] if c else 0.0
            diag = x[r - 1, c - 1] if r and c else 0.0
            x[r, c] = rho * up + rho * left - rho * rho * diag + eps[r, c]
    grid = m.quantize_round((2.0 * x).astype(np.float32)).astype(np.int32)
    s_min, s_max = int(grid.min()), int(grid.max())

    mu = float(np.mean(grid))
    b_fit = max(float(np.mean(np.abs(grid - mu))), 0.1)
    static_cdf = rc.quantize_cdf(mu, b_fit, s_min, s_max)
    enc = rc.RangeEncoder()
    for s in grid.reshape(-1):
        enc.encode_symbol(int(s), static_cdf)
    static_bits = len(enc.finish()) * 8

    cfg = m.ArchConfig(channels=1, latent_height=n, latent_width=n, num_grids=1)
    params = m.init_parameters(cfg, np.random.default_rng(7))
    names = ["w1", "b1", "w2", "b2", "w3", "b3"]
    tens = {nm: Tensor(a.copy(), requires_grad=True) for nm, a in zip(names, params.arm.arrays())}
    st = ag.AdamState(list(tens.values()))
    gt = Tensor(grid.astype(np.float32))
    for _ in range(400):
        for t in tens.values():
            t.zero_grad()
        mu_t, b_t = m.arm_forward_batch(ag.gather_context(gt), tens)
        ag.backward(ag.tsum(ag.laplace_rate(ag.flatten(gt), mu_t, b_t)))
        ag.adam_step(list(tens.values()), 0.01, st)
    arm = ArmWeights(*[t.data for t in tens.values()])

    enc = rc.RangeEncoder()
    rc.encode_grid(grid, arm, enc, s_min, s_max)
    arm_bits = len(enc.finish()) * 8
    assert arm_bits < static_bits


# ---------------------------------------------------------------------------
# weight coding


def test_weight_round_trip_and_reconstruction_bound():
    rng = np.random.default_rng(3)
    weights = rng.normal(size=300).astype(np.float32)
    step = 2.0 ** -8
    enc = rc.RangeEncoder()
    fixed = rc.encode_weights(weights, step, enc)
    dec = rc.RangeDecoder(enc.finish())
    out = rc.decode_weights(300, step, fixed, dec)
    assert np.abs(out - weights).max() <= step / 2 + 1e-9
    # re-encoding the reconstruction is a fixed point
    enc2 = rc.RangeEncoder()
    fixed2 = rc.encode_weights(out, step, enc2)
    dec2 = rc.RangeDecoder(enc2.finish())
    np.testing.assert_array_equal(rc.decode_weights(300, step, fixed2, dec2), out)


def test_zero_weights_code_under_two_bits_each():
    enc = rc.RangeEncoder()
    fixed = rc.encode_weights(np.zeros(162, dtype=np.float32), 0.5, enc)
    payload = enc.finish()
    assert len(payload) * 8 / 162 < 2.0
    dec = rc.RangeDecoder(payload)
    np.testing.assert_array_equal(rc.decode_weights(162, 0.5, fixed, dec), np.zeros(162))


def test_weight_symbols_bound_enforced():
    with pytest.raises(rc.SymbolRangeError):
        rc.weight_symbols(np.array([100.0]), 2.0 ** -12)


def test_weight_scale_fixed_point():
    assert rc.weight_scale_from_fixed(rc.weight_scale_fixed(np.zeros(10))) == pytest.approx(0.1, abs=1 / 256)
    big = rc.weight_scale_fixed(np.full(10, 1e6))
    assert big == 0xFFFF  # clamped to the 8.8 ceiling
