"""End-to-end checks of the command-line surface via subprocesses."""

import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from clric import bitstream as bs
from clric import model as md
from clric import synthetic


def run_cli(*args, env=None):
    cmd = [sys.executable, "-m", "clric", *[str(a) for a in args]]
    return subprocess.run(cmd, capture_output=True, text=True, env=env)


def stdout_json(proc):
    return json.loads(proc.stdout)


@pytest.fixture(scope="module")
def latent_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("latents") / "tiny.clrt"
    lt = synthetic.smooth_latent(channels=2, height=16, width=24,
                                 image_height=128, image_width=192, seed=17)
    bs.write_latent(lt, path)
    return path


@pytest.fixture(scope="module")
def encoded(latent_file, tmp_path_factory):
    """One fast encode shared by the read-only CLI tests."""
    out = tmp_path_factory.mktemp("streams") / "tiny.clrc"
    proc = run_cli("encode", "--latent", latent_file, "--out", out,
                   "--lambda", "0.001", "--seed", "5", "--iters", "60")
    assert proc.returncode == 0, proc.stderr
    return out, stdout_json(proc)


# ---------------------------------------------------------------------------
# encode


def test_encode_missing_input_exits_2_and_writes_nothing(tmp_path):
    out = tmp_path / "never.clrc"
    proc = run_cli("encode", "--latent", tmp_path / "absent.clrt", "--out", out,
                   "--lambda", "0.001")
    assert proc.returncode == 2
    assert not out.exists()
    assert proc.stdout == ""


def test_encode_record_schema(encoded):
    _, record = encoded
    assert record["schema_version"] == 1
    assert record["command"] == "encode"
    assert record["seed"] == 5
    assert record["bpp"] == pytest.approx(8.0 * record["actual_bytes"] / (128 * 192))
    for key in ("bpp", "latent_mse", "rate_estimate_bits", "wall_time_s",
                "initial_loss", "final_loss"):
        assert np.isfinite(record[key]), key


def test_encode_rate_estimate_tracks_file_size(encoded):
    _, record = encoded
    file_bits = 8 * record["actual_bytes"]
    assert abs(record["rate_estimate_bits"] - file_bits) <= max(64.0, 0.01 * file_bits)


def test_encode_is_deterministic(latent_file, tmp_path):
    a, b = tmp_path / "a.clrc", tmp_path / "b.clrc"
    ra = run_cli("encode", "--latent", latent_file, "--out", a, "--lambda", "0.001",
                 "--seed", "5", "--iters", "60")
    rb = run_cli("encode", "--latent", latent_file, "--out", b, "--lambda", "0.001",
                 "--seed", "5", "--iters", "60")
    assert ra.returncode == rb.returncode == 0
    assert a.read_bytes() == b.read_bytes()


def test_encode_env_seed_fallback(latent_file, tmp_path):
    import os
    env = dict(os.environ, CLRIC_SEED="5")
    out = tmp_path / "env.clrc"
    proc = run_cli("encode", "--latent", latent_file, "--out", out, "--lambda", "0.001",
                   "--iters", "60", env=env)
    assert proc.returncode == 0
    assert stdout_json(proc)["seed"] == 5


# ---------------------------------------------------------------------------
# decode


def test_decode_matches_encoder_reconstruction(encoded, tmp_path):
    stream_path, record = encoded
    rec_path = tmp_path / "rec.clrt"
    proc = run_cli("decode", "--in", stream_path, "--latent-out", rec_path)
    assert proc.returncode == 0, proc.stderr
    decoded_params, header = bs.parse_bitstream(stream_path.read_bytes())
    expect = md.decode_latent(decoded_params)
    got = bs.read_latent(rec_path)
    assert got.values.tobytes() == expect.tobytes()
    assert (got.image_height, got.image_width) == (128, 192)


def test_decode_is_rerunnable_byte_identical(encoded, tmp_path):
    stream_path, _ = encoded
    r1, r2 = tmp_path / "r1.clrt", tmp_path / "r2.clrt"
    assert run_cli("decode", "--in", stream_path, "--latent-out", r1).returncode == 0
    assert run_cli("decode", "--in", stream_path, "--latent-out", r2).returncode == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_decode_truncated_stream_exits_3(encoded, tmp_path):
    stream_path, _ = encoded
    bad = tmp_path / "bad.clrc"
    bad.write_bytes(stream_path.read_bytes()[:-10])
    proc = run_cli("decode", "--in", bad, "--latent-out", tmp_path / "x.clrt")
    assert proc.returncode == 3
    assert "corrupt" in proc.stderr.lower()


def test_decode_missing_file_exits_2(tmp_path):
    proc = run_cli("decode", "--in", tmp_path / "none.clrc", "--latent-out", tmp_path / "x.clrt")
    assert proc.returncode == 2


# ---------------------------------------------------------------------------
# rd-sweep


def test_rd_sweep_writes_csv_and_duplicate_lambdas_match(latent_file, tmp_path):
    out = tmp_path / "sweep.csv"
    proc = run_cli("rd-sweep", "--latent", latent_file, "--lambdas", "0.001,0.001",
                   "--out", out, "--seed", "5", "--iters", "60")
    assert proc.returncode == 0, proc.stderr
    with open(out, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["lambda"] for r in rows] == ["0.001", "0.001"]
    assert rows[0] == rows[1]  # determinism: identical rows
    record = stdout_json(proc)
    assert record["rows"][0]["bpp"] == float(rows[0]["bpp"])  # CSV round-trips


def test_rd_sweep_needs_two_lambdas(latent_file, tmp_path):
    proc = run_cli("rd-sweep", "--latent", latent_file, "--lambdas", "0.5",
                   "--out", tmp_path / "x.csv")
    assert proc.returncode == 2


# ---------------------------------------------------------------------------
# count-macs


def test_count_macs_default_config_table_sizes():
    big = stdout_json(run_cli("count-macs", "--image-height", 1363, "--image-width", 2048,
                              "--latent-height", 170, "--latent-width", 256))
    small = stdout_json(run_cli("count-macs", "--image-height", 512, "--image-width", 768,
                                "--latent-height", 64, "--latent-width", 96))
    assert 20.0 <= big["mac_per_pixel"] <= 30.0
    assert 20.0 <= small["mac_per_pixel"] <= 32.0
    assert big["mac_per_pixel"] <= small["mac_per_pixel"]
    parts = big["breakdown_per_pixel"]
    total = parts["arm"] + parts["upsampler"] + parts["synthesis"] + parts["fixed"]
    assert total == pytest.approx(big["mac_per_pixel"])


def test_count_macs_width_monotone():
    lo = stdout_json(run_cli("count-macs", "--image-height", 512, "--image-width", 768,
                             "--latent-height", 64, "--latent-width", 96, "--hidden-width", 16))
    hi = stdout_json(run_cli("count-macs", "--image-height", 512, "--image-width", 768,
                             "--latent-height", 64, "--latent-width", 96, "--hidden-width", 32))
    assert hi["breakdown_per_pixel"]["synthesis"] > lo["breakdown_per_pixel"]["synthesis"]


def test_count_macs_from_stream(encoded):
    stream_path, _ = encoded
    rec = stdout_json(run_cli("count-macs", "--in", stream_path))
    assert rec["image_height"] == 128 and rec["image_width"] == 192
    assert rec["mac_per_pixel"] > 0


def test_count_macs_requires_dims_or_stream():
    proc = run_cli("count-macs")
    assert proc.returncode == 2


# ---------------------------------------------------------------------------
# eval


def test_eval_identical_files(latent_file, tmp_path):
    rec = stdout_json(run_cli("eval", "--ref", latent_file, "--rec", latent_file))
    assert rec["latent_mse"] == 0.0
    assert rec["latent_psnr_db"] == "inf"
    assert all(v == 0.0 for v in rec["per_channel_mse"])


def test_eval_constant_offset(latent_file, tmp_path):
    ref = bs.read_latent(latent_file)
    shifted = md.LatentTensor(values=ref.values + 1.0, image_height=ref.image_height,
                              image_width=ref.image_width)
    rec_path = tmp_path / "shift.clrt"
    bs.write_latent(shifted, rec_path)
    rec = stdout_json(run_cli("eval", "--ref", latent_file, "--rec", rec_path))
    assert rec["latent_mse"] == pytest.approx(1.0, rel=1e-6)


def test_eval_matches_independent_computation(latent_file, tmp_path):
    rng = np.random.default_rng(3)
    ref = bs.read_latent(latent_file)
    noisy = md.LatentTensor(values=(ref.values + rng.normal(size=ref.values.shape) * 0.3).astype(np.float32),
                            image_height=ref.image_height, image_width=ref.image_width)
    rec_path = tmp_path / "noisy.clrt"
    bs.write_latent(noisy, rec_path)
    rec = stdout_json(run_cli("eval", "--ref", latent_file, "--rec", rec_path))
    # independent oracle: plain numpy arithmetic on the files
    a = bs.read_latent(latent_file).values.astype(np.float64)
    b = bs.read_latent(rec_path).values.astype(np.float64)
    mse = float(np.mean((a - b) ** 2))
    peak = float(a.max() - a.min())
    psnr = 10.0 * np.log10(peak * peak / mse)
    assert rec["latent_mse"] == pytest.approx(mse, abs=1e-6)
    assert rec["latent_psnr_db"] == pytest.approx(psnr, abs=1e-6)
    assert rec["per_channel_mse"][0] == pytest.approx(float(np.mean((a[0] - b[0]) ** 2)), abs=1e-6)


def test_eval_shape_mismatch_exits_2(latent_file, tmp_path):
    other = synthetic.smooth_latent(channels=1, height=8, width=8,
                                    image_height=64, image_width=64, seed=1)
    other_path = tmp_path / "other.clrt"
    bs.write_latent(other, other_path)
    proc = run_cli("eval", "--ref", latent_file, "--rec", other_path)
    assert proc.returncode == 2
    assert "mismatch" in proc.stderr


def test_lambda_zero_is_max_quality(latent_file, tmp_path):
    base = run_cli("encode", "--latent", latent_file, "--out", tmp_path / "l0.clrc",
                   "--lambda", "0", "--seed", "5", "--iters", "60")
    high = run_cli("encode", "--latent", latent_file, "--out", tmp_path / "l1.clrc",
                   "--lambda", "4.0", "--seed", "5", "--iters", "60")
    assert base.returncode == 0 and high.returncode == 0
    assert stdout_json(base)["latent_mse"] <= stdout_json(high)["latent_mse"]
