"""Command-line surface: encode, decode, rd-sweep, count-macs, eval.

Machine-readable JSON goes to stdout, diagnostics to stderr. Exit codes:
0 ok, 2 usage or file I/O, 3 corrupt stream, 4 training failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import bitstream as bs
from . import model as md
from . import rangecoder as rc
from .autograd import ConfigError
from .training import RdConfig, TrainingError, train

EXIT_OK = 0
EXIT_USAGE_IO = 2
EXIT_CORRUPT = 3
EXIT_TRAINING = 4
SCHEMA_VERSION = 1

_INF = float("inf")


def _jsonable(value):
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _emit(record: dict):
    record = {"schema_version": SCHEMA_VERSION, **record}
    print(json.dumps(_jsonable(record)))


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _resolve_seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CLRIC_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"CLRIC_SEED={env!r} is not an integer")
    return 0


def _build_config(args, lam: float) -> RdConfig:
    seed = _resolve_seed(args)
    kw = {"threads": args.threads}
    if args.preset == "paper":
        cfg = RdConfig.paper_preset(lam, seed=seed, **kw)
    else:
        cfg = RdConfig.smoke_preset(lam, seed=seed, **kw)
    if args.iters is not None:
        # keep the hard-quantization tail a fraction of a shortened run
        tail = min(cfg.hard_quant_tail, max(args.iters // 4, 1))
        cfg = RdConfig(lam=lam, seed=seed, threads=args.threads,
                       warmup_candidates=cfg.warmup_candidates, warmup_iters=cfg.warmup_iters,
                       finalist_count=cfg.finalist_count, finalist_iters=cfg.finalist_iters,
                       main_iters=args.iters, total_iterations=None,
                       hard_quant_tail=tail)
    return cfg


def _encode_once(latent, args, lam: float):
    config = _build_config(args, lam)
    params, report = train(latent, config)
    file_bits_estimate = report.rate_estimate_bits + 8.0 * bs.header_size(config.num_grids)
    record = {
        "command": "encode",
        "config": {
            "lambda": lam,
            "preset": args.preset,
            "iterations": config.total_iterations,
            "threads": config.threads,
        },
        "seed": config.seed,
        "bpp": report.bpp,
        "latent_mse": report.final_mse,
        "rate_estimate_bits": file_bits_estimate,
        "payload_estimate_bits": report.rate_estimate_bits,
        "actual_bytes": report.actual_bytes,
        "initial_loss": report.initial_loss,
        "final_loss": report.final_loss,
        "step_exponents": list(report.step_exponents),
        "total_steps": report.total_steps,
        "wall_time_s": report.wall_time_s,
    }
    return params, report, record


def cmd_encode(args) -> int:
    try:
        latent = bs.read_latent(args.latent)
    except OSError as e:
        return _fail(EXIT_USAGE_IO, f"cannot read latent: {e}")
    except bs.FormatError as e:
        return _fail(EXIT_USAGE_IO, f"bad latent file: {e}")
    try:
        _, report, record = _encode_once(latent, args, args.lam)
    except (TrainingError, ConfigError) as e:
        return _fail(EXIT_TRAINING, f"training failed: {e}")
    try:
        bs.write_bitstream(report.bitstream, args.out)
    except OSError as e:
        return _fail(EXIT_USAGE_IO, f"cannot write bitstream: {e}")
    _emit(record)
    return EXIT_OK


def cmd_decode(args) -> int:
    try:
        data = bs.read_bitstream(args.inp)
    except OSError as e:
        return _fail(EXIT_USAGE_IO, f"cannot read bitstream: {e}")
    try:
        params, header = bs.parse_bitstream(data)
        values = md.decode_latent(params)
    except (bs.FormatError, rc.CorruptStreamError, rc.SymbolRangeError, ConfigError) as e:
        return _fail(EXIT_CORRUPT, f"corrupt stream: {e}")
    latent = md.LatentTensor(values=values, image_height=header.image_height,
                             image_width=header.image_width)
    try:
        bs.write_latent(latent, args.latent_out)
    except OSError as e:
        return _fail(EXIT_USAGE_IO, f"cannot write latent: {e}")
    _emit({
        "command": "decode",
        "latent_out": str(args.latent_out),
        "channels": latent.channels,
        "latent_height": latent.latent_height,
        "latent_width": latent.latent_width,
        "image_height": latent.image_height,
        "image_width": latent.image_width,
    })
    return EXIT_OK


def cmd_rd_sweep(args) -> int:
    lambdas = []
    try:
        lambdas = [float(tok) for tok in args.lambdas.split(",") if tok.strip() != ""]
    except ValueError:
        return _fail(EXIT_USAGE_IO, f"cannot parse --lambdas {args.lambdas!r}")
    if len(lambdas) < 2:
        return _fail(EXIT_USAGE_IO, "rd-sweep needs at least two lambda values")
    try:
        latent = bs.read_latent(args.latent)
    except OSError as e:
        return _fail(EXIT_USAGE_IO, f"cannot read latent: {e}")
    except bs.FormatError as e:
        return _fail(EXIT_USAGE_IO, f"bad latent file: {e}")

    rows = []
    failures = 0
    for lam in lambdas:
        try:
            _, report, _ = _encode_once(latent, args, lam)
            rows.append({"lambda": lam, "bpp": report.bpp, "latent_mse": report.final_mse,
                         "bytes": report.actual_bytes, "seed": _resolve_seed(args),
                         "initial_loss": report.initial_loss, "final_loss": report.final_loss})
        except (TrainingError, ConfigError) as e:
            print(f"error: lambda={lam}: {e}", file=sys.stderr)
            rows.append({"lambda": lam, "bpp": None, "latent_mse": None, "bytes": None,
                         "seed": _resolve_seed(args), "error": str(e)})
            failures += 1
    try:
        with open(args.out, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=["lambda", "bpp", "latent_mse", "bytes", "seed"],
                                    extrasaction="ignore")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
    except OSError as e:
        return _fail(EXIT_USAGE_IO, f"cannot write csv: {e}")
    _emit({"command": "rd-sweep", "rows": rows, "csv": str(args.out)})
    return EXIT_TRAINING if failures else EXIT_OK


def cmd_count_macs(args) -> int:
    if args.inp is not None:
        try:
            header = bs.parse_header(bs.read_bitstream(args.inp))
        except OSError as e:
            return _fail(EXIT_USAGE_IO, f"cannot read bitstream: {e}")
        except (bs.FormatError, rc.CorruptStreamError) as e:
            return _fail(EXIT_CORRUPT, f"corrupt stream: {e}")
        cfg = header.arch_config()
        image_h, image_w = header.image_height, header.image_width
    else:
        missing = [name for name, v in (("--image-height", args.image_height),
                                        ("--image-width", args.image_width),
                                        ("--latent-height", args.latent_height),
                                        ("--latent-width", args.latent_width)) if v is None]
        if missing:
            return _fail(EXIT_USAGE_IO, f"count-macs needs --in or {', '.join(missing)}")
        try:
            cfg = md.ArchConfig(channels=args.channels, latent_height=args.latent_height,
                                latent_width=args.latent_width, num_grids=args.grids,
                                hidden_width=args.hidden_width)
        except ConfigError as e:
            return _fail(EXIT_USAGE_IO, str(e))
        image_h, image_w = args.image_height, args.image_width
    rep = md.count_macs(cfg, image_h, image_w)
    _emit({
        "command": "count-macs",
        "image_height": image_h,
        "image_width": image_w,
        "channels": cfg.channels,
        "latent_height": cfg.latent_height,
        "latent_width": cfg.latent_width,
        "num_grids": cfg.num_grids,
        "hidden_width": cfg.hidden_width,
        "mac_total": rep.total,
        "mac_per_pixel": rep.per_pixel,
        "breakdown_per_pixel": rep.breakdown_per_pixel(),
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        ref = bs.read_latent(args.ref)
        rec = bs.read_latent(args.rec)
    except OSError as e:
        return _fail(EXIT_USAGE_IO, f"cannot read latent: {e}")
    except bs.FormatError as e:
        return _fail(EXIT_USAGE_IO, f"bad latent file: {e}")
    if ref.values.shape != rec.values.shape:
        return _fail(EXIT_USAGE_IO,
                     f"shape mismatch {ref.values.shape} vs {rec.values.shape}")
    diff = ref.values.astype(np.float64) - rec.values.astype(np.float64)
    mse = float(np.mean(diff * diff))
    per_channel = [float(np.mean(d * d)) for d in diff]
    peak = float(ref.values.max() - ref.values.min())
    psnr = _INF if mse == 0.0 else (_INF if peak == 0.0 else 10.0 * math.log10(peak * peak / mse))
    _emit({
        "command": "eval",
        "latent_mse": mse,
        "latent_psnr_db": psnr,
        "psnr_peak": peak,
        "per_channel_mse": per_channel,
    })
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clric",
                                     description="Per-image overfitted codec for autoencoder latents")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_training_flags(p):
        p.add_argument("--preset", choices=["smoke", "paper"], default="smoke",
                       help="training budget (smoke: 550 steps, paper: 15900 steps)")
        p.add_argument("--iters", type=int, default=None, help="override main-phase iterations")
        p.add_argument("--seed", type=int, default=None,
                       help="run seed (falls back to env CLRIC_SEED, then 0)")
        p.add_argument("--threads", type=int, default=1,
                       help="parallel warm-up candidates (default 1, deterministic either way)")

    p = sub.add_parser("encode", help="overfit a latent and write a bitstream")
    p.add_argument("--latent", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="rate weight in the objective")
    add_training_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="reconstruct the latent from a bitstream")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--latent-out", dest="latent_out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("rd-sweep", help="encode at several lambdas, write a CSV")
    p.add_argument("--latent", required=True)
    p.add_argument("--lambdas", required=True, help="comma-separated lambda values")
    p.add_argument("--out", required=True)
    add_training_flags(p)
    p.set_defaults(func=cmd_rd_sweep)

    p = sub.add_parser("count-macs", help="analytic decoder complexity")
    p.add_argument("--in", dest="inp", default=None, help="read dimensions from a bitstream")
    p.add_argument("--image-height", type=int, default=None)
    p.add_argument("--image-width", type=int, default=None)
    p.add_argument("--latent-height", type=int, default=None)
    p.add_argument("--latent-width", type=int, default=None)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--grids", type=int, default=md.DEFAULT_GRIDS)
    p.add_argument("--hidden-width", type=int, default=md.DEFAULT_HIDDEN_WIDTH)
    p.set_defaults(func=cmd_count_macs)

    p = sub.add_parser("eval", help="latent-domain metrics between two .clrt files")
    p.add_argument("--ref", required=True)
    p.add_argument("--rec", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE_IO if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as e:
        return _fail(EXIT_USAGE_IO, str(e))


if __name__ == "__main__":
    sys.exit(main())
