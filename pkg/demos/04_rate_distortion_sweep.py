"""Trace the rate-distortion frontier: one encode per lambda, shared seed.

Higher lambda weights the rate term more, so files shrink and latent
distortion grows. The CSV matches the `clric rd-sweep` command output.
"""

import csv
import os

from clric import synthetic
from clric.training import RdConfig, train

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT_DIR, exist_ok=True)

latent = synthetic.bundled_latent()
lambdas = [0.25, 4.0, 64.0]
rows = []
print(f"{'lambda':>8} {'bytes':>7} {'bpp':>9} {'latent mse':>11}")
for lam in lambdas:
    _, report = train(latent, RdConfig.smoke_preset(lam, seed=7))
    rows.append({"lambda": lam, "bpp": report.bpp, "latent_mse": report.final_mse,
                 "bytes": report.actual_bytes, "seed": 7})
    print(f"{lam:>8} {report.actual_bytes:>7} {report.bpp:>9.5f} {report.final_mse:>11.4f}")

csv_path = os.path.join(OUT_DIR, "rd_sweep.csv")
with open(csv_path, "w", newline="") as f:
    writer = csv.DictWriter(f, fieldnames=["lambda", "bpp", "latent_mse", "bytes", "seed"])
    writer.writeheader()
    writer.writerows(rows)
print(f"\ncsv               : {csv_path}")
