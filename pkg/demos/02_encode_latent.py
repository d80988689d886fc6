"""Overfit the codec to the bundled latent and write a bitstream.

Uses the smoke-scale schedule (550 optimizer steps). The full-budget
schedule (15,900 steps) is the same call with RdConfig defaults.
"""

import os

from clric import bitstream, synthetic
from clric.training import RdConfig, train

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT_DIR, exist_ok=True)

latent = synthetic.bundled_latent()
latent_path = os.path.join(OUT_DIR, "bundled.clrt")
bitstream.write_latent(latent, latent_path)

config = RdConfig.smoke_preset(lam=1.0, seed=7)
params, report = train(latent, config)

stream_path = os.path.join(OUT_DIR, "bundled.clrc")
bitstream.write_bitstream(report.bitstream, stream_path)

print(f"schedule          : {report.steps_per_phase} = {report.total_steps} steps")
print(f"chosen candidate  : #{report.chosen_candidate} (seed {report.chosen_seed})")
print(f"loss              : {report.initial_loss:.3f} -> {report.final_loss:.3f}")
print(f"latent mse        : {report.final_mse:.4f}")
print(f"weight steps      : 2^{list(report.step_exponents)} per network")
print(f"rate estimate     : {report.rate_estimate_bits:.0f} bits")
print(f"bitstream         : {report.actual_bytes} bytes -> {report.bpp:.4f} bpp")
print(f"wall time         : {report.wall_time_s:.1f} s")
print(f"file              : {stream_path}")
