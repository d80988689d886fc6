"""Decode the bitstream written by demo 02 and verify bit-exactness.

The decoder rebuilds every network weight and every grid value from the
stream alone; the reconstruction must match the encoder's own, byte for
byte.
"""

import os

import numpy as np

from clric import bitstream, model, synthetic
from clric.training import RdConfig, train

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")
stream_path = os.path.join(OUT_DIR, "bundled.clrc")
if not os.path.exists(stream_path):
    raise SystemExit("run demos/02_encode_latent.py first")

data = bitstream.read_bitstream(stream_path)
params, header = bitstream.parse_bitstream(data)
reconstruction = model.decode_latent(params)

print(f"stream            : {len(data)} bytes, {header.num_grids} grids, "
      f"{header.channels} channels at {header.latent_height}x{header.latent_width}")
print(f"segment bytes     : {header.segment_lengths}")
print(f"weight steps      : 2^{list(header.step_exponents)}")

# re-run the encoder deterministically and compare reconstructions
latent = synthetic.bundled_latent()
params_enc, report = train(latent, RdConfig.smoke_preset(lam=1.0, seed=7))
encoder_view = model.decode_latent(params_enc)

identical = reconstruction.tobytes() == encoder_view.tobytes()
print(f"bit-exact check   : decoder == encoder reconstruction -> {identical}")
assert identical

mse = float(np.mean((latent.values - reconstruction) ** 2))
print(f"latent mse vs y   : {mse:.4f}")
rec_path = os.path.join(OUT_DIR, "reconstructed.clrt")
bitstream.write_latent(model.LatentTensor(values=reconstruction,
                                          image_height=header.image_height,
                                          image_width=header.image_width), rec_path)
print(f"file              : {rec_path}")
