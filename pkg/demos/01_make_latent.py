"""Create the bundled synthetic latent and store it as a .clrt file.

The latent plays the role of an autoencoder output: 4 channels at 64x96,
standing in for a 512x768 image. Smooth Gaussian fields keep desk-scale
training budgets meaningful.
"""

import os

import numpy as np

from clric import bitstream, synthetic

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT_DIR, exist_ok=True)

latent = synthetic.bundled_latent()
path = os.path.join(OUT_DIR, "bundled.clrt")
bitstream.write_latent(latent, path)

print(f"latent shape      : {latent.values.shape} (C, H_l, W_l)")
print(f"source image dims : {latent.image_height} x {latent.image_width}")
print(f"value range       : [{latent.values.min():.3f}, {latent.values.max():.3f}]")
print(f"std               : {latent.values.std():.3f}")
print(f"file              : {path} ({os.path.getsize(path)} bytes)")
print(f"header + payload  : 28 + {4 * latent.values.size} bytes")
