"""Analytic decoder cost in multiply-accumulates per image pixel.

Counts the context-model evaluations per coded symbol, 16 taps per
upsampled pixel, the four synthesis layers per latent pixel, and the
fixed per-image weight reconstruction, then divides by image pixels.
"""

from clric.model import ArchConfig, count_macs

CASES = [
    ("512 x 768 image, 64 x 96 latent", ArchConfig(4, 64, 96), 512, 768),
    ("1363 x 2048 image, 170 x 256 latent", ArchConfig(4, 170, 256), 1363, 2048),
]

for name, cfg, h, w in CASES:
    rep = count_macs(cfg, h, w)
    parts = rep.breakdown_per_pixel()
    print(name)
    print(f"  context model : {parts['arm']:7.3f} MAC/px")
    print(f"  upsampler     : {parts['upsampler']:7.3f} MAC/px")
    print(f"  synthesis     : {parts['synthesis']:7.3f} MAC/px")
    print(f"  fixed         : {parts['fixed']:7.5f} MAC/px")
    print(f"  total         : {rep.per_pixel:7.3f} MAC/px ({rep.total:,} MACs)")
    print()

print("synthesis hidden width sensitivity (512x768):")
for width in (8, 16, 32):
    rep = count_macs(ArchConfig(4, 64, 96, hidden_width=width), 512, 768)
    print(f"  width {width:>2}      : {rep.per_pixel:7.3f} MAC/px")
