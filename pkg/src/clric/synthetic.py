"""Deterministic synthetic latents for demos, tests and the acceptance run."""

from __future__ import annotations

import numpy as np

from .model import LatentTensor


def _gaussian_taps(sigma: float) -> np.ndarray:
    radius = max(1, int(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


def smooth_latent(channels: int = 4, height: int = 64, width: int = 96,
                  image_height: int = 512, image_width: int = 768,
                  seed: int = 0, sigma: float = 8.0, amplitude: float = 2.0) -> LatentTensor:
    """Gaussian noise smoothed per channel, rescaled to a fixed spread.

    Smooth fields compress well, which makes rate-distortion trends visible
    at desk-scale training budgets.
    """
    rng = np.random.default_rng(seed)
    taps = _gaussian_taps(sigma)
    radius = (taps.size - 1) // 2

    def blur(line: np.ndarray) -> np.ndarray:
        return np.convolve(np.pad(line, radius, mode="reflect"), taps, mode="valid")

    values = rng.normal(size=(channels, height, width))
    for c in range(channels):
        values[c] = np.apply_along_axis(blur, 1, values[c])
        values[c] = np.apply_along_axis(blur, 0, values[c])
    values *= amplitude / max(values.std(), 1e-12)
    return LatentTensor(values=values.astype(np.float32),
                        image_height=image_height, image_width=image_width)


def bundled_latent() -> LatentTensor:
    """The latent the test suite and demos encode: C=4, 64x96, 512x768 image."""
    return smooth_latent(channels=4, height=64, width=96,
                         image_height=512, image_width=768, seed=1234)
