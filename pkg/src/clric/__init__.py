"""clric: per-image overfitted codec for autoencoder latent tensors.

Fits a compact learnable function (hierarchical integer grids, an
autoregressive entropy model, a learnable upsampler and a small synthesis
network) to one latent under a rate-distortion objective, entropy-codes
every parameter into a self-describing bitstream, and reconstructs the
latent deterministically at a few dozen MAC per image pixel.
"""

from .autograd import ConfigError, Tensor
from .model import (
    ArchConfig,
    ArmWeights,
    CodecParameters,
    LaplaceParams,
    LatentTensor,
    MacReport,
    SynthesisWeights,
    bicubic_kernel8,
    count_macs,
    decode_latent,
    init_parameters,
    init_pyramid,
    pyramid_shapes,
)

__version__ = "0.1.0"

__all__ = [
    "ArchConfig",
    "ArmWeights",
    "CodecParameters",
    "ConfigError",
    "LaplaceParams",
    "LatentTensor",
    "MacReport",
    "SynthesisWeights",
    "Tensor",
    "bicubic_kernel8",
    "count_macs",
    "decode_latent",
    "init_parameters",
    "init_pyramid",
    "pyramid_shapes",
    "__version__",
]
