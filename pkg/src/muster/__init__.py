"""Windowed skip-attention segmentation decoders as a deterministic numpy
library: forward passes, shifted-window masks, reverse-mode gradients, and
an exact analytic complexity model."""

from .analyzer import count_model, verify_complexity_law
from .autodiff import Tape, Var, finite_difference_check, ops
from .decoder import (
    DecoderConfig,
    decoder_forward,
    forward_loss,
    init_params,
    synth_backbone,
)
from .errors import (
    ConfigError,
    FullyMaskedRowError,
    GraphError,
    MaskError,
    MusterError,
    ShapeError,
    TensorFileError,
)
from .io import read_tensor, write_tensor
from .rng import Rng
from .windowing import build_light_sw_mask, build_sw_mask

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DecoderConfig",
    "FullyMaskedRowError",
    "GraphError",
    "MaskError",
    "MusterError",
    "Rng",
    "ShapeError",
    "Tape",
    "TensorFileError",
    "Var",
    "build_light_sw_mask",
    "build_sw_mask",
    "count_model",
    "decoder_forward",
    "finite_difference_check",
    "forward_loss",
    "init_params",
    "ops",
    "read_tensor",
    "synth_backbone",
    "verify_complexity_law",
    "write_tensor",
]
