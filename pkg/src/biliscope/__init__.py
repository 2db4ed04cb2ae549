"""Biliary-tree MRI screening pipeline on synthetic phantoms.

Preprocessing (resize, grayscale, sharpen, residual-CNN denoise,
histogram equalization, complement/dehaze/complement), seeded Chan-Vese
segmentation, blob/texture feature extraction, six from-scratch binary
classifiers, and a stratified cross-validation harness, plus a phantom
generator that provides ground truth for all of it.
"""

from . import (classify, denoise, enhance, errors, evaluate, features,
               phantom, pipeline, raster, segment)
from .errors import BiliscopeError
from .pipeline import PipelineConfig, run_case

__version__ = "0.1.0"

__all__ = [
    "classify",
    "denoise",
    "enhance",
    "errors",
    "evaluate",
    "features",
    "phantom",
    "pipeline",
    "raster",
    "segment",
    "BiliscopeError",
    "PipelineConfig",
    "run_case",
    "__version__",
]
