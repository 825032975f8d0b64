"""Bit-exact simulator and design-space tools for a systolic Kuramoto drift accelerator."""

__version__ = "0.1.0"

from .drift import Boundary, DriftParams, QuantizedParams, drift_direct, drift_fixed, drift_reformulated
from .fixedpoint import PhaseMap
from .systolic import ArrayConfig, run_image

__all__ = [
    "__version__", "Boundary", "DriftParams", "QuantizedParams", "drift_direct", "drift_fixed",
    "drift_reformulated", "PhaseMap", "ArrayConfig", "run_image",
]
