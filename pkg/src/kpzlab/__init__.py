"""Numerics for conditioned KPZ fixed-point tails and their bridge limit laws."""

from .contours import (
    ComplexResult,
    Contour,
    QuadSpec,
    circle_integrate,
    integrate,
    integrate_tensor,
    probe_truncation_radius,
    scale_contour,
)
from .errors import (
    BlowUp,
    CostGuard,
    DimensionTooLarge,
    DivergentQuadrature,
    InsufficientRange,
    KpzLabError,
    NonFiniteIntegrand,
    OutOfRange,
    ResidualTooLarge,
)

__version__ = "0.1.0"
