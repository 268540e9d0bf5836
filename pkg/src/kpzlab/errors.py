"""Exception types shared across the package."""


class KpzLabError(Exception):
    """Base class for all package-specific errors."""


class NonFiniteIntegrand(KpzLabError):
    """Integrand evaluated to NaN or infinity at a quadrature node."""


class DivergentQuadrature(KpzLabError):
    """Full- and half-resolution quadratures disagree far beyond tolerance."""


class DimensionTooLarge(KpzLabError):
    """Tensor-product quadrature requested above the supported dimension."""


class ResidualTooLarge(KpzLabError):
    """Imaginary residual of a nominally real quantity exceeds its threshold."""


class OutOfRange(KpzLabError):
    """Argument outside the supported evaluation window."""


class BlowUp(KpzLabError):
    """ODE solution left the bounded branch; move the matching point right."""


class InsufficientRange(KpzLabError):
    """Solution mesh lacks the right tail needed for a requested integral."""


class CostGuard(KpzLabError):
    """Projected work exceeds the configured node-count budget."""
