"""Integrand building blocks shared by the bridge and finite-L evaluators.

All functions are numpy-vectorized and accept broadcastable complex arrays.
"""

from __future__ import annotations

import numpy as np

_SQRT2 = np.sqrt(2.0)


def quadratic_kernel_exponent(u, a, b):
    """Exponent a*u^2/2 + b*u of the Gaussian-generating kernel."""
    return 0.5 * a * u * u + b * u


def quadratic_kernel(u, a, b):
    """exp(a*u^2/2 + b*u); integrates to the N(0, a) density over a vertical line."""
    return np.exp(quadratic_kernel_exponent(u, a, b))


def cubic_kernel_exponent(zeta, x, tau, h):
    """Exponent -tau*zeta^3/3 + x*zeta^2 + h*zeta of the one-point kernel."""
    return -(tau / 3.0) * zeta ** 3 + x * zeta * zeta + h * zeta


def cubic_kernel(zeta, x, tau, h):
    """exp(-tau*zeta^3/3 + x*zeta^2 + h*zeta).

    On the rescaled contours this overflows for large conditioning levels;
    finite-L evaluators must keep the exponential prefactors analytic and use
    the exponent form instead.
    """
    out = np.exp(cubic_kernel_exponent(zeta, x, tau, h))
    if not np.all(np.isfinite(out)):
        raise OverflowError("cubic kernel overflowed; use the exponent form")
    return out


def finite_size_factor_exponent(w, tau, x, L):
    """Exponent of the O(L^(-3/4)) correction carried by each scaled variable."""
    return (-(tau / (6.0 * _SQRT2)) * w ** 3
            + (x / (2.0 * _SQRT2)) * w * w) * L ** -0.75


def finite_size_factor(w, tau, x, L):
    """exp((-tau*w^3/(6*sqrt2) + x*w^2/(2*sqrt2)) * L^(-3/4)); -> 1 as L -> inf."""
    return np.exp(finite_size_factor_exponent(w, tau, x, L))


def coupling_factor(us, vs, L):
    """Pairwise coupling of the scaled 2m-fold integrand.

    us, vs are length-m sequences of broadcastable arrays.  As L -> inf this
    tends to prod_j 1 / ((u_j - u_{j+1}) (v_j - v_{j+1})); L = inf is accepted
    and returns that limit exactly.
    """
    m = len(us)
    if len(vs) != m:
        raise ValueError("need equally many u and v blocks")
    alpha = 0.0 if np.isinf(L) else 2.0 ** -1.5 * L ** -0.75
    out = 1.0 / (1.0 - alpha * (us[m - 1] - vs[m - 1]))
    for j in range(m - 1):
        num = (1.0 - alpha * (us[j] - vs[j + 1])) * (1.0 + alpha * (vs[j] - us[j + 1]))
        den = ((us[j] - us[j + 1]) * (vs[j] - vs[j + 1])
               * (1.0 - alpha * (us[j] - vs[j])) ** 2)
        out = out * num / den
    return out
