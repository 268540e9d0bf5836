"""GUE/GOE Tracy-Widom laws through the Painleve-II connection problem.

The distribution functions are built from the bounded Painleve-II solution
u'' = 2u^3 + x*u that matches the Airy function as x -> +infinity.  That
solution is obtained by backward integration from a matching point on the
right, where the Airy boundary data is essentially exact; forward integration
is unstable, so error control is purely relative.

Beyond the solution mesh the tail integrals are closed with the Airy
antiderivative identities

    d/dx [ x Ai^2 - Ai'^2 ]               = Ai^2
    d/dx [ x^2 Ai^2 - x Ai'^2 + Ai Ai' ]  = 3 x Ai^2

so the normalization error stays quantifiable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.special import airy as _scipy_airy
from scipy.special import airye as _scipy_airye

from .errors import BlowUp, InsufficientRange, OutOfRange

AIRY_X_MIN = -15.0
AIRY_X_MAX = 30.0

GUE_DENSITY = "gue_density"
GOE_DENSITY = "goe_density"
FLAT_DENSITY = "flat_density"

_BLOWUP_LIMIT = 1e6
_TAIL_QUAD_PANELS = 24
_TAIL_QUAD_NODES = 12


def airy(x: float) -> float:
    """Airy function Ai on the supported window [-15, 30]."""
    if not AIRY_X_MIN <= x <= AIRY_X_MAX:
        raise OutOfRange(f"airy supports x in [{AIRY_X_MIN}, {AIRY_X_MAX}], got {x}")
    return float(_scipy_airy(x)[0])


def airy_pair(x):
    """(Ai, Ai') without range checking; accepts arrays."""
    ai, aip, _, _ = _scipy_airy(x)
    return ai, aip


@dataclass
class PainleveSolution:
    """Bounded Painleve-II branch on a descending mesh.

    grid: mesh points, descending from x_match.
    u_values / u_prime_values: solution and derivative at the mesh points.
    x_match: point where the Airy boundary data was imposed.
    """

    grid: np.ndarray
    u_values: np.ndarray
    u_prime_values: np.ndarray
    x_match: float
    _spline: CubicHermiteSpline = field(repr=False, default=None)

    def __post_init__(self):
        if self._spline is None:
            asc = np.argsort(self.grid)
            self._spline = CubicHermiteSpline(
                self.grid[asc], self.u_values[asc], self.u_prime_values[asc])

    @property
    def x_min(self) -> float:
        return float(self.grid.min())

    def u(self, x):
        return self._spline(x)

    def boundary_mismatch(self) -> float:
        """|u/Ai - 1| at the matching point (exactly 0 by construction)."""
        return abs(self.u_values[0] / airy(self.x_match) - 1.0)

    def ode_residual(self) -> float:
        """Sup-norm of u'' - 2u^3 - x*u at interior mesh nodes.

        u'' is formed from the stored u' values by 4th-order central
        differences, so this measures the solution data, not interpolation.
        """
        asc = np.argsort(self.grid)
        x = self.grid[asc]
        u = self.u_values[asc]
        up = self.u_prime_values[asc]
        h = x[1] - x[0]
        upp = (-up[4:] + 8 * up[3:-1] - 8 * up[1:-3] + up[:-4]) / (12 * h)
        rhs = 2 * u[2:-2] ** 3 + x[2:-2] * u[2:-2]
        return float(np.max(np.abs(upp - rhs)))


def hastings_mcleod(x_min: float = -10.0, x_max: float = 12.0,
                    mesh: int = 2201) -> PainleveSolution:
    """Solve the connection problem backward from the Airy-matched right end.

    Uses an implicit high-order integrator with purely relative step control
    (rtol 1e-12, atol 0), which keeps the backward error from exciting the
    growing branch regardless of how small u is at x_max.
    """
    if x_max < 8:
        raise ValueError("x_max must be at least 8 for accurate Airy matching")
    if x_min < -10:
        raise ValueError("x_min below -10 is unsupported")
    if mesh < 16:
        raise ValueError("mesh too coarse")
    ai0, aip0 = airy_pair(x_max)

    def rhs(x, y):
        u, up = y
        return (up, 2.0 * u ** 3 + x * u)

    def blowup(x, y):
        return abs(y[0]) - _BLOWUP_LIMIT

    blowup.terminal = True
    grid = np.linspace(x_max, x_min, mesh)
    sol = solve_ivp(rhs, (x_max, x_min), (ai0, aip0), method="Radau",
                    rtol=1e-12, atol=0.0, dense_output=False, t_eval=grid,
                    events=blowup)
    if sol.status == 1 or (sol.t.size and sol.t[-1] > x_min):
        raise BlowUp("solution left the bounded branch; move x_max to the right")
    if not sol.success:
        raise BlowUp(f"integration failed: {sol.message}")
    return PainleveSolution(grid=sol.t, u_values=sol.y[0],
                            u_prime_values=sol.y[1], x_match=float(x_max))


# ---------------------------------------------------------------------------
# Airy tail closures beyond the mesh

def _airy_tail_u2(m: float) -> float:
    """integral_m^inf Ai(t)^2 dt."""
    ai, aip = airy_pair(m)
    return float(aip * aip - m * ai * ai)


def _airy_tail_t_u2(m: float) -> float:
    """integral_m^inf t Ai(t)^2 dt."""
    ai, aip = airy_pair(m)
    return float((-m * m * ai * ai + m * aip * aip - ai * aip) / 3.0)


def _airy_tail_u(m: float) -> float:
    """integral_m^inf Ai(t) dt via the exponentially scaled Airy function."""
    span = max(6.0, 40.0 / np.sqrt(max(m, 1.0)))
    x, w = np.polynomial.legendre.leggauss(48)
    t = m + 0.5 * span * (x + 1.0)
    wt = 0.5 * span * w
    aie = _scipy_airye(t)[0]
    rel = np.exp(-(2.0 / 3.0) * (t ** 1.5 - m ** 1.5))
    scaled = float(np.sum(wt * aie * rel))
    return scaled * float(np.exp(-(2.0 / 3.0) * m ** 1.5))


def _closure_rel_error(x_match: float) -> float:
    # relative accuracy of replacing u by Ai beyond the matching point
    return 10.0 * float(np.exp(-(4.0 / 3.0) * x_match ** 1.5))


def _panel_quad(f, lo: float, hi: float) -> float:
    x, w = np.polynomial.legendre.leggauss(_TAIL_QUAD_NODES)
    edges = np.linspace(lo, hi, _TAIL_QUAD_PANELS + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        total += 0.5 * (b - a) * float(np.sum(w * f(t)))
    return total


def _require_in_range(L: float, sol: PainleveSolution) -> None:
    if L < sol.x_min:
        raise InsufficientRange(
            f"L={L} below the solved mesh (x_min={sol.x_min})")
    if L > sol.x_match:
        raise InsufficientRange(
            f"L={L} beyond the matching point (x_match={sol.x_match})")


def _tail_guard(L: float, sol: PainleveSolution, integral: float,
                tail: float) -> None:
    closure = _closure_rel_error(sol.x_match) * abs(tail)
    if closure > 1e-12 * abs(integral):
        raise InsufficientRange(
            f"Airy tail closure bound {closure:.3e} exceeds 1e-12 of the "
            f"integral {integral:.3e}; extend x_max")


def integral_u2(sol: PainleveSolution, L: float) -> float:
    """integral_L^inf u(t)^2 dt, mesh quadrature plus Airy tail."""
    _require_in_range(L, sol)
    mesh_part = _panel_quad(lambda t: sol.u(t) ** 2, L, sol.x_match)
    tail = _airy_tail_u2(sol.x_match)
    _tail_guard(L, sol, mesh_part + tail, tail)
    return mesh_part + tail


def integral_u2_weighted(sol: PainleveSolution, L: float) -> float:
    """integral_L^inf (t - L) u(t)^2 dt."""
    _require_in_range(L, sol)
    mesh_part = _panel_quad(lambda t: (t - L) * sol.u(t) ** 2, L, sol.x_match)
    m = sol.x_match
    tail = _airy_tail_t_u2(m) + (m - L) * _airy_tail_u2(m)
    _tail_guard(L, sol, mesh_part + tail, tail)
    return mesh_part + tail


def integral_u(sol: PainleveSolution, L: float) -> float:
    """integral_L^inf u(t) dt."""
    _require_in_range(L, sol)
    mesh_part = _panel_quad(sol.u, L, sol.x_match)
    tail = _airy_tail_u(sol.x_match)
    _tail_guard(L, sol, mesh_part + tail, tail)
    return mesh_part + tail


# ---------------------------------------------------------------------------
# Distribution functions and densities

def log_f_gue(L: float, sol: PainleveSolution) -> float:
    return -integral_u2_weighted(sol, L)


def f_gue(L: float, sol: PainleveSolution) -> float:
    """GUE Tracy-Widom cumulative distribution function."""
    return float(np.exp(log_f_gue(L, sol)))


def p_gue(L: float, sol: PainleveSolution) -> float:
    """GUE Tracy-Widom density, from the analytic log-derivative."""
    return f_gue(L, sol) * integral_u2(sol, L)


def log_p_gue(L: float, sol: PainleveSolution) -> float:
    return log_f_gue(L, sol) + float(np.log(integral_u2(sol, L)))


def log_f_goe(L: float, sol: PainleveSolution) -> float:
    return 0.5 * log_f_gue(L, sol) - 0.5 * integral_u(sol, L)


def f_goe(L: float, sol: PainleveSolution) -> float:
    """GOE Tracy-Widom cumulative distribution function."""
    return float(np.exp(log_f_goe(L, sol)))


def p_goe(L: float, sol: PainleveSolution) -> float:
    """GOE Tracy-Widom density."""
    return f_goe(L, sol) * 0.5 * (integral_u2(sol, L) + float(sol.u(L)))


def log_p_goe(L: float, sol: PainleveSolution) -> float:
    return log_f_goe(L, sol) + float(
        np.log(0.5 * (integral_u2(sol, L) + float(sol.u(L)))))


_FLAT_SCALE = 2.0 ** (2.0 / 3.0)


def f_flat(L: float, sol: PainleveSolution) -> float:
    """Distribution of the flat-start height at the conditioning point."""
    return f_goe(_FLAT_SCALE * L, sol)


def p_flat(L: float, sol: PainleveSolution) -> float:
    """Density of the flat-start height: 2^(2/3) * p_goe(2^(2/3) L)."""
    return _FLAT_SCALE * p_goe(_FLAT_SCALE * L, sol)


def log_p_flat(L: float, sol: PainleveSolution) -> float:
    return float(np.log(_FLAT_SCALE)) + log_p_goe(_FLAT_SCALE * L, sol)


# ---------------------------------------------------------------------------
# Closed-form tail asymptotes of the densities

def log_tail_asymptote(family: str, L: float) -> float:
    """log of the closed-form density asymptote; safe up to L ~ 400."""
    if not L > 0:
        raise ValueError("tail asymptotes require L > 0")
    if family == GUE_DENSITY:
        return -np.log(8.0 * np.pi * L) - (4.0 / 3.0) * L ** 1.5
    if family == FLAT_DENSITY:
        return -0.5 * np.log(8.0 * np.pi * np.sqrt(L)) - (4.0 / 3.0) * L ** 1.5
    if family == GOE_DENSITY:
        return -np.log(4.0 * np.sqrt(np.pi) * L ** 0.25) - (2.0 / 3.0) * L ** 1.5
    raise ValueError(f"unknown family {family!r}")


def tail_asymptote(family: str, L: float) -> float:
    """Closed-form density asymptote prefactor(L) * exp(exponent(L))."""
    return float(np.exp(log_tail_asymptote(family, L)))
