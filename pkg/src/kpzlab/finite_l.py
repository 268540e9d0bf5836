"""Finite-L conditional tail ratios of the conditioned growth field.

Everything is evaluated in the rescaled variables in which the integration
contours are L-independent ray pairs: the left family has vertices 1..m at
leg angle 2*pi/3, the right family is its pointwise reflection.  In those
variables the huge exponential prefactors exp(+-(2/3) L^(3/2)) cancel
analytically against the density asymptote used for normalization, so no
such factor is ever formed numerically; what remains is an O(1) integrand
made of quadratic kernels, an O(L^(-3/4)) per-variable correction factor and
a pairwise coupling factor.

The leading term (unit multi-index) is a 2m-fold tensor quadrature for the
step start and a (2m-1)-fold one for the flat start, whose first left
variable is slaved to minus the first right variable.  Since every factor
touches at most two variables, the quadrature is contracted as a tensor
network rather than a full lattice.  General small multi-indices at m = 2
expand into branches over inner/outer contour choices, each branch weighted
by a scalar circle integral around the origin; that closure runs the same
trapezoidal circle rule in extended precision, because the normalized scale
amplifies any closure error by exp(+(2/3) L^(3/2)) for the vanishing
indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import mpmath
import numpy as np

from .contours import (
    Contour,
    QuadSpec,
    integrate_pair_network,
    integrate_tensor,
    probe_truncation_radius,
)
from .errors import CostGuard, ResidualTooLarge
from .kernels import (
    coupling_factor,
    cubic_kernel,
    cubic_kernel_exponent,
    finite_size_factor,
    finite_size_factor_exponent,
    quadratic_kernel,
    quadratic_kernel_exponent,
)

__all__ = [
    "Grid", "ScaledGrid", "MultiIndex", "LawResult",
    "cubic_kernel", "cubic_kernel_exponent",
    "quadratic_kernel", "quadratic_kernel_exponent",
    "finite_size_factor", "finite_size_factor_exponent", "coupling_factor",
    "leading_ratio_step", "leading_ratio_flat", "term_ratio_step",
    "remainder_log_bound", "remainder_series_log_bound",
    "default_ratio_specs", "min_conditioning_level",
]

LEFT_ANGLE = 2.0 * np.pi / 3.0
RIGHT_ANGLE = np.pi / 3.0

MIN_PAIR_DISTANCE = np.sqrt(3.0) / 2.0  # between adjacent default ray pairs

_SQRT2 = np.sqrt(2.0)
_Z_CIRCLE_NODES = 512
_Z_CIRCLE_DPS = 50
_RESIDUAL_TOL = 1e-6
_DEFAULT_NODES_PER_LEG = 64


@dataclass(frozen=True)
class Grid:
    """Evaluation grid tau_1 < ... < tau_m = 1 with offsets and levels.

    The final point is the conditioning point itself: tau_m = 1 and
    x_m = h_m = 0.  Repeated times are rejected here; tied-time queries are
    served by the limit laws only.
    """

    taus: tuple
    xs: tuple
    hs: tuple

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus)
        xs = tuple(float(x) for x in self.xs)
        hs = tuple(float(h) for h in self.hs)
        if not (len(taus) == len(xs) == len(hs)):
            raise ValueError("taus, xs, hs must have equal length")
        if len(taus) < 2:
            raise ValueError("need m >= 2 points (the last is the pinning point)")
        if taus[-1] != 1.0 or xs[-1] != 0.0 or hs[-1] != 0.0:
            raise ValueError("grid must end with tau_m = 1, x_m = 0, h_m = 0")
        d = np.diff(np.concatenate([[0.0], np.asarray(taus)]))
        if not np.all(d > 0):
            raise ValueError("times must be strictly increasing inside (0, 1]")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "hs", hs)

    @classmethod
    def interior(cls, taus: Sequence[float], xs: Sequence[float],
                 hs: Sequence[float]) -> "Grid":
        """Build from the m-1 interior points, appending the pinning point."""
        return cls((*taus, 1.0), (*xs, 0.0), (*hs, 0.0))

    @property
    def m(self) -> int:
        return len(self.taus)


@dataclass(frozen=True)
class ScaledGrid:
    """Image of a Grid at conditioning level L, with telescoping increments.

    h_scaled_j = tau_j L + h_j sqrt(2) L^(1/4) and x_scaled_j = x_j /
    (sqrt(2) L^(1/4)); the increment vectors satisfy sum(tau_incr) = 1,
    sum(x_incr) = 0, sum(h_incr) = 0.
    """

    grid: Grid
    L: float
    tau_incr: tuple = field(init=False)
    x_incr: tuple = field(init=False)
    h_incr: tuple = field(init=False)
    h_scaled: tuple = field(init=False)
    x_scaled: tuple = field(init=False)

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        g = self.grid
        taus = np.asarray(g.taus)
        xs = np.asarray(g.xs)
        hs = np.asarray(g.hs)
        lq = self.L ** 0.25
        object.__setattr__(self, "h_scaled",
                           tuple(taus * self.L + hs * _SQRT2 * lq))
        object.__setattr__(self, "x_scaled", tuple(xs / (_SQRT2 * lq)))
        pad = lambda a: np.diff(np.concatenate([[0.0], a]))
        object.__setattr__(self, "tau_incr", tuple(pad(taus)))
        object.__setattr__(self, "x_incr", tuple(pad(xs)))
        object.__setattr__(self, "h_incr", tuple(pad(hs)))


@dataclass(frozen=True)
class MultiIndex:
    """Expansion multi-index (n_1, ..., n_m) of nonnegative integers."""

    n: tuple

    def __post_init__(self):
        n = tuple(int(v) for v in self.n)
        if any(v < 0 for v in n) or not n:
            raise ValueError("multi-index entries must be nonnegative")
        object.__setattr__(self, "n", n)

    @property
    def total(self) -> int:
        return sum(self.n)


@dataclass(frozen=True)
class LawResult:
    """A probability or normalized density ratio with diagnostics.

    imag_residual is the modulus of the imaginary part discarded when taking
    the real value; it is a mandatory health check on every contour result.
    """

    value: float
    est_error: float
    imag_residual: float
    method: str
    meta: dict = field(default_factory=dict)


def min_conditioning_level(m: int) -> float:
    """Smallest L at which the rescaled left/right contour families stay
    separated (the pairwise coupling factor then has no pole on the domain)."""
    return float(((2 * m + 1) * 2.0 ** -1.5) ** (4.0 / 3.0))


def _check_level(m: int, L: float) -> None:
    if not L > 0:
        raise ValueError("L must be positive")
    lmin = min_conditioning_level(m)
    if L <= lmin:
        raise ValueError(
            f"L = {L} too small for the scaled contours at m = {m}; "
            f"need L > {lmin:.3f}")


def _left_contour(vertex: float) -> Contour:
    return Contour.ray_pair(vertex, LEFT_ANGLE)


def _right_contour(vertex: float) -> Contour:
    return _left_contour(vertex).reflected()


def _u_factor(sg: ScaledGrid, j: int):
    """Single-variable factor on the j-th left contour (0-based j)."""
    tau = sg.tau_incr[j]
    b = sg.h_incr[j] - sg.x_incr[j]
    x = sg.x_incr[j]
    L = sg.L

    def factor(u):
        return (quadratic_kernel(u, tau, b)
                * finite_size_factor(u, tau, x, L))

    return factor


def _v_factor(sg: ScaledGrid, j: int):
    """Single-variable factor on the j-th right contour (0-based j)."""
    tau = sg.tau_incr[j]
    b = -sg.h_incr[j] - sg.x_incr[j]
    x = sg.x_incr[j]
    L = sg.L

    def factor(v):
        return (quadratic_kernel(v, tau, b)
                / finite_size_factor(v, tau, x, L))

    return factor


def _u_exponent(sg: ScaledGrid, j: int, u):
    return (quadratic_kernel_exponent(u, sg.tau_incr[j],
                                      sg.h_incr[j] - sg.x_incr[j])
            + finite_size_factor_exponent(u, sg.tau_incr[j], sg.x_incr[j], sg.L))


def _v_exponent(sg: ScaledGrid, j: int, v):
    return (quadratic_kernel_exponent(v, sg.tau_incr[j],
                                      -sg.h_incr[j] - sg.x_incr[j])
            - finite_size_factor_exponent(v, sg.tau_incr[j], sg.x_incr[j], sg.L))


def default_ratio_specs(sg: ScaledGrid,
                        nodes_per_leg: int = _DEFAULT_NODES_PER_LEG,
                        vertex_scale: float = 1.0) -> list[QuadSpec]:
    """Probe-based per-contour specs for the 2m-fold leading-term quadrature.

    Radii are chosen so the per-variable factor has decayed below 1e-16 of
    its near-vertex magnitude (cheap probe pass), per contour.
    """
    m = sg.grid.m
    specs = []
    for j in range(m):
        r = probe_truncation_radius(_u_factor(sg, j),
                                    _left_contour(vertex_scale * (j + 1)))
        specs.append(QuadSpec(truncation_radius=r, nodes_per_leg=nodes_per_leg))
    for j in range(m):
        r = probe_truncation_radius(_v_factor(sg, j),
                                    _right_contour(vertex_scale * (j + 1)))
        specs.append(QuadSpec(truncation_radius=r, nodes_per_leg=nodes_per_leg))
    return specs


def _finalize(raw, est: float, method: str, meta: dict) -> LawResult:
    residual = abs(raw.imag)
    if residual > _RESIDUAL_TOL:
        raise ResidualTooLarge(
            f"{method}: imaginary residual {residual:.3e} exceeds {_RESIDUAL_TOL}")
    return LawResult(value=float(raw.real), est_error=float(est),
                     imag_residual=float(residual), method=method, meta=meta)


def _coupling_pairs(m: int, L: float, u_axis, v_axis) -> list[tuple]:
    """Pairwise factors realizing the coupling of the scaled integrand.

    u_axis / v_axis map block index j (0-based) to the network axis; the
    product of the returned matrices equals coupling_factor(us, vs, L).
    """
    alpha = 2.0 ** -1.5 * L ** -0.75
    pairs = []
    for j in range(m - 1):
        pairs.append((u_axis(j), u_axis(j + 1), lambda a, b: 1.0 / (a - b)))
        pairs.append((v_axis(j), v_axis(j + 1), lambda a, b: 1.0 / (a - b)))
        pairs.append((u_axis(j), v_axis(j),
                      lambda a, b: (1.0 - alpha * (a - b)) ** -2))
        pairs.append((u_axis(j), v_axis(j + 1),
                      lambda a, b: 1.0 - alpha * (a - b)))
        pairs.append((v_axis(j), u_axis(j + 1),
                      lambda a, b: 1.0 + alpha * (a - b)))
    pairs.append((u_axis(m - 1), v_axis(m - 1),
                  lambda a, b: (1.0 - alpha * (a - b)) ** -1))
    return pairs


def leading_ratio_step(grid: Grid, L: float,
                       spec: QuadSpec | Sequence[QuadSpec] | None = None,
                       nodes_per_leg: int = _DEFAULT_NODES_PER_LEG,
                       vertex_scale: float = 1.0,
                       grouping: str = "factored") -> LawResult:
    """Leading normalized conditional tail ratio for the step start.

    Evaluates the 2m-fold scaled contour integral divided by the GUE density
    asymptote (8 pi L)^(-1) exp(-(4/3) L^(3/2)); the exponential prefactors
    are cancelled analytically.  Converges to the step limit law as L grows.

    grouping selects the algebraic arrangement of the exponent ("factored":
    one exponential per variable factor, contracted as a network; "pooled":
    a single exponential of the summed exponents on the full lattice); both
    must agree to rounding.
    """
    m = grid.m
    if m > 3:
        raise CostGuard("leading ratio is limited to m <= 3 (2m-fold lattice)")
    if grouping not in ("factored", "pooled"):
        raise ValueError("grouping must be 'factored' or 'pooled'")
    _check_level(m, L)
    sg = ScaledGrid(grid, L)
    contours = ([_left_contour(vertex_scale * (j + 1)) for j in range(m)]
                + [_right_contour(vertex_scale * (j + 1)) for j in range(m)])
    if spec is None:
        spec = default_ratio_specs(sg, nodes_per_leg, vertex_scale)
    pref = 2.0 * np.pi * (-1.0) ** (m - 1)
    meta = {"L": L, "m": m, "condition": "step", "grouping": grouping,
            "vertex_scale": vertex_scale}

    if grouping == "factored":
        vectors = ([_u_factor(sg, j) for j in range(m)]
                   + [_v_factor(sg, j) for j in range(m)])
        pairs = _coupling_pairs(m, L, lambda j: j, lambda j: m + j)
        res = integrate_pair_network(contours, spec, vectors, pairs)
    else:
        def integrand(*w):
            us, vs = w[:m], w[m:]
            expo = _u_exponent(sg, 0, us[0])
            for j in range(1, m):
                expo = expo + _u_exponent(sg, j, us[j])
            for j in range(m):
                expo = expo + _v_exponent(sg, j, vs[j])
            return np.exp(expo) * coupling_factor(us, vs, L)

        res = integrate_tensor(contours, spec, integrand)
    return _finalize(pref * res.value, abs(pref) * res.est_error,
                     "leading_ratio_step", meta)


def leading_ratio_flat(grid: Grid, L: float,
                       spec: QuadSpec | Sequence[QuadSpec] | None = None,
                       nodes_per_leg: int = _DEFAULT_NODES_PER_LEG) -> LawResult:
    """Leading normalized conditional tail ratio for the flat start.

    The pairing constraint identifies the first left variable with minus the
    first right variable, leaving a (2m-1)-fold integral normalized by
    (8 pi sqrt(L))^(-1/2) exp(-(4/3) L^(3/2)).  The exact algebraic factor
    (2 + sqrt(2) v_1 L^(-3/4)) is kept rather than its large-L limit 2.
    """
    m = grid.m
    if m > 3:
        raise CostGuard("leading ratio is limited to m <= 3")
    _check_level(m, L)
    sg = ScaledGrid(grid, L)
    contours = ([_left_contour(float(j + 1)) for j in range(1, m)]
                + [_right_contour(float(j + 1)) for j in range(m)])
    if spec is None:
        all_specs = default_ratio_specs(sg, nodes_per_leg)
        spec = all_specs[1:m] + all_specs[m:]
    alpha = 2.0 ** -1.5 * L ** -0.75
    amp = _SQRT2 * L ** -0.75
    uf = [_u_factor(sg, j) for j in range(m)]
    vf = [_v_factor(sg, j) for j in range(m)]

    # axis layout: 0..m-2 hold u_2..u_m, m-1..2m-2 hold v_1..v_m; u_1 = -v_1
    u_axis = lambda j: j - 1
    v_axis = lambda j: m - 1 + j
    v1 = v_axis(0)

    def v1_vector(v):
        # everything the slaved pair (u_1, v_1) contributes on one axis
        return (uf[0](-v) * vf[0](v) * (2.0 + amp * v)
                * (1.0 - alpha * (-v - v)) ** -2)

    vectors: list = [uf[j] for j in range(1, m)] + [None] * m
    vectors[m - 1] = v1_vector
    for j in range(1, m):
        vectors[v_axis(j)] = vf[j]

    pairs = [(v1, u_axis(1), lambda a, b: 1.0 / (-a - b)),          # u chain 1-2
             (v1, v_axis(1), lambda a, b: 1.0 / (a - b)),           # v chain 1-2
             (v1, v_axis(1), lambda a, b: 1.0 - alpha * (-a - b)),  # num u1,v2
             (v1, u_axis(1), lambda a, b: 1.0 + alpha * (a - b))]   # num v1,u2
    for j in range(1, m - 1):
        pairs.append((u_axis(j), u_axis(j + 1), lambda a, b: 1.0 / (a - b)))
        pairs.append((v_axis(j), v_axis(j + 1), lambda a, b: 1.0 / (a - b)))
        pairs.append((u_axis(j), v_axis(j),
                      lambda a, b: (1.0 - alpha * (a - b)) ** -2))
        pairs.append((u_axis(j), v_axis(j + 1),
                      lambda a, b: 1.0 - alpha * (a - b)))
        pairs.append((v_axis(j), u_axis(j + 1),
                      lambda a, b: 1.0 + alpha * (a - b)))
    pairs.append((u_axis(m - 1), v_axis(m - 1),
                  lambda a, b: (1.0 - alpha * (a - b)) ** -1))

    res = integrate_pair_network(contours, spec, vectors, pairs)
    pref = np.sqrt(np.pi) * (-1.0) ** (m - 1)
    meta = {"L": L, "m": m, "condition": "flat"}
    return _finalize(pref * res.value, abs(pref) * res.est_error,
                     "leading_ratio_flat", meta)


# ---------------------------------------------------------------------------
# Small multi-index terms at m = 2

@lru_cache(maxsize=None)
def _z_circle_weight(n1: int, n2: int, k: int, z_radius: float,
                     nodes: int = _Z_CIRCLE_NODES) -> complex:
    """Scalar closure weight of a branch with k inner-contour choices.

    Trapezoidal circle rule for the rational weight against the measure
    dz / (2 pi i z (1 - z)), run in extended precision: on the normalized
    scale any closure error is amplified by exp(+(2/3) L^(3/2)), far beyond
    double precision for the vanishing indices.
    """
    with mpmath.workdps(_Z_CIRCLE_DPS):
        total = mpmath.mpc(0)
        for i in range(nodes):
            z = z_radius * mpmath.e ** (2j * mpmath.pi * i / nodes)
            w = ((1 - z) ** n1 * (1 - 1 / z) ** n2
                 * (1 - z) ** (-k) * (-z / (1 - z)) ** (2 * n2 - k)
                 / (z * (1 - z)))
            total += w * z
        total /= nodes
    return complex(total)


def term_ratio_step(grid: Grid, n: MultiIndex | Sequence[int], L: float,
                    spec: QuadSpec | None = None,
                    nodes_per_leg: int | None = None,
                    z_radius: float = 2.0,
                    node_budget: float = 1e9) -> LawResult:
    """Normalized multi-index term of the step conditional tail at m = 2.

    Expands the inner/outer contour choices of the second-group variables
    into branches, tensor-integrates each branch over the scaled ray
    families, closes with the extended-precision circle rule in the mixing
    variable, and returns the term divided by the GUE density asymptote
    (all exponentials cancelled in log space).  The series weight 1/(n!)^2 is
    not included.
    """
    if grid.m != 2:
        raise ValueError("multi-index terms are evaluated at m = 2 only")
    n = n if isinstance(n, MultiIndex) else MultiIndex(tuple(n))
    if len(n.n) != 2:
        raise ValueError("multi-index must have two entries at m = 2")
    n1, n2 = n.n
    if n.total > 3 and n.n != (1, 1):
        raise ValueError("supported multi-indices satisfy n1 + n2 <= 3")
    if not z_radius > 1:
        raise ValueError("z_radius must exceed 1")
    _check_level(2, L)
    sg = ScaledGrid(grid, L)
    meta = {"L": L, "n": n.n, "z_radius": z_radius, "condition": "step"}

    if n2 == 0:
        # the trailing coordinate-difference sum in the rational prefactor is
        # empty (this covers n = (0, 0) and (n1, 0)), so the term vanishes
        return LawResult(0.0, 0.0, 0.0, "term_ratio_step", meta)

    total_vars = 2 * (n1 + n2)
    if nodes_per_leg is None:
        nodes_per_leg = 48 if total_vars <= 4 else 20
    panel_count = max(2, min(6, nodes_per_leg // 5))
    eps_scale = 2.0 ** -0.5 * L ** -0.25
    sqrt_l = np.sqrt(L)
    xi = lambda u: -sqrt_l + eps_scale * u
    eta = lambda v: sqrt_l + eps_scale * v
    c1_left = _left_contour(1.0)
    c2_left = {"in": _left_contour(0.0), "out": _left_contour(2.0)}
    c1_right = c1_left.reflected()
    c2_right = {"in": c2_left["in"].reflected(), "out": c2_left["out"].reflected()}

    branches = []
    skipped_mass = 0.0
    for kx in range(n2 + 1):
        for ke in range(n2 + 1):
            w = _z_circle_weight(n1, n2, kx + ke, z_radius)
            mult = math.comb(n2, kx) * math.comb(n2, ke)
            if abs(w) * mult < 1e-30:
                # closure weight vanishes to working precision; charge its
                # mass to the error estimate instead of integrating
                skipped_mass += mult * abs(w)
            else:
                branches.append((kx, ke, w, mult))

    # same-block coordinate-difference squares are expanded into monomials,
    # so each contraction couples distinct blocks only; one n^4 intermediate
    # per expansion combo is the dominant cost
    n_intra = (n1 * (n1 - 1)) // 2 * 2 + (n2 * (n2 - 1)) // 2 * 2
    n_combos = 3 ** n_intra
    projected = len(branches) * n_combos * n2 * (2 * nodes_per_leg) ** 4
    if projected > node_budget:
        raise CostGuard(
            f"projected contraction work {projected:.3e} exceeds budget "
            f"{node_budget:.1e}")

    uf1, uf2 = _u_factor(sg, 0), _u_factor(sg, 1)
    vf1, vf2 = _v_factor(sg, 0), _v_factor(sg, 1)

    def spec_for(contour: Contour, factor) -> QuadSpec:
        if spec is not None:
            return spec
        r = probe_truncation_radius(factor, contour)
        return QuadSpec(truncation_radius=r, nodes_per_leg=nodes_per_leg,
                        panel_count=panel_count)

    monomial = [(0, 2, 1.0), (1, 1, -2.0), (2, 0, 1.0)]  # (w_q - w_p)^2 terms

    def branch_value(kx: int, ke: int):
        xi2_kinds = ["in"] * kx + ["out"] * (n2 - kx)
        eta2_kinds = ["in"] * ke + ["out"] * (n2 - ke)
        contours = ([c1_left] * n1 + [c2_left[k] for k in xi2_kinds]
                    + [c1_right] * n1 + [c2_right[k] for k in eta2_kinds])
        factors = [uf1] * n1 + [uf2] * n2 + [vf1] * n1 + [vf2] * n2
        specs = [spec_for(c, f) for c, f in zip(contours, factors)]
        ax_xi1 = list(range(n1))
        ax_xi2 = list(range(n1, n1 + n2))
        ax_eta1 = list(range(n1 + n2, 2 * n1 + n2))
        ax_eta2 = list(range(2 * n1 + n2, total_vars))
        coord = {}
        for i in ax_xi1 + ax_xi2:
            coord[i] = xi
        for i in ax_eta1 + ax_eta2:
            coord[i] = eta

        pairs: list[tuple] = []
        for i in ax_xi1:
            for k in ax_eta2:
                pairs.append((i, k, lambda a, b: xi(a) - eta(b)))
            for k in ax_xi2:
                pairs.append((i, k, lambda a, b: 1.0 / (xi(a) - xi(b))))
        for i in ax_eta1:
            for k in ax_xi2:
                pairs.append((i, k, lambda a, b: eta(a) - xi(b)))
            for k in ax_eta2:
                pairs.append((i, k, lambda a, b: 1.0 / (eta(a) - eta(b))))
        for i in ax_xi1:
            for k in ax_eta1:
                pairs.append((i, k, lambda a, b: (xi(a) - eta(b)) ** -2))
        for i in ax_xi2:
            for k in ax_eta2:
                pairs.append((i, k, lambda a, b: (xi(a) - eta(b)) ** -2))
        intra = []
        for block in (ax_xi1, ax_xi2, ax_eta1, ax_eta2):
            for p in range(len(block)):
                for q in range(p + 1, len(block)):
                    intra.append((block[p], block[q]))

        sign = (-1.0) ** (n1 + n2)
        total = 0.0 + 0.0j
        err = 0.0
        from itertools import product as _product
        for combo in _product(monomial, repeat=len(intra)):
            coef = 1.0
            powers = [0] * total_vars
            for (p, q), (ep, eq, c) in zip(intra, combo):
                coef *= c
                powers[p] += ep
                powers[q] += eq

            def vec_for(k):
                f = factors[k]
                e = powers[k]
                if e == 0:
                    return f
                cd = coord[k]
                return lambda u, f=f, e=e, cd=cd: f(u) * cd(u) ** e

            vectors = [vec_for(k) for k in range(total_vars)]
            for i, k in zip(ax_xi2, ax_eta2):
                tail = [(i, k, lambda a, b: xi(a) - eta(b))]
                res = integrate_pair_network(contours, specs, vectors,
                                             pairs + tail,
                                             scalar=sign * coef)
                total += res.value
                err += res.est_error
        return total, err

    acc = 0.0 + 0.0j
    acc_err = 0.0
    tensor_scale = 0.0
    for kx, ke, w, mult in branches:
        t_val, t_err = branch_value(kx, ke)
        acc += mult * w * t_val
        acc_err += mult * abs(w) * t_err
        tensor_scale = max(tensor_scale, abs(t_val))
    acc_err += skipped_mass * max(tensor_scale, 1.0)
    acc *= (-1.0) ** (2 - 1)

    # normalized scale: exponential prefactors, density asymptote and the
    # per-variable jacobians, combined in log space
    tau_i = np.asarray(sg.tau_incr)
    h_i = np.asarray(sg.h_incr)
    nvec = np.asarray(n.n, dtype=float)
    log_scale = (-(4.0 / 3.0) * float(nvec @ tau_i) * L ** 1.5
                 - 2.0 * _SQRT2 * float(nvec @ h_i) * L ** 0.75
                 + (4.0 / 3.0) * L ** 1.5
                 + np.log(8.0 * np.pi * L)
                 + total_vars * np.log(eps_scale))
    mag = abs(acc)
    est = acc_err * float(np.exp(log_scale))
    if mag == 0.0:
        return LawResult(0.0, est, 0.0, "term_ratio_step", meta)
    raw = (acc / mag) * np.exp(log_scale + np.log(mag))
    return _finalize(raw, est, "term_ratio_step", meta)


# ---------------------------------------------------------------------------
# Remainder bound diagnostics

def remainder_log_bound(grid: Grid, n: MultiIndex | Sequence[int], L: float,
                        c_user: float, eps: float = 0.05) -> float:
    """Log of the suppression bound for one multi-index term.

    Evaluates, in log space,

        n1^(n1/2) prod_j (n_j + n_{j+1})^((n_j+n_{j+1})/2) n_m^(n_m/2)
        * c_user^(sum n) / (n!)^2 * exp(-(4(1-2 eps)/3) sum_j tau_incr_j n_j L^(3/2))

    The constant is not constructive; callers supply c_user, and the result
    is a diagnostic, not a certified error bound.
    """
    n = n if isinstance(n, MultiIndex) else MultiIndex(tuple(n))
    if len(n.n) != grid.m:
        raise ValueError("multi-index length must match the grid")
    if not 0.0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if not c_user > 0:
        raise ValueError("c_user must be positive")
    nv = n.n
    m = grid.m
    log_comb = 0.5 * nv[0] * _safe_log(nv[0]) + 0.5 * nv[-1] * _safe_log(nv[-1])
    for j in range(m - 1):
        s = nv[j] + nv[j + 1]
        log_comb += 0.5 * s * _safe_log(s)
    log_fact = sum(math.lgamma(v + 1) for v in nv)
    tau_i = np.diff(np.concatenate([[0.0], np.asarray(grid.taus)]))
    expo = -(4.0 * (1.0 - 2.0 * eps) / 3.0) * float(np.dot(tau_i, nv)) * L ** 1.5
    return float(log_comb + n.total * np.log(c_user) - 2.0 * log_fact + expo)


def _safe_log(v: int) -> float:
    return math.log(v) if v > 0 else 0.0


def remainder_series_log_bound(grid: Grid, L: float, c_user: float,
                               eps: float = 0.05, cutoff: int = 8
                               ) -> tuple[float, float]:
    """Log of the summed bound over all n != (1,...,1) up to the cutoff,
    plus a log geometric tail estimate for the omitted indices.

    The tail estimate multiplies the boundary shell's mass by r/(1-r)
    where r is the largest single-increment decay ratio; it is a diagnostic
    companion to the partial sum, not a certificate.
    """
    m = grid.m
    ones = (1,) * m
    logs = []
    shell_logs = []
    for idx in np.ndindex(*([cutoff] * m)):
        nv = tuple(v + 1 for v in idx)
        if nv == ones:
            continue
        lb = remainder_log_bound(grid, nv, L, c_user, eps)
        logs.append(lb)
        if max(nv) == cutoff:
            shell_logs.append(lb)
    log_sum = _logsumexp(logs)
    tau_min = float(np.min(np.diff(np.concatenate([[0.0], np.asarray(grid.taus)]))))
    log_r = (np.log(c_user) - (4.0 * (1.0 - 2.0 * eps) / 3.0) * tau_min * L ** 1.5
             - 2.0 * np.log(cutoff + 1))
    r = np.exp(min(log_r, -1e-12))
    log_tail = _logsumexp(shell_logs) + np.log(r / (1.0 - r)) if shell_logs else -np.inf
    return float(log_sum), float(log_tail)


def _logsumexp(logs: Sequence[float]) -> float:
    if not logs:
        return -np.inf
    arr = np.asarray(logs, dtype=float)
    mx = float(np.max(arr))
    if np.isneginf(mx):
        return -np.inf
    return mx + float(np.log(np.sum(np.exp(arr - mx))))
