"""Complex contours and deterministic quadrature over them.

Two contour families are supported: symmetric ray pairs (two rays leaving a
vertex at angles +theta and -theta, traversed upward through the vertex) and
vertical lines, which are the theta = pi/2 special case.  Ray pairs with
theta in (pi/2, pi) have legs running to Re -> -inf ("left" family); theta in
(0, pi/2) gives the mirrored "right" family.

All quadratures are deterministic for a fixed spec: node layout, weights and
the summation order never depend on runtime state.  Error estimates come from
re-evaluation at half resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionTooLarge, DivergentQuadrature, NonFiniteIntegrand

LEFT_LEG_ANGLE = 2.0 * np.pi / 3.0
RIGHT_LEG_ANGLE = np.pi / 3.0

RAY_PAIR = "ray_pair"
VERTICAL_LINE = "vertical_line"

_GL_PANEL_RATIO = 0.6  # geometric refinement of panel edges toward the vertex
_CHUNK_ELEMS = 1 << 22  # max lattice elements touched per chunk in tensor sums
_TWO_PI_I = 2.0j * np.pi


@dataclass(frozen=True)
class QuadSpec:
    """Deterministic quadrature controls for one contour leg.

    truncation_radius: maximum arc-length parameter |r| along a leg.
    nodes_per_leg: total nodes on each leg (a contour has two legs).
    scheme: "gauss_legendre_panels" (geometrically refined panels) or
        "clenshaw_curtis" (single closed rule per leg).
    panel_count: number of panels for the panel scheme.
    relative_tolerance: target used only for self-consistency reporting.
    """

    truncation_radius: float
    nodes_per_leg: int = 96
    scheme: str = "gauss_legendre_panels"
    panel_count: int = 6
    relative_tolerance: float = 1e-9

    def __post_init__(self):
        if not self.truncation_radius > 0:
            raise ValueError("truncation_radius must be positive")
        if self.nodes_per_leg < 4:
            raise ValueError("nodes_per_leg must be at least 4")
        if self.scheme not in ("gauss_legendre_panels", "clenshaw_curtis"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.panel_count < 1:
            raise ValueError("panel_count must be positive")
        if not self.relative_tolerance > 0:
            raise ValueError("relative_tolerance must be positive")

    def halved(self) -> "QuadSpec":
        return replace(self, nodes_per_leg=max(4, self.nodes_per_leg // 2))


@dataclass(frozen=True)
class ComplexResult:
    """A complex quadrature value with a half-resolution error estimate."""

    value: complex
    est_error: float

    def __post_init__(self):
        if not self.est_error >= 0:
            raise ValueError("est_error must be nonnegative")


@dataclass(frozen=True)
class Contour:
    """An oriented integration path: a symmetric ray pair or a vertical line.

    vertex: apex of the ray pair, or the real abscissa of a vertical line.
    angle: leg angle theta; legs are vertex + r * exp(+-i*theta), r > 0.
    orientation: +1 traverses from exp(-i*theta)*inf to exp(+i*theta)*inf
        ("upward"), -1 the reverse.
    """

    kind: str
    vertex: complex
    angle: float
    orientation: int = 1

    def __post_init__(self):
        if self.kind not in (RAY_PAIR, VERTICAL_LINE):
            raise ValueError(f"unknown contour kind {self.kind!r}")
        if not 0.0 < self.angle < np.pi:
            raise ValueError("leg angle must lie strictly between 0 and pi")
        if self.orientation not in (+1, -1):
            raise ValueError("orientation must be +1 (upward) or -1 (downward)")
        if self.kind == VERTICAL_LINE:
            if abs(self.angle - np.pi / 2) > 1e-12:
                raise ValueError("vertical lines have leg angle pi/2")
            if abs(complex(self.vertex).imag) != 0.0:
                raise ValueError("vertical-line vertex is its real abscissa")

    @classmethod
    def ray_pair(cls, vertex: complex, angle: float = LEFT_LEG_ANGLE,
                 orientation: int = 1) -> "Contour":
        return cls(RAY_PAIR, complex(vertex), float(angle), orientation)

    @classmethod
    def vertical_line(cls, abscissa: float, orientation: int = 1) -> "Contour":
        return cls(VERTICAL_LINE, complex(abscissa), np.pi / 2, orientation)

    @property
    def family(self) -> str:
        """"left" if legs run to Re -> -inf, "right" if to +inf."""
        c = np.cos(self.angle)
        if self.kind == VERTICAL_LINE or abs(c) < 1e-12:
            return "vertical"
        return "left" if c < 0 else "right"

    def reflected(self) -> "Contour":
        """Pointwise negation of the path, re-oriented upward.

        Maps a left-family contour with vertex w to the right-family contour
        with vertex -w (and vice versa), matching the mirrored leg angle.
        """
        if self.kind == VERTICAL_LINE:
            return Contour.vertical_line(-complex(self.vertex).real, self.orientation)
        return Contour(RAY_PAIR, -self.vertex, np.pi - self.angle, self.orientation)

    def nodes(self, spec: QuadSpec) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and complex weights such that
        integral f(u) du ~= sum(w * f(nodes))."""
        r, wr = _leg_rule(spec)
        if self.kind == VERTICAL_LINE:
            e_up = 1j  # exact, keeps node sets exactly conjugate-symmetric
        else:
            e_up = np.exp(1j * self.angle)
        e_dn = np.conj(e_up)
        pts_dn = self.vertex + r[::-1] * e_dn
        pts_up = self.vertex + r * e_up
        w_dn = -e_dn * wr[::-1]
        w_up = e_up * wr
        pts = np.concatenate([pts_dn, pts_up])
        w = np.concatenate([w_dn, w_up]) * self.orientation
        return pts, w


def _gauss_legendre_panels(spec: QuadSpec) -> tuple[np.ndarray, np.ndarray]:
    edges = [0.0] + [
        spec.truncation_radius * _GL_PANEL_RATIO ** k
        for k in range(spec.panel_count - 1, -1, -1)
    ]
    base, rem = divmod(spec.nodes_per_leg, spec.panel_count)
    counts = [base + (1 if k < rem else 0) for k in range(spec.panel_count)]
    rs, ws = [], []
    for (lo, hi), n in zip(zip(edges[:-1], edges[1:]), counts):
        x, w = np.polynomial.legendre.leggauss(max(n, 1))
        rs.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(rs), np.concatenate(ws)


def _clenshaw_curtis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Closed Clenshaw-Curtis rule with n nodes on [-1, 1]."""
    if n < 2:
        raise ValueError("clenshaw_curtis needs at least 2 nodes")
    theta = np.pi * np.arange(n) / (n - 1)
    x = -np.cos(theta)
    w = np.zeros(n)
    jmax = (n - 1) // 2
    for k in range(n):
        s = 0.0
        for j in range(1, jmax + 1):
            factor = 0.5 if (2 * j == n - 1) else 1.0
            s += factor * np.cos(2 * j * theta[k]) / (4 * j * j - 1)
        w[k] = (2.0 / (n - 1)) * (1.0 - 2.0 * s)
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


def _leg_rule(spec: QuadSpec) -> tuple[np.ndarray, np.ndarray]:
    if spec.scheme == "gauss_legendre_panels":
        return _gauss_legendre_panels(spec)
    x, w = _clenshaw_curtis(spec.nodes_per_leg)
    half = 0.5 * spec.truncation_radius
    return half * (x + 1.0), half * w


def scale_contour(c: Contour, center: complex, factor: float) -> Contour:
    """Affine image center + factor * c, preserving orientation.

    For vertical lines the image abscissa is Re(center) + factor * abscissa;
    an imaginary part of the center shifts a vertical line along itself.
    """
    if not factor > 0:
        raise ValueError("factor must be positive")
    vertex = complex(center) + factor * complex(c.vertex)
    if c.kind == VERTICAL_LINE:
        return Contour.vertical_line(vertex.real, c.orientation)
    return Contour(RAY_PAIR, vertex, c.angle, c.orientation)


def probe_truncation_radius(factor: Callable[[np.ndarray], np.ndarray],
                            contour: Contour,
                            start: float = 4.0,
                            rel_floor: float = 1e-16,
                            r_max: float = 512.0) -> float:
    """Smallest radius in a doubling ladder where |factor| has decayed below
    rel_floor of its near-vertex magnitude, on both legs.

    `factor` is the separable single-variable part of the integrand; the probe
    is a handful of evaluations and fully deterministic.
    """
    if contour.kind == VERTICAL_LINE:
        e_up = 1j
    else:
        e_up = np.exp(1j * contour.angle)
    dirs = np.array([e_up, np.conj(e_up)])
    ref_r = np.array([0.0, 0.125, 0.25, 0.5, 1.0])
    ref_pts = (contour.vertex + ref_r[:, None] * dirs[None, :]).ravel()
    ref = np.max(np.abs(np.asarray(factor(ref_pts))))
    if not np.isfinite(ref) or ref == 0.0:
        raise NonFiniteIntegrand("probe reference magnitude is not usable")
    r = start
    while r <= r_max:
        tail = np.abs(np.asarray(factor(contour.vertex + r * dirs)))
        if np.all(tail <= rel_floor * ref):
            return r
        r *= 2.0
    return r_max


def _check_finite(vals: np.ndarray) -> None:
    if not np.all(np.isfinite(vals)):
        raise NonFiniteIntegrand("integrand returned NaN or infinity at a node")


def _divergence_check(value: complex, est: float, l1_scale: float,
                      rtol: float) -> None:
    threshold = 1e3 * rtol * max(abs(value), 1e-3 * l1_scale)
    if est > threshold and threshold > 0:
        raise DivergentQuadrature(
            f"half/full resolution differ by {est:.3e} (threshold {threshold:.3e})")


def integrate(contour: Contour, spec: QuadSpec,
              integrand: Callable[[np.ndarray], np.ndarray]) -> ComplexResult:
    """Quadrature of integral integrand(u) du / (2*pi*i) along the contour.

    The 1/(2*pi*i) normalization is included.  est_error is the difference
    against a half-resolution re-evaluation.
    """

    def run(sp: QuadSpec) -> tuple[complex, float]:
        pts, w = contour.nodes(sp)
        vals = np.asarray(integrand(pts), dtype=np.complex128)
        _check_finite(vals)
        contrib = w * vals
        return complex(contrib.sum() / _TWO_PI_I), float(np.abs(contrib).sum() / (2 * np.pi))

    value, l1 = run(spec)
    half, _ = run(spec.halved())
    est = abs(value - half)
    _divergence_check(value, est, l1, spec.relative_tolerance)
    return ComplexResult(value, est)


def _tensor_sum(node_sets: Sequence[np.ndarray], weight_sets: Sequence[np.ndarray],
                integrand: Callable[..., np.ndarray]) -> complex:
    """Chunked lattice sum  sum_i prod_k w_k(i_k) * integrand(u_1, ..., u_d).

    The integrand receives open-grid (broadcastable) coordinate arrays so that
    separable factors can be evaluated on small axes before broadcasting.
    Summation order is fixed (C-order within chunks, chunks in sequence), so
    results are bit-stable for a fixed spec.
    """
    dim = len(node_sets)
    shape = tuple(len(p) for p in node_sets)
    rest = int(np.prod(shape[1:])) if dim > 1 else 1
    chunk_rows = max(1, _CHUNK_ELEMS // max(rest, 1))
    grids = []
    for k, pts in enumerate(node_sets):
        gshape = [1] * dim
        gshape[k] = len(pts)
        grids.append(pts.reshape(gshape))
    total = 0.0 + 0.0j
    n0 = shape[0]
    for lo in range(0, n0, chunk_rows):
        hi = min(n0, lo + chunk_rows)
        coords = [grids[0][lo:hi]] + grids[1:]
        vals = np.asarray(integrand(*coords), dtype=np.complex128)
        _check_finite(vals)
        out = vals * weight_sets[0][lo:hi].reshape(coords[0].shape)
        for k in range(1, dim):
            out = out * weight_sets[k].reshape(grids[k].shape)
        total += out.sum()
    return total


def integrate_tensor(contours: Sequence[Contour],
                     spec: QuadSpec | Sequence[QuadSpec],
                     integrand: Callable[..., np.ndarray]) -> ComplexResult:
    """Tensor-product quadrature over a Cartesian product of contours.

    One 1/(2*pi*i) factor is applied per dimension.  The integrand must be
    numpy-vectorized: it is called with one broadcastable array per contour.
    `spec` may be a single QuadSpec or one per contour.
    """
    dim = len(contours)
    if dim < 1:
        raise ValueError("need at least one contour")
    if dim > 8:
        raise DimensionTooLarge(f"tensor dimension {dim} exceeds the supported 8")
    specs = list(spec) if isinstance(spec, (list, tuple)) else [spec] * dim
    if len(specs) != dim:
        raise ValueError("need one spec per contour")

    def run(sps: Sequence[QuadSpec]) -> complex:
        nodes, weights = zip(*(c.nodes(s) for c, s in zip(contours, sps)))
        return _tensor_sum(nodes, weights, integrand) / _TWO_PI_I ** dim

    value = run(specs)
    half = run([s.halved() for s in specs])
    return ComplexResult(value, abs(value - half))


def integrate_pair_network(contours: Sequence[Contour],
                           spec: QuadSpec | Sequence[QuadSpec],
                           vector_factors: Sequence[Callable | None],
                           pair_factors: Sequence[tuple],
                           scalar: complex = 1.0) -> ComplexResult:
    """Tensor-product quadrature of a product of one- and two-variable factors.

    Computes the same lattice sum as integrate_tensor for an integrand of the
    form scalar * prod_k f_k(u_k) * prod_(i,j) g(u_i, u_j), but contracts it
    as a tensor network (per-axis vectors and pairwise matrices) instead of
    materializing the lattice; far cheaper whenever the coupling graph has
    small treewidth.

    vector_factors: one callable (or None) per contour; pair_factors: tuples
    (i, j, g) with i != j, where g receives broadcastable coordinate arrays.
    Deterministic: the contraction path depends only on the factor layout.
    """
    dim = len(contours)
    if dim < 1:
        raise ValueError("need at least one contour")
    if dim > 16:
        raise DimensionTooLarge(f"network dimension {dim} exceeds the supported 16")
    if len(vector_factors) != dim:
        raise ValueError("need one vector factor (or None) per contour")
    specs = list(spec) if isinstance(spec, (list, tuple)) else [spec] * dim
    if len(specs) != dim:
        raise ValueError("need one spec per contour")

    letters = "abcdefghijklmnop"

    def run(sps: Sequence[QuadSpec]) -> complex:
        nodes, weights = zip(*(c.nodes(s) for c, s in zip(contours, sps)))
        vecs = []
        for k in range(dim):
            v = np.asarray(weights[k], dtype=np.complex128).copy()
            if vector_factors[k] is not None:
                fv = np.asarray(vector_factors[k](nodes[k]), dtype=np.complex128)
                _check_finite(fv)
                v *= fv
            vecs.append(v)
        merged: dict[tuple[int, int], np.ndarray] = {}
        for i, j, g in pair_factors:
            if i == j or not (0 <= i < dim and 0 <= j < dim):
                raise ValueError(f"invalid pair axes ({i}, {j})")
            a, b = (i, j) if i < j else (j, i)
            ui = nodes[i].reshape(-1, 1) if i == a else nodes[i].reshape(1, -1)
            uj = nodes[j].reshape(1, -1) if j == b else nodes[j].reshape(-1, 1)
            mat = np.asarray(g(ui, uj), dtype=np.complex128)
            mat = np.broadcast_to(mat, (len(nodes[a]), len(nodes[b])))
            _check_finite(mat)
            merged[(a, b)] = merged[(a, b)] * mat if (a, b) in merged else mat
        subs = [letters[k] for k in range(dim)]
        ops: list[np.ndarray] = list(vecs)
        for (a, b), mat in sorted(merged.items()):
            subs.append(letters[a] + letters[b])
            ops.append(mat)
        total = np.einsum(",".join(subs) + "->", *ops, optimize="greedy")
        return complex(scalar * total / _TWO_PI_I ** dim)

    value = run(specs)
    half = run([s.halved() for s in specs])
    return ComplexResult(value, abs(value - half))


def circle_integrate(radius: float, spec: QuadSpec,
                     integrand: Callable[[np.ndarray], np.ndarray]) -> ComplexResult:
    """Trapezoidal rule for a counter-clockwise circle around the origin.

    Computes the contour integral of integrand(z) dz / (2*pi*i) on |z| = radius;
    spectrally accurate for integrands analytic near the circle.
    """
    if not radius > 1:
        raise ValueError("radius must exceed 1")

    def run(n: int) -> tuple[complex, float]:
        theta = 2.0 * np.pi * np.arange(n) / n
        z = radius * np.exp(1j * theta)
        vals = np.asarray(integrand(z), dtype=np.complex128)
        _check_finite(vals)
        contrib = vals * z
        return complex(contrib.sum() / n), float(np.abs(contrib).sum() / n)

    n_full = 2 * spec.nodes_per_leg
    value, l1 = run(n_full)
    half, _ = run(max(4, n_full // 2))
    est = abs(value - half)
    _divergence_check(value, est, l1, spec.relative_tolerance)
    return ComplexResult(value, est)
