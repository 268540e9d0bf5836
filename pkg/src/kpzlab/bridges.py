"""Brownian-bridge joint laws: densities, tail probabilities and samplers.

Three independent routes to the same joint tail probability are provided:
a closed form for a single time, a contour-integral evaluation valid for any
number of distinct times, and an exact Monte Carlo sampler.  On top of these
sit the two limit laws describing the conditioned field near its pinning
segment (step and flat start) and an exact sampler for the limit field with
its vertex-process representation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .contours import ComplexResult, Contour, QuadSpec, integrate_tensor
from .errors import DimensionTooLarge, ResidualTooLarge
from .kernels import quadratic_kernel

STEP = "step"
FLAT = "flat"

_DECAY_LOG_FLOOR = 42.0  # exp(-42) ~ 5.7e-19 relative cutoff for line truncation
_IMAG_RESIDUAL_TOL = 1e-8
_MC_CHUNK = 1 << 20


def gaussian_pdf(b: float, var: float) -> float:
    """Centered Gaussian density with the given variance, evaluated at b."""
    return float(np.exp(-b * b / (2.0 * var)) / np.sqrt(2.0 * np.pi * var))


@dataclass(frozen=True)
class TimePartition:
    """Times 0 = a_0 < a_1 < ... < a_m = 1 pinning a bridge computation."""

    times: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size < 2 or t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("partition must start at 0 and end at 1")
        if not np.all(np.diff(t) > 0):
            raise ValueError("partition times must be strictly increasing")
        object.__setattr__(self, "times", tuple(float(x) for x in t))

    @classmethod
    def from_interior(cls, interior: Sequence[float]) -> "TimePartition":
        return cls((0.0, *interior, 1.0))

    @property
    def m(self) -> int:
        return len(self.times) - 1

    @property
    def increments(self) -> np.ndarray:
        return np.diff(np.asarray(self.times))


def _full_levels(p: TimePartition, b: Sequence[float]) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.size != p.m - 1:
        raise ValueError(f"need {p.m - 1} interior levels, got {b.size}")
    return np.concatenate([[0.0], b, [0.0]])


def bridge_joint_density(p: TimePartition, b: Sequence[float]) -> float:
    """Joint density of a standard bridge at the interior partition times.

    Equals sqrt(2*pi) times the product of Gaussian increment densities with
    the bridge pinned to 0 at both ends.
    """
    lv = _full_levels(p, b)
    dens = np.sqrt(2.0 * np.pi)
    for da, db in zip(p.increments, np.diff(lv)):
        dens *= gaussian_pdf(db, da)
    return float(dens)


def bridge_tail_closed(tau: float, b: float) -> float:
    """P(B(tau) > b) for a standard bridge; the marginal is N(0, tau(1-tau))."""
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly inside (0, 1)")
    sigma = np.sqrt(tau * (1.0 - tau))
    return float(ndtr(-b / sigma))


def default_line_spec(p: TimePartition, nodes_per_leg: int = 96) -> QuadSpec:
    """Vertical-line spec sized to the slowest Gaussian decay in the chain."""
    a_min = float(np.min(p.increments))
    radius = float(np.sqrt(2.0 * _DECAY_LOG_FLOOR / a_min))
    return QuadSpec(truncation_radius=radius, nodes_per_leg=nodes_per_leg)


def bridge_tail_contour(p: TimePartition, b: Sequence[float],
                        spec: QuadSpec | None = None,
                        abscissa: float = 0.0, spacing: float = 1.0,
                        with_diagnostics: bool = False):
    """P(B(a_j) > b_j for all interior j) by tensor contour quadrature.

    Vertical lines sit at abscissa + k*spacing, listed left to right, all
    upward.  The imaginary part of the quadrature is a residual diagnostic and
    must stay below 1e-8.
    """
    m = p.m
    if m > 5:
        raise DimensionTooLarge("bridge contour evaluation is limited to m <= 5")
    lv = _full_levels(p, b)
    incr_a = p.increments
    incr_b = np.diff(lv)
    if spec is None:
        spec = default_line_spec(p)
    contours = [Contour.vertical_line(abscissa + k * spacing) for k in range(m)]

    def integrand(*u):
        val = quadratic_kernel(u[0], incr_a[0], incr_b[0])
        for j in range(1, m):
            val = val * quadratic_kernel(u[j], incr_a[j], incr_b[j])
        for j in range(m - 1):
            val = val / (u[j + 1] - u[j])
        return val

    res = integrate_tensor(contours, spec, integrand)
    scaled = np.sqrt(2.0 * np.pi) * res.value
    est = np.sqrt(2.0 * np.pi) * res.est_error
    if abs(scaled.imag) > _IMAG_RESIDUAL_TOL:
        raise ResidualTooLarge(
            f"imaginary residual {scaled.imag:.3e} exceeds {_IMAG_RESIDUAL_TOL}")
    if with_diagnostics:
        return float(scaled.real), float(est), float(abs(scaled.imag))
    return float(scaled.real)


def bridge_tail_mc(p: TimePartition, b: Sequence[float], n: int,
                   seed: int) -> tuple[float, float]:
    """Exact-sampling Monte Carlo estimate of the joint bridge tail.

    Sequential conditional Gaussians (no discretization bias); returns the
    estimate and its 1-sigma standard error.  Fixed seed gives a bit-stable
    result.
    """
    b = np.asarray(b, dtype=float)
    times = np.asarray(p.times)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n:
        k = min(_MC_CHUNK, n - done)
        alive = np.ones(k, dtype=bool)
        prev_t = 0.0
        prev_b = np.zeros(k)
        for j in range(1, p.m):
            t = times[j]
            mean = prev_b * (1.0 - t) / (1.0 - prev_t)
            var = (t - prev_t) * (1.0 - t) / (1.0 - prev_t)
            prev_b = mean + np.sqrt(var) * rng.standard_normal(k)
            alive &= prev_b > b[j - 1]
            prev_t = t
        hits += int(alive.sum())
        done += k
    p_hat = hits / n
    se = np.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / n)
    return float(p_hat), float(se)


# ---------------------------------------------------------------------------
# Limit laws of the conditioned field

@dataclass(frozen=True)
class LimitQuery:
    """Interior evaluation points (tau_j, x_j) and levels h_j of a limit law.

    Times may repeat; all must lie strictly inside (0, 1).
    """

    taus: tuple
    xs: tuple
    hs: tuple
    condition: str = STEP

    def __post_init__(self):
        taus = tuple(float(t) for t in np.atleast_1d(self.taus))
        xs = tuple(float(x) for x in np.atleast_1d(self.xs))
        hs = tuple(float(h) for h in np.atleast_1d(self.hs))
        if not (len(taus) == len(xs) == len(hs)) or not taus:
            raise ValueError("taus, xs, hs must be non-empty and equally long")
        if any(not 0.0 < t < 1.0 for t in taus):
            raise ValueError("limit-law times must lie strictly inside (0, 1)")
        if self.condition not in (STEP, FLAT):
            raise ValueError(f"condition must be {STEP!r} or {FLAT!r}")
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "hs", hs)


def _merge_tied(taus: Sequence[float], levels: Sequence[float]):
    """Collapse repeated times keeping the max level (nested-event identity)."""
    merged: dict[float, float] = {}
    for t, lv in zip(taus, levels):
        merged[t] = max(lv, merged[t]) if t in merged else lv
    ts = sorted(merged)
    return ts, [merged[t] for t in ts]


def _one_sided_tail(taus, levels, spec) -> float:
    ts, lv = _merge_tied(taus, levels)
    part = TimePartition.from_interior(ts)
    return bridge_tail_contour(part, lv, spec=spec)


def limit_tail_step(q: LimitQuery, spec: QuadSpec | None = None) -> float:
    """Step-start limit law: P(min(B1 + x, B2 - x) > h at all query points).

    Factorizes into two independent one-sided bridge tails with levels
    h -+ x; tied times collapse to their maximum level first.
    """
    if q.condition != STEP:
        raise ValueError("query condition must be 'step'")
    side1 = [h - x for h, x in zip(q.hs, q.xs)]
    side2 = [h + x for h, x in zip(q.hs, q.xs)]
    return (_one_sided_tail(q.taus, side1, spec)
            * _one_sided_tail(q.taus, side2, spec))


def flat_z_integrand(q: LimitQuery, z: float,
                     spec: QuadSpec | None = None) -> float:
    """Product of the two shifted one-sided tails at a fixed mixing value z."""
    shift = [(1.0 - t) * z / np.sqrt(2.0) for t in q.taus]
    side1 = [h - x - s for h, x, s in zip(q.hs, q.xs, shift)]
    side2 = [h + x + s for h, x, s in zip(q.hs, q.xs, shift)]
    return (_one_sided_tail(q.taus, side1, spec)
            * _one_sided_tail(q.taus, side2, spec))


def limit_tail_flat(q: LimitQuery, z_order: int = 64,
                    spec: QuadSpec | None = None) -> float:
    """Flat-start limit law: standard-normal mixture of shifted step laws.

    Gauss-Hermite quadrature in the common shift variable; z_order = 1
    degenerates the mixture to a point mass at 0 and recovers the step law.
    """
    if q.condition != FLAT:
        raise ValueError("query condition must be 'flat'")
    t_nodes, t_weights = np.polynomial.hermite.hermgauss(z_order)
    total = 0.0
    for t, w in zip(t_nodes, t_weights):
        total += w * flat_z_integrand(q, float(np.sqrt(2.0) * t), spec)
    return float(total / np.sqrt(np.pi))


def limit_tail_mc(q: LimitQuery, n: int, seed: int) -> tuple[float, float]:
    """Joint Monte Carlo of the min-of-bridges field itself (both conditions)."""
    ts = sorted(set(q.taus))
    idx = {t: k for k, t in enumerate(ts)}
    taus = np.asarray(ts)
    h = np.asarray(q.hs)
    x = np.asarray(q.xs)
    cols = np.array([idx[t] for t in q.taus])
    shift_coef = (1.0 - np.asarray(q.taus)) / np.sqrt(2.0)
    rng = np.random.default_rng(seed)
    hits = 0
    done = 0
    while done < n:
        k = min(_MC_CHUNK, n - done)
        b1 = _sample_bridge_paths(rng, taus, k)
        b2 = _sample_bridge_paths(rng, taus, k)
        z = rng.standard_normal(k)[:, None] if q.condition == FLAT else 0.0
        shift = shift_coef[None, :] * z
        v1 = b1[:, cols] + x[None, :] + shift
        v2 = b2[:, cols] - x[None, :] - shift
        ok = np.all((v1 > h[None, :]) & (v2 > h[None, :]), axis=1)
        hits += int(ok.sum())
        done += k
    p_hat = hits / n
    se = np.sqrt(max(p_hat * (1.0 - p_hat), 1e-300) / n)
    return float(p_hat), float(se)


# ---------------------------------------------------------------------------
# Exact sampling of the limit field

def _sample_bridge_paths(rng: np.random.Generator, taus: np.ndarray,
                         count: int) -> np.ndarray:
    """Exact bridge values at strictly increasing times in (0,1); (count, k)."""
    out = np.empty((count, taus.size))
    prev_t = 0.0
    prev_b = np.zeros(count)
    for j, t in enumerate(taus):
        mean = prev_b * (1.0 - t) / (1.0 - prev_t)
        var = (t - prev_t) * (1.0 - t) / (1.0 - prev_t)
        prev_b = mean + np.sqrt(var) * rng.standard_normal(count)
        out[:, j] = prev_b
        prev_t = t
    return out


@dataclass(frozen=True)
class FieldSample:
    """One exact draw of the limit field on a time grid.

    The field is x -> min(B1(tau) + x + s, B2(tau) - x - s) with the common
    shift s = (1 - tau) z / sqrt(2) present only under the flat condition.
    """

    seed: int
    taus: np.ndarray
    bridge1: np.ndarray
    bridge2: np.ndarray
    z: float
    condition: str = STEP

    @property
    def shift(self) -> np.ndarray:
        if self.condition == FLAT:
            return (1.0 - self.taus) * self.z / np.sqrt(2.0)
        return np.zeros_like(self.taus)

    def values(self, x) -> np.ndarray:
        """Field values at spatial offset x (scalar or per-tau array)."""
        s = self.shift
        return np.minimum(self.bridge1 + x + s, self.bridge2 - x - s)

    @property
    def vertex(self) -> tuple[np.ndarray, np.ndarray]:
        """Apex trajectory (v1, v2) of the moving downward right angle."""
        v1 = 0.5 * (-self.bridge1 + self.bridge2) - self.shift
        v2 = 0.5 * (self.bridge1 + self.bridge2)
        return v1, v2


def _validate_sample_taus(taus) -> np.ndarray:
    t = np.asarray(taus, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("need a one-dimensional, non-empty tau grid")
    if not (np.all(t > 0) and np.all(t < 1) and np.all(np.diff(t) > 0)):
        raise ValueError("tau grid must be strictly increasing inside (0, 1)")
    return t


def sample_limit_field(taus, condition: str, seed: int) -> FieldSample:
    """Draw one limit-field sample (two bridges, plus the mixing normal)."""
    t = _validate_sample_taus(taus)
    if condition not in (STEP, FLAT):
        raise ValueError(f"condition must be {STEP!r} or {FLAT!r}")
    rng = np.random.default_rng(seed)
    b1 = _sample_bridge_paths(rng, t, 1)[0]
    b2 = _sample_bridge_paths(rng, t, 1)[0]
    z = float(rng.standard_normal()) if condition == FLAT else 0.0
    return FieldSample(seed=seed, taus=t, bridge1=b1, bridge2=b2, z=z,
                       condition=condition)


def sample_limit_field_batch(taus, condition: str, seed: int,
                             count: int):
    """Vectorized draw of `count` limit-field samples.

    Returns (bridge1, bridge2, z) with path arrays of shape (count, len(taus));
    z is all zeros under the step condition.
    """
    t = _validate_sample_taus(taus)
    if condition not in (STEP, FLAT):
        raise ValueError(f"condition must be {STEP!r} or {FLAT!r}")
    rng = np.random.default_rng(seed)
    b1 = _sample_bridge_paths(rng, t, count)
    b2 = _sample_bridge_paths(rng, t, count)
    z = rng.standard_normal(count) if condition == FLAT else np.zeros(count)
    return b1, b2, z
