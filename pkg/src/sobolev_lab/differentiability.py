"""Difference quotients, L_p-approximate differentials and the density test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._parallel import pmap
from .convergence import ConvergenceReport, Trend, make_report
from .errors import DomainError, NumericError, PreconditionError, ResolutionError
from .grid import (
    Ball,
    Box,
    Grid,
    GridFunction,
    ball_weights,
    interpolate,
    lp_norm,
    multi_indices,
    derivative,
    wkp_norm,
)
from .representative import REP_TOL, RadiusSchedule, precise_rep
from .sources import GridSource, as_source

CONV_TOL = 1e-2
SLOPE_MIN = 0.5
IDENTITY_TOL = 5e-2


@dataclass(frozen=True)
class FormalDifferential:
    """The linear map ``z -> a . z`` attached to the point ``x``."""

    x: tuple
    a: tuple

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a))
        if not all(math.isfinite(v) for v in a):
            raise DomainError("differential must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "x", tuple(float(v) for v in np.atleast_1d(self.x)))

    def __call__(self, z):
        return np.asarray(z, dtype=float) @ np.asarray(self.a)


def default_schedule(src) -> RadiusSchedule:
    if isinstance(src, GridSource):
        h = max(src.f.grid.spacing)
        return RadiusSchedule(24.0 * h, 0.5, 4)
    if src.n >= 3:
        # keeps 3D patches near 70^3 nodes
        return RadiusSchedule(0.01, 0.5, 4)
    return RadiusSchedule(0.02, 0.5, 6)


def _patch_spacing(sched: RadiusSchedule) -> float:
    return sched.r_min / 4.0


def formal_differential(f, x, sched: RadiusSchedule | None = None, rep_tol: float = REP_TOL) -> FormalDifferential:
    """``(grad f)*(x)`` as a formal differential; unconverged representatives are refused."""
    src = as_source(f)
    sched = sched or default_schedule(src)
    grad = src.gradient(center=x, reach=sched.r0, spacing=_patch_spacing(sched))
    est, ok = precise_rep(grad, x, sched, rep_tol)
    if not ok:
        raise PreconditionError(f"gradient representative does not settle at {tuple(float(v) for v in np.atleast_1d(x))}")
    return FormalDifferential(x, est)


# --------------------------------------------------------------------------
# reference lattices over U
# --------------------------------------------------------------------------


def _bbox(U):
    if isinstance(U, Ball):
        c = np.asarray(U.center)
        return c - U.radius, c + U.radius
    if isinstance(U, Box):
        return np.asarray(U.lower), np.asarray(U.upper)
    raise DomainError("U must be a Ball or a Box")


def reference_lattice(U, h_ref: float | None = None, margin: int = 2) -> Grid:
    """Lattice over U's bounding box plus ``margin`` nodes, centred on the box."""
    lo, hi = _bbox(U)
    n = lo.size
    if h_ref is None:
        h_ref = float(np.max(hi - lo)) / {1: 64, 2: 32}.get(n, 16)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) + margin * h_ref
    return Grid.centered(center, half, h_ref)


def _lattice_reach(lattice: Grid, t: float) -> float:
    return t * max(max(abs(lo), abs(hi)) for lo, hi in zip(lattice.lower, lattice.upper))


def _values_for(src, x, t, lattice):
    """Lattice data for ``f`` around x + t * lattice, and the interpolation points."""
    reach = _lattice_reach(lattice, t)
    h_ref = min(lattice.spacing)
    if isinstance(src, GridSource):
        hf = max(src.f.grid.spacing)
        diam = float(np.max(np.subtract(lattice.upper, lattice.lower)))
        if t * diam < 2.0 * hf * (1 - 1e-12):
            raise ResolutionError(f"t={t} does not resolve the grid spacing {hf:.3g}")
    F = src.values(center=x, reach=reach, spacing=0.5 * t * h_ref)
    Y = np.asarray(x, dtype=float) + t * lattice.points()
    return F, Y


def difference_quotient(f, x, t: float, U, h_ref: float | None = None, lattice: Grid | None = None) -> GridFunction:
    """``z -> (f*(x + t z) - f*(x)) / t`` on a t-independent lattice over U."""
    if not t > 0:
        raise DomainError("t must be positive")
    src = as_source(f)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lattice = lattice or reference_lattice(U, h_ref)
    F, Y = _values_for(src, x, t, lattice)
    fx = float(interpolate(F, x[None, :])[0])
    return GridFunction(lattice, (interpolate(F, Y) - fx) / t)


def _error_field(f, x, t, U, L, h_ref, lattice):
    q = difference_quotient(f, x, t, U, h_ref, lattice)
    lin = q.grid.points() @ np.asarray(L.a)
    return q - GridFunction(q.grid, lin)


def diffquot_parts(f, x, t, p, U, L: FormalDifferential | None = None, sched=None, h_ref=None, lattice=None):
    """``(value part, gradient part)`` of the W^1_p error of the quotient against ``L``."""
    if L is None:
        L = formal_differential(f, x, sched)
    err = _error_field(f, x, t, U, L, h_ref, lattice)
    wkp_norm(err, 1, p, U)  # boundary-inset check
    value = lp_norm(err, p, U)
    grad = sum(lp_norm(derivative(err, a), p, U) for a in multi_indices(err.grid.n, 1, exact=True))
    return value, grad


def diffquot_w1p_error(f, x, t, p, U, L: FormalDifferential | None = None, sched=None, h_ref=None) -> float:
    """``||f_{x,t} - Df(x)||_{W^1_p(U)}``; raises PreconditionError if Df(x) is unavailable."""
    value, grad = diffquot_parts(f, x, t, p, U, L, sched, h_ref)
    return value + grad


def diffquot_study(
    f,
    x,
    p: float,
    U,
    ts,
    sched: RadiusSchedule | None = None,
    h_ref: float | None = None,
    conv_tol: float = CONV_TOL,
    slope_min: float = SLOPE_MIN,
    jobs: int | None = None,
) -> ConvergenceReport:
    src = as_source(f)
    L = formal_differential(src, x, sched)
    lattice = reference_lattice(U, h_ref)
    ts = [float(t) for t in ts]
    parts = pmap(lambda t: diffquot_parts(src, x, t, p, U, L, None, None, lattice), ts, jobs)
    vals = [v for v, _ in parts]
    grads = [g for _, g in parts]
    errors = [v + g for v, g in parts]
    return make_report(
        ts, errors, conv_tol, slope_min,
        columns={"value_part": vals, "gradient_part": grads},
        notes={"a": L.a},
    )


# --------------------------------------------------------------------------
# L_p-approximate differential
# --------------------------------------------------------------------------


class ApproxDifferential(NamedTuple):
    a_fit: np.ndarray
    report: ConvergenceReport


def _ball_data(F: GridFunction, x, r):
    slices, w = ball_weights(F.grid, x, r)
    live = w > 0
    pts = F.grid.points()[slices][live]
    return w[live], pts - np.asarray(x), F.values[slices][live]


def _fit(w, d, y, p, a0, max_iter=500):
    G = d.T @ (w[:, None] * d)
    if np.linalg.cond(G) > 1e12:
        raise NumericError("degenerate regression: ball samples do not span R^n")
    if p == 2:
        return np.linalg.solve(G, d.T @ (w * y))
    a = np.zeros(d.shape[1]) if a0 is None else np.asarray(a0, dtype=float).copy()
    floor = 1e-12 * (1.0 + float(np.max(np.abs(y))))

    def cost(a):
        return float(np.sum(w * np.abs(y - d @ a) ** p))

    # reweighted least squares majorises the cost for p <= 2; above 2 its step is
    # the Newton step times (p - 1), so undo that factor and backtrack instead
    scale = 1.0 if p < 2 else 1.0 / (p - 1.0)
    c = cost(a)
    for _ in range(max_iter):
        res = y - d @ a
        ww = w * np.maximum(np.abs(res), floor) ** (p - 2.0)
        step = np.linalg.solve(d.T @ (ww[:, None] * d), d.T @ (ww * res)) * scale
        t = 1.0
        while p > 2 and t > 1e-6 and cost(a + t * step) > c:
            t *= 0.5
        a_new = a + t * step
        if np.max(np.abs(a_new - a)) <= 1e-14 * (1.0 + np.max(np.abs(a_new))):
            return a_new
        a, c = a_new, cost(a_new)
    return a


def lp_approx_differential(
    f,
    x,
    p: float,
    sched: RadiusSchedule | None = None,
    a0=None,
    rep_tol: float = REP_TOL,
    conv_tol: float = CONV_TOL,
    slope_min: float = SLOPE_MIN,
    identity_tol: float = IDENTITY_TOL,
) -> ApproxDifferential:
    """Best L_p fit ``f(y) ~ f*(x) + a.(y - x)`` on each ball of the schedule.

    The report tracks ``mean |f - f*(x) - a.(y-x)|^p / r^p``.  When it
    converges to zero, ``report.notes`` records the gap between ``a_fit``
    and the gradient representative and whether it is below ``identity_tol``.
    """
    if not p >= 1:
        raise DomainError("p must be >= 1")
    src = as_source(f)
    sched = sched or default_schedule(src)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    F = src.field(None, center=x, reach=sched.r0, spacing=_patch_spacing(sched))
    fstar, ok = precise_rep(F, x, sched, rep_tol)
    if not ok:
        raise PreconditionError(f"representative of f does not settle at {tuple(float(v) for v in x)}")
    fits, resid = [], []
    a = a0
    for r in sched.radii:
        w, d, y = _ball_data(F, x, r)
        y = y - fstar
        a = _fit(w, d, y, float(p), a0)
        fits.append(a)
        resid.append(float(np.sum(w * np.abs(y - d @ a) ** p) / np.sum(w)) / r**p)
    a_fit = fits[-1]
    cols = {f"a{i}": [float(v[i]) for v in fits] for i in range(x.size)}
    report = make_report(sched.radii, resid, conv_tol, slope_min, columns=cols, notes={"f_star": fstar})
    if report.verdict is Trend.CONVERGES:
        grad = src.gradient(center=x, reach=sched.r0, spacing=_patch_spacing(sched))
        g, g_ok = precise_rep(grad, x, sched, rep_tol)
        gap = float(np.linalg.norm(a_fit - np.atleast_1d(g)))
        report.notes.update(gradient_rep=np.atleast_1d(g), gradient_converged=g_ok,
                            identity_gap=gap, identity_ok=bool(g_ok and gap < identity_tol))
    return ApproxDifferential(np.asarray(a_fit), report)


# --------------------------------------------------------------------------
# density of the set where the linearisation is eps-bad
# --------------------------------------------------------------------------


@dataclass
class DensityReport:
    radii: list
    densities: list
    chebyshev_bounds: list
    chebyshev_ok: bool
    trend: ConvergenceReport

    @property
    def tends_to_zero(self) -> bool:
        return self.densities[-1] == 0.0 or self.trend.verdict is Trend.CONVERGES


def density_test(
    f,
    x,
    L: FormalDifferential,
    eps: float,
    sched: RadiusSchedule | None = None,
    p: float = 1.0,
    rep_tol: float = REP_TOL,
    slack: float = 0.1,
) -> DensityReport:
    """Weighted share of ``B(x, r)`` where ``|f - f*(x) - L(y-x)| / |y-x| > eps``.

    Each share is compared with the Chebyshev bound ``mean(D^p) / eps^p``.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    src = as_source(f)
    sched = sched or default_schedule(src)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    F = src.field(None, center=x, reach=sched.r0, spacing=_patch_spacing(sched))
    fstar, _ = precise_rep(F, x, sched, rep_tol)
    a = np.asarray(L.a)
    dens, bounds = [], []
    for r in sched.radii:
        w, d, y = _ball_data(F, x, r)
        dist = np.sqrt(np.sum(d * d, axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            D = np.where(dist > 0, np.abs(y - fstar - d @ a) / np.where(dist > 0, dist, 1.0), 0.0)
        W = float(np.sum(w))
        dens.append(float(np.sum(w * (D > eps))) / W)
        bounds.append(float(np.sum(w * D**p)) / W / eps**p)
    ok = all(dv <= (1.0 + slack) * b + 1e-15 for dv, b in zip(dens, bounds))
    trend = make_report(sched.radii, dens, columns={"chebyshev_bound": bounds})
    return DensityReport(list(sched.radii), dens, bounds, ok, trend)
