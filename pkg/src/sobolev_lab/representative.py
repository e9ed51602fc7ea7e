"""Precise representatives, L_p-points and refined-gradient classification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from ._parallel import pmap
from .convergence import loglog_slope
from .errors import DomainError, ResolutionError
from .grid import AbsDev, Grid, VectorField, ball_average, multi_indices
from .sources import as_source

LP_TOL = 1e-3
NOT_TOL = 1e-1
REP_TOL = 1e-3


@dataclass(frozen=True)
class RadiusSchedule:
    """Radii ``r0 * ratio**j`` for ``j = 0 .. count-1``."""

    r0: float
    ratio: float = 0.5
    count: int = 6

    def __post_init__(self):
        if not self.r0 > 0:
            raise DomainError("r0 must be positive")
        if not 0 < self.ratio < 1:
            raise DomainError("ratio must lie in (0, 1)")
        if int(self.count) < 4:
            raise DomainError("a radius schedule needs at least 4 radii")
        object.__setattr__(self, "count", int(self.count))

    @property
    def radii(self) -> list:
        return [self.r0 * self.ratio**j for j in range(self.count)]

    @property
    def r_min(self) -> float:
        return self.r0 * self.ratio ** (self.count - 1)

    def check(self, grid: Grid):
        h = max(grid.spacing)
        if self.r_min < 3.0 * h * (1 - 1e-12):
            raise ResolutionError(f"smallest radius {self.r_min:.3g} is below 3 grid spacings ({h:.3g})")

    def shifted(self, phase: float) -> "RadiusSchedule":
        """Same ratio and count, radii scaled by ``ratio**phase``."""
        return RadiusSchedule(self.r0 * self.ratio**phase, self.ratio, self.count)


class LpVerdict(str, Enum):
    LP_POINT = "LpPoint"
    NOT_LP_POINT = "NotLpPoint"
    INCONCLUSIVE = "Inconclusive"


class RepEstimate(NamedTuple):
    estimate: object
    converged: bool


def _norm(v) -> float:
    return float(np.linalg.norm(np.atleast_1d(v)))


def extrapolate(averages, ratio: float):
    """Fitted-order extrapolation of ``a_j = a + c r_j**beta`` from the last 4 averages.

    Falls back to the last average when the differences vanish or the fitted
    order is below 1/2 (no reliable geometric tail to remove).
    """
    a = [np.asarray(v, dtype=float) for v in averages]
    last = a[-1]
    tail = a[-4:]
    diffs = [tail[j] - tail[j + 1] for j in range(len(tail) - 1)]
    mags = np.array([_norm(d) for d in diffs])
    scale = 1.0 + _norm(last)
    if np.any(mags <= 1e-13 * scale):
        return last
    # log|d_j| = const + beta * log r_j, with r_j = ratio**j up to a constant
    beta = float(np.polyfit(np.arange(mags.size) * math.log(ratio), np.log(mags), 1)[0])
    if not (beta >= 0.5 and math.isfinite(beta)):
        return last
    q = ratio**beta
    return last - diffs[-1] * q / (1.0 - q)


def ball_averages(values, x, sched: RadiusSchedule) -> list:
    sched.check(values.grid)
    return [ball_average(values, x, r) for r in sched.radii]


def precise_rep(values, x, sched: RadiusSchedule, rep_tol: float = REP_TOL) -> RepEstimate:
    """Estimate of the limit of ball averages at ``x`` and whether it settled."""
    avgs = ball_averages(values, x, sched)
    return _rep_from_averages(avgs, sched, rep_tol, isinstance(values, VectorField))


def _rep_from_averages(avgs, sched, rep_tol, vector):
    last, prev = np.asarray(avgs[-1]), np.asarray(avgs[-2])
    converged = _norm(last - prev) < rep_tol * (1.0 + _norm(last))
    if converged:
        est = extrapolate(avgs, sched.ratio)
    else:
        est = np.zeros_like(last)
    if vector:
        return RepEstimate(np.array(est, dtype=float), bool(converged))
    return RepEstimate(float(est), bool(converged))


def lp_deviation(values, x, r: float, p: float, center_value) -> float:
    """Mean of ``|values - center_value|**p`` over ``B(x, r)``."""
    if not p >= 1:
        raise DomainError("p must be >= 1")
    return ball_average(values, x, r, AbsDev(center_value, p))


@dataclass
class PointClassification:
    x: tuple
    verdict: LpVerdict
    estimate: object
    converged: bool
    radii: list
    averages: list
    deviations: list
    slope: float

    @property
    def is_lp_point(self) -> bool:
        return self.verdict is LpVerdict.LP_POINT


def classify_lp_point(
    values,
    x,
    p: float,
    sched: RadiusSchedule,
    lp_tol: float = LP_TOL,
    not_tol: float = NOT_TOL,
    rep_tol: float = REP_TOL,
) -> PointClassification:
    avgs = ball_averages(values, x, sched)
    est, conv = _rep_from_averages(avgs, sched, rep_tol, isinstance(values, VectorField))
    radii = sched.radii
    devs = [lp_deviation(values, x, r, p, est) for r in radii]
    if all(d <= 1e-300 for d in devs):
        slope = math.inf
    else:
        slope = loglog_slope(radii, devs)
    if devs[-1] < lp_tol:
        verdict = LpVerdict.LP_POINT
    elif min(devs[-3:]) >= not_tol:
        verdict = LpVerdict.NOT_LP_POINT
    else:
        verdict = LpVerdict.INCONCLUSIVE
    return PointClassification(
        tuple(float(c) for c in np.atleast_1d(x)),
        verdict,
        est,
        conv,
        list(radii),
        [np.asarray(a).tolist() for a in avgs],
        devs,
        slope,
    )


@dataclass
class RefinedGradientReport:
    points: list
    alphas: list
    p: float
    k: int
    table: list = field(default_factory=list)  # one {alpha: PointClassification} per point

    @property
    def exceptional(self) -> list:
        """Indices of points where some derivative is not classified LpPoint."""
        return [i for i, row in enumerate(self.table) if any(not c.is_lp_point for c in row.values())]

    @property
    def fail_fraction(self) -> float:
        return len(self.exceptional) / len(self.points) if self.points else 0.0

    def estimates(self, i: int, order: int | None = None) -> np.ndarray:
        """Representative estimates at point ``i`` over multi-indices (of one order, if given)."""
        row = self.table[i]
        return np.array([row[a].estimate for a in self.alphas if order is None or sum(a) == order])


def classify_refined_gradient(
    f,
    p: float,
    points,
    k: int,
    sched: RadiusSchedule,
    full: bool = False,
    lp_tol: float = LP_TOL,
    not_tol: float = NOT_TOL,
    rep_tol: float = REP_TOL,
    spacing: float | None = None,
    jobs: int | None = None,
) -> RefinedGradientReport:
    """Classify every ``d^alpha f`` (``|alpha| = k``, or ``<= k`` with ``full``) at every point.

    ``f`` is a :class:`GridFunction`, a corpus id/entry, or a source.  Corpus
    entries are sampled on patches with spacing ``spacing`` (default: a quarter
    of the smallest radius).
    """
    k = int(k)
    if not 1 <= k <= 3:
        raise DomainError("order k must be 1, 2 or 3")
    src = as_source(f, spacing)
    pts = [tuple(float(c) for c in np.atleast_1d(x)) for x in points]
    alphas = multi_indices(src.n, k, exact=not full)
    hint = sched.r_min / 4.0

    def one(x):
        row = {}
        for alpha in alphas:
            field_ = src.field(alpha, center=x, reach=sched.r0, spacing=hint)
            row[alpha] = classify_lp_point(field_, x, p, sched, lp_tol, not_tol, rep_tol)
        return row

    report = RefinedGradientReport(pts, alphas, float(p), k)
    report.table = pmap(one, pts, jobs)
    return report
