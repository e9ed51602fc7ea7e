"""Log-log slope fits and the three-way verdict shared by all t -> 0 studies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import DomainError


class Trend(str, Enum):
    CONVERGES = "ConvergesToZero"
    STALLS = "Stalls"
    INCONCLUSIVE = "Inconclusive"


def loglog_slope(params, values, floor: float = 1e-300) -> float:
    """Least-squares slope of ``log values`` against ``log params``."""
    x = np.log(np.asarray(params, dtype=float))
    y = np.log(np.maximum(np.asarray(values, dtype=float), floor))
    if x.size < 2 or np.ptp(x) == 0:
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class ConvergenceReport:
    params: list
    errors: list
    slope: float
    verdict: Trend
    columns: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @property
    def last(self) -> float:
        return self.errors[-1]


def make_report(
    params,
    errors,
    conv_tol: float = 1e-2,
    slope_min: float = 0.5,
    zero_tol: float = 1e-9,
    force_inconclusive: bool = False,
    columns=None,
    notes=None,
    floors=None,
) -> ConvergenceReport:
    """Verdict on an error sequence taken along a shrinking parameter.

    Errors at or below ``zero_tol`` (or below the matching entry of
    ``floors``, a per-parameter rounding-noise level) count as exact zeros.
    """
    params = [float(t) for t in params]
    errors = [float(e) for e in errors]
    if len(params) != len(errors) or len(params) < 4:
        raise DomainError("a convergence study needs at least 4 (parameter, error) pairs")
    if any(not (e >= 0) for e in errors):
        raise DomainError("errors must be nonnegative numbers")
    floors = [zero_tol] * len(errors) if floors is None else [max(zero_tol, float(f)) for f in floors]
    live = [j for j, e in enumerate(errors) if e > floors[j]]
    if errors[-1] <= floors[-1] and len(live) < 2:
        # errors at or below zero_tol count as exact zeros: nothing left to fit
        slope = math.inf
        verdict = Trend.CONVERGES
    else:
        if len(live) >= 2:
            slope = loglog_slope([params[j] for j in live], [errors[j] for j in live])
        else:
            slope = -math.inf  # only the last error is nonzero: it grew from zero
        if errors[-1] < conv_tol and slope > slope_min:
            verdict = Trend.CONVERGES
        elif slope < slope_min and errors[-1] >= conv_tol:
            verdict = Trend.STALLS
        else:
            verdict = Trend.INCONCLUSIVE
    if force_inconclusive:
        verdict = Trend.INCONCLUSIVE
    return ConvergenceReport(params, errors, slope, verdict, dict(columns or {}), dict(notes or {}))


def geometric(start: float, ratio: float, count: int) -> list:
    if not start > 0:
        raise DomainError("schedule start must be positive")
    if not 0 < ratio < 1:
        raise DomainError("schedule ratio must lie in (0, 1)")
    if count < 1:
        raise DomainError("schedule count must be positive")
    return [start * ratio**j for j in range(count)]
