"""Upper estimates of Hausdorff pre-measures by greedy dyadic covers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .capacity import CapacityOptions, NullVerdict, cap_null_classify
from .convergence import ConvergenceReport, Trend, make_report
from .errors import DomainError, PreconditionError
from .grid import Ball, Box


def alpha(s: float) -> float:
    """``pi**(s/2) / Gamma(s/2 + 1)``, the volume of the unit ball for integer s."""
    s = float(s)
    if not s >= 0:
        raise DomainError("s must be >= 0")
    return math.pi ** (s / 2) / math.gamma(s / 2 + 1)


@dataclass(frozen=True)
class PointCloud:
    """A finite sample of a set; ``resolution`` is the gap the samples leave.

    A cloud with resolution 0 is the finite set itself.
    """

    points: np.ndarray
    resolution: float = 0.0

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size and not np.all(np.isfinite(pts)):
            raise DomainError("point cloud must be finite")
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)
        if not self.resolution >= 0:
            raise DomainError("resolution must be >= 0")

    @property
    def n(self) -> int:
        return self.points.shape[1]


def segment(a, b, samples: int = 1025) -> PointCloud:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    t = np.linspace(0.0, 1.0, samples)[:, None]
    return PointCloud(a + t * (b - a), float(np.linalg.norm(b - a)) / (samples - 1))


def as_cloud(E, resolution: float | None = None) -> PointCloud:
    """Point cloud for a cloud, an array of points, or a Ball/Box region."""
    if isinstance(E, PointCloud):
        return E
    if isinstance(E, (Ball, Box)):
        if isinstance(E, Ball):
            c = np.asarray(E.center)
            lo, hi = c - E.radius, c + E.radius
        else:
            lo, hi = np.asarray(E.lower), np.asarray(E.upper)
        res = resolution or float(np.max(hi - lo)) / 64
        axes = [np.arange(l, u + 0.5 * res, res) for l, u in zip(lo, hi)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))
        if isinstance(E, Ball):
            pts = pts[np.sum((pts - c) ** 2, axis=1) <= E.radius**2]
        return PointCloud(pts, res * math.sqrt(len(lo)))
    return PointCloud(np.asarray(E, dtype=float), resolution or 0.0)


@dataclass
class CoveringEstimate:
    s: float
    delta: float
    boxes: list  # (lower, upper) of each cover set
    value: float
    history: list = field(default_factory=list)  # [(delta, value)] over shrinking delta

    def diameters(self) -> np.ndarray:
        return np.array([float(np.linalg.norm(np.subtract(hi, lo))) for lo, hi in self.boxes])

    def covers(self, pts) -> bool:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if pts.size == 0:
            return True
        inside = np.zeros(len(pts), dtype=bool)
        for lo, hi in self.boxes:
            inside |= np.all((pts >= np.asarray(lo) - 1e-12) & (pts <= np.asarray(hi) + 1e-12), axis=1)
        return bool(inside.all())


def cover_sum(diameters, s: float) -> float:
    """``sum (d/2)**s`` with ``0**0 = 1``: the cover value without the alpha(s) factor."""
    d = np.asarray(diameters, dtype=float)
    if s == 0:
        return float(d.size)
    return float(np.sum((d / 2.0) ** s))


def _tight(pts, pad):
    # padding stands in for the gaps between samples
    return pts.min(axis=0) - 0.5 * pad, pts.max(axis=0) + 0.5 * pad


def _best_cover(pts, lo, side, s, floor, pad):
    """Cheapest of: one tight box around ``pts``, or the best covers of its 2^n children."""
    tlo, thi = _tight(pts, pad)
    d = float(np.linalg.norm(thi - tlo))
    own = 1.0 if s == 0 else (d / 2.0) ** s
    if len(pts) == 1 or side / 2 < floor or d == 0.0:
        return own, [(tlo, thi)]
    half = side / 2
    code = np.floor((pts - lo) / half).astype(np.int64)
    code = np.clip(code, 0, 1)
    keys, inv = np.unique(code, axis=0, return_inverse=True)
    total, boxes = 0.0, []
    for j, key in enumerate(keys):
        sub = pts[inv.ravel() == j]
        c, b = _best_cover(sub, lo + key * half, half, s, floor, pad)
        total += c
        boxes.extend(b)
        if total >= own:
            return own, [(tlo, thi)]
    return total, boxes


def _cover(cloud: PointCloud, s: float, delta: float):
    pts = cloud.points
    n = cloud.n
    # a padded box over a cell of this side has diameter at most delta
    side = delta / math.sqrt(n) - cloud.resolution
    if side <= 0:
        raise DomainError(f"delta={delta} is below the sample resolution of the set")
    origin = pts.min(axis=0)
    code = np.floor((pts - origin) / side).astype(np.int64)
    keys, inv = np.unique(code, axis=0, return_inverse=True)
    total, boxes = 0.0, []
    floor = max(cloud.resolution, 1e-12 * side)
    for j, key in enumerate(keys):
        sub = pts[inv.ravel() == j]
        c, b = _best_cover(sub, origin + key * side, side, s, floor, cloud.resolution)
        total += c
        boxes.extend(b)
    return alpha(s) * total, [(tuple(lo.tolist()), tuple(hi.tolist())) for lo, hi in boxes]


def hausdorff_upper(E, s: float, delta: float, levels: int = 4, resolution: float | None = None) -> CoveringEstimate:
    """Cover-based upper estimate of ``H^s_delta(E)``, refined over ``delta * 2**-j``.

    Top-level cells have side ``delta / sqrt(n)`` less the sample gap, so
    every padded cover set has diameter at most ``delta``.  ``value`` and ``boxes`` belong to the
    smallest delta; ``history`` lists every level.  Refinement stops early
    once the cells would shrink to the sample resolution of E.
    """
    if not delta > 0:
        raise DomainError("delta must be positive")
    if not s >= 0:
        raise DomainError("s must be >= 0")
    cloud = as_cloud(E, resolution)
    if cloud.points.size == 0:
        return CoveringEstimate(float(s), float(delta), [], 0.0, [(float(delta), 0.0)])
    history = []
    value, boxes, d = 0.0, [], delta
    for j in range(max(1, int(levels))):
        dj = delta * 2.0**-j
        if j and dj / math.sqrt(cloud.n) <= 2 * cloud.resolution:
            break  # finer levels would only resolve the sampling
        d = dj
        value, boxes = _cover(cloud, float(s), d)
        history.append((d, value))
    return CoveringEstimate(float(s), d, boxes, value, history)


@dataclass
class FrostmanReport:
    p: float
    n: int
    hausdorff: ConvergenceReport
    capacity_verdict: NullVerdict
    capacity_energies: list
    capacity_spacings: list
    assertion_made: bool
    consistent: bool


def frostman_consistency(
    E,
    p: float,
    n: int,
    delta: float = 0.5,
    levels: int = 6,
    cap_levels=(17, 33, 65, 129),
    opts: CapacityOptions | None = None,
) -> FrostmanReport:
    """If the (n-p)-dimensional pre-measure of E tends to 0, E must look capacity-null.

    The check is one-directional: a positive Hausdorff estimate makes no claim.
    """
    if not 1 <= p < n:
        raise PreconditionError(f"the capacity/Hausdorff comparison needs 1 <= p < n (got p={p}, n={n})")
    est = hausdorff_upper(E, n - p, delta, levels)
    deltas = [h[0] for h in est.history]
    values = [h[1] for h in est.history]
    haus = make_report(deltas, values, columns={"delta": deltas, "value": values})
    cap = cap_null_classify(E if not isinstance(E, PointCloud) else E.points, p, cap_levels, opts=opts)
    asserted = haus.verdict is Trend.CONVERGES
    consistent = (not asserted) or cap.verdict is NullVerdict.NULL
    return FrostmanReport(float(p), int(n), haus, cap.verdict, cap.energies, cap.spacings, asserted, consistent)
