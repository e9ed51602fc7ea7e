"""Discrete p-capacity of condensers and a refinement-based null-set test."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import Bounds, minimize

from . import kernels
from .convergence import loglog_slope
from .errors import DomainError, NumericError
from .grid import Ball, Box, Grid, GridFunction, NodeMask


@dataclass(frozen=True, eq=False)
class CondenserProblem:
    """Compact set ``K`` inside open set ``Omega``, both as node masks.

    ``delta`` is the initial smoothing used while optimising; ``None`` picks
    the default (the largest grid spacing for p < 2, zero otherwise).
    """

    grid: Grid
    K: np.ndarray
    omega: np.ndarray
    p: float
    delta: float | None = None

    def __post_init__(self):
        K = np.asarray(self.K, dtype=bool)
        om = np.asarray(self.omega, dtype=bool)
        if K.shape != self.grid.shape or om.shape != self.grid.shape:
            raise DomainError("condenser masks must match the grid shape")
        if not self.p >= 1:
            raise DomainError("p must be >= 1")
        if not om.any():
            raise DomainError("Omega mask is empty")
        if np.any(K & ~om):
            raise DomainError("K is not contained in Omega")
        edge = np.zeros(self.grid.shape, dtype=bool)
        for i in range(self.grid.n):
            idx = [slice(None)] * self.grid.n
            idx[i] = 0
            edge[tuple(idx)] = True
            idx[i] = -1
            edge[tuple(idx)] = True
        if np.any(om & edge):
            raise DomainError("Omega must not contain grid boundary nodes")
        outside = ~om
        for i in range(self.grid.n):
            for shift in (1, -1):
                if np.any(K & np.roll(outside, shift, axis=i)):
                    raise DomainError("K touches the complement of Omega")
        K.flags.writeable = False
        om.flags.writeable = False
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "p", float(self.p))
        if self.delta is None:
            object.__setattr__(self, "delta", max(self.grid.spacing) if self.p < 2 else 0.0)
        elif not self.delta >= 0:
            raise DomainError("delta must be >= 0")


@dataclass
class CapacityOptions:
    """Optimiser settings.

    ``method`` is ``"lbfgsb"`` (bound-constrained quasi-Newton, the default)
    or ``"spg"`` (spectral projected gradient with a nonmonotone Armijo
    search; fine for small grids, slow on fine ones).

    A positive smoothing is driven down by ``delta_ratio`` per warm-started
    stage until it drops below ``delta_floor``, or until a stage moves the
    unsmoothed energy by less than ``tol`` (relative once it exceeds 1); for
    p > 1 a last stage then runs unsmoothed.
    """

    tol: float = 1e-6
    delta_ratio: float = 0.25
    delta_floor: float = 1e-9
    max_iter: int = 20_000
    memory: int = 10
    armijo: float = 1e-4
    method: str = "lbfgsb"
    u0: np.ndarray | None = None


@dataclass
class CapacityEstimate:
    energy: float
    u: GridFunction
    iterations: int
    pg_norm: float
    smoothed_energy: float
    history: list = field(default_factory=list)  # [(h, energy)]


class _Energy:
    """Cell-wise p-Dirichlet energy on a grid, with flat-index stencil tables."""

    def __init__(self, grid: Grid):
        n = grid.n
        shape = grid.shape
        strides = [int(np.prod(shape[i + 1:])) for i in range(n)]
        lower = np.stack(
            np.meshgrid(*[np.arange(c - 1) for c in shape], indexing="ij"), axis=-1
        ).reshape(-1, n)
        self.cells = (lower @ np.asarray(strides, dtype=np.int64)).astype(np.int64)
        ea, eb, ew = [], [], []
        nper = 2 ** (n - 1)
        for ax in range(n):
            others = [i for i in range(n) if i != ax]
            for bits in itertools.product((0, 1), repeat=n - 1):
                off = sum(b * strides[i] for b, i in zip(bits, others))
                ea.append(off)
                eb.append(off + strides[ax])
                ew.append(1.0 / (grid.spacing[ax] ** 2 * nper))
        self.edge_a = np.asarray(ea, dtype=np.int64)
        self.edge_b = np.asarray(eb, dtype=np.int64)
        self.edge_w = np.asarray(ew, dtype=np.float64)
        self.vol = grid.cell_volume

    def __call__(self, u, p, delta, want_grad=True):
        return kernels.cell_energy(
            u, self.cells, self.edge_a, self.edge_b, self.edge_w, p, delta * delta, self.vol, want_grad
        )


def dirichlet_energy(u: GridFunction, p: float, delta: float = 0.0) -> float:
    """Discrete ``sum_cells (|grad u|^2 + delta^2)^(p/2) h^n``."""
    e, _ = _Energy(u.grid)(np.ascontiguousarray(u.values.ravel()), float(p), float(delta), False)
    return e


def p_capacity(prob: CondenserProblem, opts: CapacityOptions | None = None) -> CapacityEstimate:
    """Minimise the discrete energy over ``0 <= u <= 1``, ``u = 1`` on K, ``u = 0`` off Omega.

    Stops when the projected gradient, scaled by the cell volume, has
    max-norm below ``opts.tol``, or when the energy can no longer decrease
    in floating point.  Raises :class:`NumericError` (with the best iterate)
    when ``opts.max_iter`` runs out first.
    """
    opts = opts or CapacityOptions()
    if opts.method not in ("lbfgsb", "spg"):
        raise DomainError(f"unknown capacity method {opts.method!r}")
    grid = prob.grid
    h = max(grid.spacing)
    u = np.zeros(grid.size)
    Kf = prob.K.ravel()
    u[Kf] = 1.0
    free = np.flatnonzero(prob.omega.ravel() & ~Kf)
    energy = _Energy(grid)
    if not Kf.any() or free.size == 0:
        e0, _ = energy(u, prob.p, 0.0, False)
        gf = GridFunction(grid, u.reshape(grid.shape))
        return CapacityEstimate(float(e0), gf, 0, 0.0, float(e0), [(h, float(e0))])
    p, vol = prob.p, energy.vol
    if opts.u0 is None:
        x = np.zeros(free.size)
    else:
        x = np.clip(np.asarray(opts.u0, dtype=float).ravel()[free], 0.0, 1.0)
    run = _lbfgsb if opts.method == "lbfgsb" else _spg
    total = 0
    last = None
    for delta in _deltas(prob.delta, p, opts):
        if delta > 0 and last is not None and last[1] <= opts.tol * max(1.0, last[0]):
            # the smoothed energies have settled; only the unsmoothed stage is left
            continue

        def fg(v, delta=delta):
            u[free] = v
            e, g = energy(u, p, delta)
            return e, g[free]

        x, f, it, pg, ok = run(fg, x, vol, opts)
        total += it
        if not ok:
            break
        if delta > 0:
            u[free] = x
            e0 = float(energy(u, p, 0.0, False)[0])
            last = (e0, abs(e0 - last[0]) if last else np.inf)
    u[free] = x
    est = _estimate(grid, u, prob, energy, total, pg, f, h)
    if not ok:
        raise NumericError(f"capacity optimiser did not converge in {opts.max_iter} iterations", best=est)
    return est


def _deltas(delta, p, opts):
    """Smoothing stages: delta, delta*ratio, ... above the floor, then 0 when p > 1."""
    out = [delta]
    if delta > 0:
        if not 0 < opts.delta_ratio < 1:
            raise DomainError("delta_ratio must lie in (0, 1)")
        while out[-1] * opts.delta_ratio > opts.delta_floor:
            out.append(out[-1] * opts.delta_ratio)
        if p > 1:
            out.append(0.0)
    return out


def _scaled_pg(x, g, vol):
    return float(np.max(np.abs(np.clip(x - g / vol, 0.0, 1.0) - x)))


def _lbfgsb(fg, x0, vol, opts):
    res = minimize(
        fg,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=Bounds(np.zeros_like(x0), np.ones_like(x0)),
        options={
            "maxiter": opts.max_iter,
            "maxfun": 4 * opts.max_iter,
            "ftol": 1e-15,
            "gtol": opts.tol * vol,
            "maxcor": 20,
        },
    )
    f, g = fg(res.x)
    pg = _scaled_pg(res.x, g, vol)
    # status 0: gradient or relative-reduction test met; 1: iteration/evaluation limit
    ok = res.status == 0 or pg < opts.tol
    if res.status == 2 and "ABNORMAL" in str(res.message):
        # the line search failed at a point it cannot improve in floating point
        ok = True
    return res.x, float(f), int(res.nit), pg, ok


def _spg(fg, x, vol, opts):
    x = np.clip(x, 0.0, 1.0)
    f, g = fg(x)
    best_x, best_f = x.copy(), f
    hist = deque([f], maxlen=opts.memory)
    lam = 1.0
    pg = np.inf
    for it in range(1, opts.max_iter + 1):
        pg = _scaled_pg(x, g, vol)
        if pg < opts.tol:
            return x, f, it, pg, True
        d = np.clip(x - lam * g / vol, 0.0, 1.0) - x
        gd = float(g @ d)
        fmax = max(hist)
        step = 1.0
        while True:
            xn = x + step * d
            fn, gn = fg(xn)
            if fn <= fmax + opts.armijo * step * gd:
                break
            if step < 1e-14:
                # no decrease left at working precision
                return best_x, best_f, it, pg, True
            step *= 0.5
        s = xn - x
        y = (gn - g) / vol
        sy = float(s @ y)
        lam = float(np.clip(s @ s / sy, 1e-12, 1e12)) if sy > 0 else 1e12
        x, f, g = xn, fn, gn
        hist.append(f)
        if f < best_f:
            best_f, best_x = f, x.copy()
    return best_x, best_f, opts.max_iter, pg, False


def _estimate(grid, u, prob, energy, it, pg, f, h):
    e0, _ = energy(u, prob.p, 0.0, False)
    return CapacityEstimate(float(e0), GridFunction(grid, u.reshape(grid.shape).copy()), it, pg, float(f), [(h, float(e0))])


class NullVerdict(str, Enum):
    NULL = "NullSuggested"
    POSITIVE = "PositiveSuggested"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class NullClassification:
    verdict: NullVerdict
    spacings: list
    energies: list
    slope: float
    k_volumes: list
    estimates: list = field(repr=False, default_factory=list)


def _k_mask(grid: Grid, E) -> np.ndarray:
    mask = np.zeros(grid.shape, dtype=bool)
    if isinstance(E, NodeMask):
        return E.mask.copy()
    if isinstance(E, Ball):
        P = grid.points()
        d = np.sqrt(np.sum((P - np.asarray(E.center)) ** 2, axis=-1))
        return d <= E.radius * (1 + 1e-12)
    if isinstance(E, Box):
        P = grid.points()
        return np.all((P >= np.asarray(E.lower) - 1e-12) & (P <= np.asarray(E.upper) + 1e-12), axis=-1)
    pts = np.atleast_2d(np.asarray(getattr(E, "points", E), dtype=float))
    for x in pts:
        mask[grid.nearest_index(x)] = True
    return mask


def _dimension(E) -> int:
    if isinstance(E, Ball):
        return len(E.center)
    if isinstance(E, Box):
        return len(E.lower)
    return np.atleast_2d(np.asarray(getattr(E, "points", E), dtype=float)).shape[1]


def cap_null_classify(
    E,
    p: float,
    levels=(17, 33, 65, 129),
    box=(-1.0, 1.0),
    opts: CapacityOptions | None = None,
    null_slope: float = -0.2,
    stable_rtol: float = 0.1,
) -> NullClassification:
    """Capacity of ``E`` in the open box under refinement, with a null/positive verdict.

    NullSuggested when log(energy) against log(1/h) has slope below
    ``null_slope``; otherwise PositiveSuggested when the last two levels agree
    within ``stable_rtol``; otherwise Inconclusive.
    """
    if len(levels) < 2:
        raise DomainError("need at least two refinement levels")
    n = _dimension(E)
    lo, hi = float(box[0]), float(box[1])
    hs, energies, vols, ests = [], [], [], []
    for count in levels:
        grid = Grid((lo,) * n, (hi,) * n, (int(count),) * n)
        K = _k_mask(grid, E)
        omega = np.zeros(grid.shape, dtype=bool)
        omega[(slice(1, -1),) * n] = True
        est = p_capacity(CondenserProblem(grid, K, omega, p), opts)
        hs.append(max(grid.spacing))
        energies.append(est.energy)
        vols.append(float(K.sum()) * grid.cell_volume)
        ests.append(est)
    if all(e <= 1e-14 for e in energies):
        slope = -math.inf
    else:
        slope = loglog_slope([1.0 / h for h in hs], energies)
    if slope < null_slope:
        verdict = NullVerdict.NULL
    elif abs(energies[-1] - energies[-2]) <= stable_rtol * max(energies[-1], energies[-2]):
        verdict = NullVerdict.POSITIVE
    else:
        verdict = NullVerdict.INCONCLUSIVE
    for est in ests:
        est.history = list(zip(hs, energies))
    return NullClassification(verdict, hs, energies, slope, vols, ests)
