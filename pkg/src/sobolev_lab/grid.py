"""Uniform lattices, sampled functions, regions and the quadrature built on them.

Nodes own dual cells ``[c - h/2, c + h/2]`` (clipped to the bounding box).
Every integral is a weighted nodal sum ``sum_i w_i v_i`` where ``w_i`` is the
volume of the dual cell that lies inside the region.  Reductions run in
lexicographic node order, so results do not depend on scheduling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Union

import numpy as np

from . import kernels
from .errors import DomainError


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular lattice on ``[lower, upper]`` with ``counts`` nodes per axis.

    ``anchor`` optionally pins one node to an exact coordinate (used by
    :meth:`centered`, so the centre node is bit-exact).
    """

    lower: tuple
    upper: tuple
    counts: tuple
    anchor: tuple | None = None

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not (len(lower) == len(upper) == len(counts)) or not lower:
            raise DomainError("lower, upper and counts need one entry per axis")
        for lo, hi, c in zip(lower, upper, counts):
            if c < 3:
                raise DomainError(f"need at least 3 nodes per axis, got {c}")
            if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
                raise DomainError(f"axis bounds must satisfy lower < upper, got [{lo}, {hi}]")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def centered(cls, center, halfwidth, spacing) -> "Grid":
        """Grid with an exact node at ``center`` and ``halfwidth`` (rounded up) each side."""
        center = np.atleast_1d(np.asarray(center, dtype=float))
        n = center.size
        hw = np.broadcast_to(np.asarray(halfwidth, dtype=float), (n,))
        hs = np.broadcast_to(np.asarray(spacing, dtype=float), (n,))
        half = np.ceil(hw / hs - 1e-9).astype(int)
        half = np.maximum(half, 1)
        lower = center - half * hs
        upper = center + half * hs
        anchor = (tuple(float(c) for c in center), tuple(int(k) for k in half))
        return cls(tuple(lower), tuple(upper), tuple(2 * half + 1), anchor)

    @property
    def n(self) -> int:
        return len(self.counts)

    @property
    def shape(self) -> tuple:
        return self.counts

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / (c - 1) for lo, hi, c in zip(self.lower, self.upper, self.counts))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int) -> np.ndarray:
        return _axis_coords(self, i)

    @property
    def axes(self) -> list:
        return [self.axis(i) for i in range(self.n)]

    def points(self) -> np.ndarray:
        """All node coordinates, shape ``(*shape, n)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def nearest_index(self, x) -> tuple:
        x = self._point(x)
        idx = []
        for i in range(self.n):
            k = int(round((x[i] - self.lower[i]) / self.spacing[i]))
            idx.append(min(max(k, 0), self.counts[i] - 1))
        return tuple(idx)

    def is_node(self, x, rtol=1e-9) -> bool:
        x = self._point(x)
        idx = self.nearest_index(x)
        node = np.array([self.axis(i)[k] for i, k in enumerate(idx)])
        return bool(np.all(np.abs(node - x) <= rtol * np.asarray(self.spacing)))

    def dual_cell_volumes_1d(self, i: int) -> np.ndarray:
        h = self.spacing[i]
        w = np.full(self.counts[i], h)
        w[0] = w[-1] = 0.5 * h
        return w

    def contains_ball(self, x, r) -> bool:
        x = self._point(x)
        lo = np.asarray(self.lower)
        hi = np.asarray(self.upper)
        slack = 1e-12 * (hi - lo)
        return bool(np.all(x - r >= lo - slack) and np.all(x + r <= hi + slack))

    def _point(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.n,):
            raise DomainError(f"point has dimension {x.size}, grid has {self.n}")
        return x


@lru_cache(maxsize=256)
def _axis_coords(grid: Grid, i: int) -> np.ndarray:
    c = grid.counts[i]
    h = grid.spacing[i]
    k = np.arange(c, dtype=float)
    if grid.anchor is not None:
        center, half = grid.anchor
        out = center[i] + (k - half[i]) * h
    else:
        out = grid.lower[i] + k * h
        out[-1] = grid.upper[i]
    out.flags.writeable = False
    return out


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.flags.writeable = False
    return a


class GridFunction:
    """Scalar samples on a grid, optionally with a definedness mask.

    Undefined nodes (mask False) hold NaN so any accidental use propagates.
    """

    __slots__ = ("grid", "values", "mask")

    def __init__(self, grid: Grid, values, mask=None):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise DomainError(f"values shape {values.shape} != grid shape {grid.shape}")
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != grid.shape:
                raise DomainError("mask shape does not match grid")
            values = np.where(mask, values, np.nan)
            m = mask.copy()
            m.flags.writeable = False
            mask = m
        check = values if mask is None else values[mask]
        if not np.all(np.isfinite(check)):
            raise DomainError("grid function has non-finite values at defined nodes")
        self.grid = grid
        self.values = _frozen(values)
        self.mask = mask

    def defined(self) -> np.ndarray:
        return np.ones(self.grid.shape, dtype=bool) if self.mask is None else self.mask

    def _combine(self, other, op):
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise DomainError("grid functions live on different grids")
            mask = _and_masks(self.mask, other.mask)
            with np.errstate(invalid="ignore"):
                return GridFunction(self.grid, op(self.values, other.values), mask)
        return GridFunction(self.grid, op(self.values, float(other)), self.mask)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values, self.mask)

    def __repr__(self):
        return f"GridFunction(shape={self.grid.shape})"


class VectorField:
    """Per-node vectors, values shape ``(*grid.shape, m)`` (``m`` is usually ``n``)."""

    __slots__ = ("grid", "values", "mask")

    def __init__(self, grid: Grid, values, mask=None):
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != grid.n + 1 or values.shape[:-1] != grid.shape:
            raise DomainError(f"vector values shape {values.shape} incompatible with grid {grid.shape}")
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            values = np.where(mask[..., None], values, np.nan)
            m = mask.copy()
            m.flags.writeable = False
            mask = m
        check = values if mask is None else values[mask]
        if not np.all(np.isfinite(check)):
            raise DomainError("vector field has non-finite values at defined nodes")
        self.grid = grid
        self.values = _frozen(values)
        self.mask = mask

    @property
    def components(self) -> int:
        return self.values.shape[-1]

    def component(self, i: int) -> GridFunction:
        return GridFunction(self.grid, self.values[..., i], self.mask)

    def defined(self) -> np.ndarray:
        return np.ones(self.grid.shape, dtype=bool) if self.mask is None else self.mask

    def _combine(self, other, op):
        if isinstance(other, VectorField):
            if other.grid != self.grid:
                raise DomainError("vector fields live on different grids")
            with np.errstate(invalid="ignore"):
                return VectorField(self.grid, op(self.values, other.values), _and_masks(self.mask, other.mask))
        if isinstance(other, GridFunction):
            with np.errstate(invalid="ignore"):
                return VectorField(
                    self.grid, op(self.values, other.values[..., None]), _and_masks(self.mask, other.mask)
                )
        return VectorField(self.grid, op(self.values, float(other)), self.mask)

    def __add__(self, other):
        return self._combine(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, other):
        return self._combine(other, np.multiply)

    __rmul__ = __mul__

    def __repr__(self):
        return f"VectorField(shape={self.grid.shape}, m={self.components})"


Field = Union[GridFunction, VectorField]


def _and_masks(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a & b


# --------------------------------------------------------------------------
# regions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        r = float(self.radius)
        if not r > 0:
            raise DomainError(f"ball radius must be positive, got {r}")
        object.__setattr__(self, "radius", r)


@dataclass(frozen=True)
class Box:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise DomainError("box corners must be ordered per axis")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))


class NodeMask:
    """A set of nodes, each carrying its full dual cell."""

    __slots__ = ("mask",)

    def __init__(self, mask):
        m = np.array(mask, dtype=bool)
        m.flags.writeable = False
        self.mask = m


Region = Union[Ball, Box, NodeMask]


def _dual_cell_bounds(grid: Grid, i: int, sl: slice):
    c = grid.axis(i)[sl]
    h = grid.spacing[i]
    lo = np.maximum(c - 0.5 * h, grid.lower[i])
    hi = np.minimum(c + 0.5 * h, grid.upper[i])
    return c, lo, hi


def region_weights(grid: Grid, region: Region):
    """Quadrature weights of ``region`` on ``grid`` as ``(slices, block_weights)``."""
    if isinstance(region, Ball):
        if len(region.center) != grid.n:
            raise DomainError("ball dimension does not match grid")
        return ball_weights(grid, region.center, region.radius)
    if isinstance(region, Box):
        if len(region.lower) != grid.n:
            raise DomainError("box dimension does not match grid")
        slices = []
        parts = []
        for i in range(grid.n):
            c, lo, hi = _dual_cell_bounds(grid, i, slice(None))
            ov = np.clip(np.minimum(hi, region.upper[i]) - np.maximum(lo, region.lower[i]), 0.0, None)
            nz = np.flatnonzero(ov > 0)
            if nz.size == 0:
                raise DomainError("box does not intersect the grid")
            sl = slice(int(nz[0]), int(nz[-1]) + 1)
            slices.append(sl)
            parts.append(ov[sl])
        w = parts[0]
        for part in parts[1:]:
            w = np.multiply.outer(w, part)
        return tuple(slices), w
    if isinstance(region, NodeMask):
        if region.mask.shape != grid.shape:
            raise DomainError("node mask shape does not match grid")
        if not region.mask.any():
            raise DomainError("node mask is empty")
        w = grid.dual_cell_volumes_1d(0)
        for i in range(1, grid.n):
            w = np.multiply.outer(w, grid.dual_cell_volumes_1d(i))
        return tuple(slice(None) for _ in range(grid.n)), np.where(region.mask, w, 0.0)
    raise TypeError(f"unsupported region {region!r}")


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def ball_weights(grid: Grid, x, r: float, fit_moments: bool = True):
    """Weights of ``B(x, r)`` on the node block around it.

    Coverage of each dual cell is exact for n <= 2 and estimated by 3^n-point
    subsampling for n >= 3.  The weights are then corrected multiplicatively so
    that the quadrature integrates every polynomial of degree <= 2 over the
    ball exactly (moment fitting); this removes the O(h^2) cell bias that no
    radius extrapolation can see.
    """
    x = grid._point(x)
    r = float(r)
    if not r > 0:
        raise DomainError(f"radius must be positive, got {r}")
    if not grid.contains_ball(x, r):
        raise DomainError(f"ball B({x.tolist()}, {r}) leaves the grid box")
    return _ball_weights_cached(grid, tuple(x.tolist()), r, bool(fit_moments))


@lru_cache(maxsize=64)
def _ball_weights_cached(grid: Grid, x: tuple, r: float, fit_moments: bool):
    n = grid.n
    xs = np.asarray(x)
    slices, lo_rel, hi_rel, ctr_rel = [], [], [], []
    for i in range(n):
        h = grid.spacing[i]
        a = int(math.floor((xs[i] - r - grid.lower[i]) / h - 0.5)) - 1
        b = int(math.ceil((xs[i] + r - grid.lower[i]) / h + 0.5)) + 1
        sl = slice(max(a, 0), min(b, grid.counts[i] - 1) + 1)
        c, lo, hi = _dual_cell_bounds(grid, i, sl)
        slices.append(sl)
        ctr_rel.append(c - xs[i])
        lo_rel.append(lo - xs[i])
        hi_rel.append(hi - xs[i])

    if n == 1:
        w = np.clip(np.minimum(hi_rel[0], r) - np.maximum(lo_rel[0], -r), 0.0, None)
    else:
        lo_g = np.meshgrid(*lo_rel, indexing="ij")
        hi_g = np.meshgrid(*hi_rel, indexing="ij")
        near2 = sum(np.clip(0.0, l, u) ** 2 for l, u in zip(lo_g, hi_g))
        far2 = sum(np.maximum(l * l, u * u) for l, u in zip(lo_g, hi_g))
        vol = np.ones_like(near2)
        for l, u in zip(lo_g, hi_g):
            vol = vol * (u - l)
        r2 = r * r
        w = np.where(far2 <= r2, vol, 0.0)
        partial = (far2 > r2) & (near2 < r2)
        if np.any(partial):
            idx = np.nonzero(partial)
            if n == 2:
                w[idx] = kernels.disc_rect_area(
                    lo_g[0][idx], hi_g[0][idx], lo_g[1][idx], hi_g[1][idx], r
                )
            else:
                w[idx] = vol[idx] * _subsample_fraction(
                    [l[idx] for l in lo_g], [u[idx] for u in hi_g], r2
                )
    if fit_moments:
        w = _fit_moments(w, ctr_rel, r, n)
    w.flags.writeable = False
    return tuple(slices), w


def _subsample_fraction(lo, hi, r2, per_axis=3):
    offs = (np.arange(per_axis) + 0.5) / per_axis
    count = np.zeros(lo[0].shape)
    for combo in itertools.product(offs, repeat=len(lo)):
        d2 = sum((l + t * (u - l)) ** 2 for l, u, t in zip(lo, hi, combo))
        count += d2 < r2
    return count / per_axis ** len(lo)


def _fit_moments(w, ctr_rel, r, n):
    live = w > 0
    if live.sum() < (n + 1) * (n + 2) // 2 + 1:
        return w
    grids = np.meshgrid(*[c / r for c in ctr_rel], indexing="ij")
    d = [g[live] for g in grids]
    basis = [np.ones_like(d[0])] + d + [d[i] * d[j] for i in range(n) for j in range(i, n)]
    phi = np.stack(basis, axis=1)
    wl = w[live]
    gram = phi.T @ (wl[:, None] * phi)
    current = phi.T @ wl
    vol = unit_ball_volume(n) * r**n
    target = np.zeros(len(basis))
    target[0] = vol
    k = 1 + n
    for i in range(n):
        for j in range(i, n):
            if i == j:
                target[k] = vol / (n + 2)
            k += 1
    try:
        if np.linalg.cond(gram) > 1e12:
            return w
        lam = np.linalg.solve(gram, target - current)
    except np.linalg.LinAlgError:
        return w
    scale = 1.0 + phi @ lam
    if np.min(scale) <= 0.05:
        return w
    out = w.copy()
    out[live] = wl * scale
    return out


# --------------------------------------------------------------------------
# sampling, differences, norms, averages
# --------------------------------------------------------------------------


def sample(fn_spec, grid: Grid) -> GridFunction:
    """Exact analytic values of a corpus function (id or callable) at every node."""
    if isinstance(fn_spec, str):
        from .corpus import get

        fn = get(fn_spec)
        if fn.n != grid.n:
            raise DomainError(f"corpus entry {fn_spec!r} has n={fn.n}, grid has n={grid.n}")
        fn = fn.evaluate
    else:
        fn = fn_spec
    return GridFunction(grid, fn(grid.points()))


def partial(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Central differences inside, one-sided second order at both ends."""
    return np.gradient(values, h, axis=axis, edge_order=2)


def _mask_after_difference(mask, axis):
    if mask is None:
        return None
    m = mask.copy()
    sl_lo = [slice(None)] * m.ndim
    sl_hi = [slice(None)] * m.ndim
    sl_lo[axis] = slice(0, -1)
    sl_hi[axis] = slice(1, None)
    m[tuple(sl_lo)] &= mask[tuple(sl_hi)]
    m[tuple(sl_hi)] &= mask[tuple(sl_lo)]
    return m


def gradient_fd(f: GridFunction) -> VectorField:
    g = f.grid
    vals = np.nan_to_num(f.values) if f.mask is not None else f.values
    comps = []
    mask = f.mask
    for i in range(g.n):
        comps.append(partial(vals, i, g.spacing[i]))
        if f.mask is not None:
            mask = _and_masks(mask, _mask_after_difference(f.mask, i))
    return VectorField(g, np.stack(comps, axis=-1), mask)


def derivative(f: GridFunction, alpha: Sequence[int]) -> GridFunction:
    """``d^alpha f`` by nested :func:`partial` applications (axis order ascending)."""
    g = f.grid
    if len(alpha) != g.n or any(a < 0 for a in alpha):
        raise DomainError(f"bad multi-index {tuple(alpha)} for n={g.n}")
    vals = np.nan_to_num(f.values) if f.mask is not None else f.values
    mask = f.mask
    for i, a in enumerate(alpha):
        for _ in range(a):
            vals = partial(vals, i, g.spacing[i])
            mask = _mask_after_difference(mask, i) if mask is not None else None
    return GridFunction(g, vals, mask)


def _field_block(values: Field, slices):
    block = values.values[slices]
    if isinstance(values, VectorField):
        mag = np.sqrt(np.sum(block * block, axis=-1))
        return block, mag
    return block, np.abs(block)


def _check_defined(values: Field, slices, w):
    if values.mask is None:
        return
    if np.any(w[~values.mask[slices]] != 0):
        raise DomainError("region touches nodes where the field is undefined")


def lp_norm(values: Field, p: float, region: Region) -> float:
    p = float(p)
    if not p >= 1:
        raise DomainError(f"p must be >= 1, got {p}")
    slices, w = region_weights(values.grid, region)
    if not np.any(w > 0):
        raise DomainError("region does not intersect the grid")
    _check_defined(values, slices, w)
    _, mag = _field_block(values, slices)
    mag = np.where(w > 0, mag, 0.0)
    return float(np.sum(w * mag**p)) ** (1.0 / p)


def multi_indices(n: int, k: int, exact: bool = False):
    """All multi-indices with ``|alpha| <= k`` (or ``== k``), graded then lexicographic."""
    out = []
    orders = [k] if exact else range(k + 1)
    for m in orders:
        level = [a for a in itertools.product(range(m + 1), repeat=n) if sum(a) == m]
        out.extend(sorted(level, reverse=True))
    return out


def wkp_norm(f: GridFunction, k: int, p: float, region: Region, orders: str = "all") -> float:
    """Sum of ``lp_norm(d^alpha f)`` over ``|alpha| <= k``.

    ``orders="ends"`` keeps only ``alpha = 0`` and ``|alpha| = k`` (the
    equivalent reduced norm).
    """
    k = int(k)
    if k < 0:
        raise DomainError("k must be >= 0")
    if k > 0:
        slices, w = region_weights(f.grid, region)
        for i, sl in enumerate(slices):
            lo = sl.start or 0
            used = np.any(np.moveaxis(w, i, 0) > 0, axis=tuple(range(1, w.ndim)))
            nz = np.flatnonzero(used)
            first, last = lo + int(nz[0]), lo + int(nz[-1])
            if first < k or last > f.grid.counts[i] - 1 - k:
                raise DomainError(f"region is within {k} stencil(s) of the grid boundary")
    total = 0.0
    for alpha in multi_indices(f.grid.n, k):
        if orders == "ends" and 0 < sum(alpha) < k:
            continue
        total += lp_norm(derivative(f, alpha), p, region)
    return total


@dataclass(frozen=True)
class AbsDev:
    """Integrand ``|v - center|^p`` for :func:`ball_average`."""

    center: object
    p: float = 1.0


def ball_average(values: Field, x, r: float, integrand: AbsDev | None = None):
    """Average of the field (or of ``|field - c|^p``) over ``B(x, r)``."""
    slices, w = ball_weights(values.grid, x, r)
    _check_defined(values, slices, w)
    total = float(np.sum(w))
    block = values.values[slices]
    if integrand is None:
        if isinstance(values, VectorField):
            flat = block.reshape(-1, block.shape[-1])
            return (w.ravel() @ np.where(w.ravel()[:, None] > 0, flat, 0.0)) / total
        return float(np.sum(w * np.where(w > 0, block, 0.0))) / total
    c = np.asarray(integrand.center, dtype=float)
    if isinstance(values, VectorField):
        diff = block - c.reshape((1,) * values.grid.n + (-1,))
        dev = np.sqrt(np.sum(diff * diff, axis=-1))
    else:
        dev = np.abs(block - float(c))
    dev = np.where(w > 0, dev, 0.0)
    return float(np.sum(w * dev ** float(integrand.p))) / total


def _lagrange4(u):
    # cubic Lagrange basis on nodes 0..3 evaluated at u
    return np.stack(
        [
            -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
            u * (u - 2.0) * (u - 3.0) / 2.0,
            -u * (u - 1.0) * (u - 3.0) / 2.0,
            u * (u - 1.0) * (u - 2.0) / 6.0,
        ],
        axis=-1,
    )


def interpolate(f: GridFunction, pts) -> np.ndarray:
    """Local tensor-product cubic interpolation of ``f`` at ``pts`` (shape ``(..., n)``)."""
    g = f.grid
    pts = np.asarray(pts, dtype=float)
    lead = pts.shape[:-1]
    q = pts.reshape(-1, g.n)
    bases, basis = [], []
    for i in range(g.n):
        c = g.axis(i)
        h = g.spacing[i]
        s = (q[:, i] - c[0]) / h
        span = g.counts[i] - 1
        if np.any(s < -1e-9) or np.any(s > span + 1e-9):
            raise DomainError("interpolation point outside the grid")
        b = np.clip(np.floor(s).astype(np.int64) - 1, 0, g.counts[i] - 4)
        bases.append(b)
        basis.append(_lagrange4(s - b))
    out = np.zeros(q.shape[0])
    vals = f.values
    for combo in itertools.product(range(4), repeat=g.n):
        idx = tuple(bases[i] + combo[i] for i in range(g.n))
        w = basis[0][:, combo[0]]
        for i in range(1, g.n):
            w = w * basis[i][:, combo[i]]
        v = vals[idx]
        if f.mask is not None and np.any((w != 0) & ~f.mask[idx]):
            raise DomainError("interpolation stencil touches undefined nodes")
        out += w * np.where(w != 0, v, 0.0)
    return out.reshape(lead)
