"""The standard bump mollifier and lattice convolution with it."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import DomainError, NumericError, ResolutionError
from .grid import Grid, GridFunction


def _bump(r2):
    out = np.zeros_like(r2, dtype=float)
    inside = r2 < 1.0
    out[inside] = np.exp(1.0 / (r2[inside] - 1.0))
    return out


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2 for n = 1)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _simpson(fn, a, b, m):
    x = np.linspace(a, b, m + 1)
    y = fn(x)
    h = (b - a) / m
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


@lru_cache(maxsize=None)
def kernel_constant(n: int, rtol: float = 1e-13, max_level: int = 22) -> float:
    """Normalisation C making ``C exp(1/(|x|^2-1))`` integrate to one over B(0, 1).

    The radial integral is refined by interval doubling (composite Simpson)
    until two successive levels agree to ``rtol``.
    """
    n = int(n)
    if n < 1:
        raise DomainError("dimension must be >= 1")

    def radial(r):
        return _bump(r * r) * r ** (n - 1)

    prev = _simpson(radial, 0.0, 1.0, 8)
    m = 8
    for _ in range(max_level):
        m *= 2
        cur = _simpson(radial, 0.0, 1.0, m)
        if abs(cur - prev) <= rtol * abs(cur):
            return 1.0 / (sphere_area(n) * cur)
        prev = cur
    raise NumericError(f"mollifier quadrature did not converge for n={n}")


@dataclass(frozen=True)
class MollifierKernel:
    """Samples of eta_eps on the lattice offsets ``|j h| < eps``.

    ``weights`` sum to one exactly (up to rounding); ``raw_integral`` is the
    unnormalised nodal quadrature of eta_eps, which should already be close to 1.
    """

    n: int
    C: float
    eps: float
    spacing: tuple
    offsets: np.ndarray
    weights: np.ndarray
    raw_integral: float


def make_kernel(grid: Grid, eps: float) -> MollifierKernel:
    eps = float(eps)
    if not eps > 0:
        raise DomainError("eps must be positive")
    h = np.asarray(grid.spacing)
    if eps < 2.0 * h.max():
        raise ResolutionError(f"eps={eps} is below two grid spacings ({h.max():.3g})")
    reach = np.floor(eps / h).astype(int)
    axes = [np.arange(-k, k + 1) for k in reach]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.n)
    rel = mesh * h / eps
    r2 = np.sum(rel * rel, axis=1)
    keep = r2 < 1.0
    offsets = mesh[keep]
    C = kernel_constant(grid.n)
    samples = C * _bump(r2[keep]) / eps**grid.n
    raw = float(samples.sum() * np.prod(h))
    weights = samples / samples.sum()
    offsets.flags.writeable = False
    weights.flags.writeable = False
    return MollifierKernel(grid.n, C, eps, tuple(h), offsets, weights, raw)


def interior_mask(grid: Grid, eps: float) -> np.ndarray:
    """Nodes whose distance to the bounding-box boundary exceeds ``eps``."""
    mask = np.ones(grid.shape, dtype=bool)
    for i in range(grid.n):
        c = grid.axis(i)
        tol = 1e-12 * (grid.upper[i] - grid.lower[i])
        ok = (c - grid.lower[i] > eps + tol) & (grid.upper[i] - c > eps + tol)
        shape = [1] * grid.n
        shape[i] = -1
        mask &= ok.reshape(shape)
    return mask


def mollify(f: GridFunction, eps: float) -> GridFunction:
    """``f * eta_eps`` on the nodes of Omega_eps; every other node is masked out."""
    grid = f.grid
    ker = make_kernel(grid, eps)
    out_mask = interior_mask(grid, ker.eps)
    if not out_mask.any():
        raise DomainError(f"eps={eps} leaves no interior nodes")
    strides = np.array([int(np.prod(grid.shape[i + 1:])) for i in range(grid.n)], dtype=np.int64)
    flat_off = (ker.offsets @ strides).astype(np.int64)
    out_idx = np.flatnonzero(out_mask.ravel()).astype(np.int64)
    vals = np.ascontiguousarray(np.nan_to_num(f.values).ravel())
    conv = kernels.gather_convolve(vals, out_idx, flat_off, ker.weights)
    if f.mask is not None:
        bad = (~f.mask).ravel().astype(np.float64)
        hit = kernels.gather_convolve(bad, out_idx, flat_off, np.ones_like(ker.weights))
        keep = np.zeros(grid.size, dtype=bool)
        keep[out_idx[hit == 0]] = True
        out_mask = out_mask & keep.reshape(grid.shape)
        if not out_mask.any():
            raise DomainError("no node has a fully defined mollifier stencil")
    full = np.full(grid.size, np.nan)
    full[out_idx] = conv
    return GridFunction(grid, full.reshape(grid.shape), out_mask)
