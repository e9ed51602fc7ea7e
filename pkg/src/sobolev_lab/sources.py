"""Where point studies get their lattice data from.

A study at a point ``x`` only looks at a neighbourhood of ``x``.  A
:class:`GridSource` wraps one global :class:`GridFunction` and hands out the
whole grid; a :class:`CorpusSource` samples an analytic corpus entry on a
small patch lattice centred at ``x`` (``x`` is then a node and the ball
weights are symmetric), which lets point studies use spacings far below
what a global grid could afford.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DomainError
from .grid import Grid, GridFunction, VectorField, derivative, gradient_fd, sample


class GridSource:
    def __init__(self, f: GridFunction):
        self.f = f
        self.n = f.grid.n
        self._deriv = lru_cache(maxsize=None)(lambda alpha: derivative(self.f, alpha))
        self._grad = None

    def _check(self, center, reach, margin_nodes):
        if center is None:
            return
        g = self.f.grid
        x = g._point(center)
        h = np.asarray(g.spacing)
        lo = np.asarray(g.lower) + margin_nodes * h
        hi = np.asarray(g.upper) - margin_nodes * h
        if np.any(x - reach < lo - 1e-12) or np.any(x + reach > hi + 1e-12):
            raise DomainError(f"B({x.tolist()}, {reach}) is too close to the grid boundary")

    def field(self, alpha=None, center=None, reach=None, spacing=None) -> GridFunction:
        if alpha is None or not any(alpha):
            return self.f
        self._check(center, reach or 0.0, 0)
        return self._deriv(tuple(int(a) for a in alpha))

    def gradient(self, center=None, reach=None, spacing=None) -> VectorField:
        self._check(center, reach or 0.0, 0)
        if self._grad is None:
            self._grad = gradient_fd(self.f)
        return self._grad

    def values(self, center=None, reach=None, spacing=None) -> GridFunction:
        self._check(center, reach or 0.0, 2)
        return self.f


class CorpusSource:
    """Patch sampler for a corpus entry (or any callable with an ``n`` attribute).

    ``spacing`` fixes the patch spacing; otherwise each request supplies one.
    """

    def __init__(self, entry, spacing: float | None = None):
        if isinstance(entry, str):
            from .corpus import get

            entry = get(entry)
        self.entry = entry
        self.n = entry.n
        self.spacing = spacing
        self._patch = lru_cache(maxsize=16)(self._make_patch)
        self._deriv = lru_cache(maxsize=32)(self._make_deriv)
        self._grad = lru_cache(maxsize=16)(self._make_grad)

    def _h(self, spacing):
        h = self.spacing if self.spacing is not None else spacing
        if h is None or not h > 0:
            raise DomainError("a patch spacing is required for corpus sources")
        return float(h)

    def _key(self, center, reach, spacing, margin):
        x = np.atleast_1d(np.asarray(center, dtype=float))
        if x.size != self.n:
            raise DomainError(f"point has dimension {x.size}, corpus entry has {self.n}")
        h = self._h(spacing)
        return tuple(x.tolist()), float(reach) + margin * h, h

    def _make_patch(self, center, halfwidth, h):
        grid = Grid.centered(center, halfwidth, h)
        return sample(self.entry.evaluate, grid)

    def _make_deriv(self, center, halfwidth, h, alpha):
        return derivative(self._patch(center, halfwidth, h), alpha)

    def _make_grad(self, center, halfwidth, h):
        return gradient_fd(self._patch(center, halfwidth, h))

    def field(self, alpha=None, center=None, reach=None, spacing=None) -> GridFunction:
        order = 0 if alpha is None else int(sum(alpha))
        key = self._key(center, reach, spacing, order + 2)
        if order == 0:
            return self._patch(*key)
        return self._deriv(*key, tuple(int(a) for a in alpha))

    def gradient(self, center=None, reach=None, spacing=None) -> VectorField:
        return self._grad(*self._key(center, reach, spacing, 3))

    def values(self, center=None, reach=None, spacing=None) -> GridFunction:
        return self._patch(*self._key(center, reach, spacing, 3))


def as_source(f, spacing: float | None = None):
    if isinstance(f, (GridSource, CorpusSource)):
        return f
    if isinstance(f, GridFunction):
        return GridSource(f)
    return CorpusSource(f, spacing)
