"""Analytic test functions with membership annotations.

Every evaluator takes points of shape ``(..., n)`` and returns values of shape
``(...)``; gradients return ``(..., n)``.  Annotations are claims that the
test suite checks against the classifiers, never inputs the code trusts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnknownFunctionError
from .mollify import kernel_constant

SPACES = ("W1p", "RW1p", "W2p", "RW2p")


def _always(p):
    return True


def _never(p):
    return False


@dataclass(frozen=True)
class CorpusEntry:
    id: str
    n: int
    fn: Callable
    grad: Callable | None
    smoothness: str
    spaces: dict  # space -> predicate on p
    exceptional: dict = field(default_factory=dict)  # order k -> list of points
    bounded: bool = True
    degree: int | None = None  # polynomial degree, if a polynomial
    description: str = ""

    def evaluate(self, pts):
        pts = np.asarray(pts, dtype=float)
        if pts.shape[-1] != self.n:
            raise ValueError(f"{self.id} expects points of dimension {self.n}")
        return self.fn(pts)

    def gradient(self, pts):
        if self.grad is None:
            raise NotImplementedError(f"{self.id} has no analytic gradient")
        return self.grad(np.asarray(pts, dtype=float))

    def membership(self, space: str, p: float) -> bool:
        if space not in SPACES:
            raise ValueError(f"unknown space {space!r}")
        if not p >= 1:
            raise ValueError("p must be >= 1")
        return bool(self.spaces[space](float(p)))

    def annotations(self, p: float) -> list:
        return [("In" if self.membership(s, p) else "NotIn") + s for s in SPACES]

    def exceptional_points(self, k: int = 1) -> list:
        return [tuple(pt) for pt in self.exceptional.get(int(k), [])]


def _norm(y):
    return np.sqrt(np.sum(y * y, axis=-1))


def _abs_grad(y):
    r = _norm(y)[..., None]
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(r > 0, y / np.where(r > 0, r, 1.0), 0.0)


def _smooth(id_, n, fn, grad, smoothness="C_inf", **kw):
    spaces = {s: _always for s in SPACES}
    return CorpusEntry(id_, n, fn, grad, smoothness, spaces, **kw)


def _abs_entry(id_, n):
    origin = [tuple([0.0] * n)]
    spaces = {
        "W1p": _always,
        # the origin is cap_p-null exactly when p <= n; in R^1 a point never is
        "RW1p": (lambda p: p <= n) if n >= 2 else _never,
        # |D^2 |x|| ~ 1/|x| is p-integrable near 0 only for p < n
        "W2p": lambda p: p < n,
        "RW2p": lambda p: p < n,
    }
    return CorpusEntry(
        id_, n, _norm, _abs_grad, "Lipschitz", spaces, {1: origin, 2: origin},
        description=f"Euclidean norm |y| in R^{n}",
    )


_A = np.array([0.7, -1.3])


def _poly2(y):
    a, b = y[..., 0], y[..., 1]
    return 1.0 + a - 2.0 * b + 0.5 * a * a + a * b - 0.75 * b * b


def _poly2_grad(y):
    a, b = y[..., 0], y[..., 1]
    return np.stack([1.0 + a + b, -2.0 + a - 1.5 * b], axis=-1)


def _poly3(y):
    a, b = y[..., 0], y[..., 1]
    return 0.5 - a + 0.3 * b + a * a - 0.4 * a * b + 0.2 * a**3 - 0.5 * a * b * b + 0.1 * b**3


def _poly3_grad(y):
    a, b = y[..., 0], y[..., 1]
    return np.stack(
        [-1.0 + 2.0 * a - 0.4 * b + 0.6 * a * a - 0.5 * b * b, 0.3 - 0.4 * a - a * b + 0.3 * b * b],
        axis=-1,
    )


def _bump(y):
    c = kernel_constant(y.shape[-1])
    r2 = np.sum(y * y, axis=-1)
    out = np.zeros_like(r2)
    inside = r2 < 1.0
    out[inside] = c * np.exp(1.0 / (r2[inside] - 1.0))
    return out


def _bump_grad(y):
    r2 = np.sum(y * y, axis=-1)
    inside = r2 < 1.0
    fac = np.zeros_like(r2)
    fac[inside] = -2.0 / (r2[inside] - 1.0) ** 2
    return (_bump(y) * fac)[..., None] * y


def _gauss(y):
    return np.exp(-np.sum(y * y, axis=-1))


def _gauss_grad(y):
    return -2.0 * y * _gauss(y)[..., None]


def _build():
    entries = [
        _smooth("const", 2, lambda y: np.ones(y.shape[:-1]), lambda y: np.zeros_like(y), degree=0,
                description="constant 1"),
        _abs_entry("abs_1d", 1),
        _abs_entry("abs_nd", 2),
        _abs_entry("abs_3d", 3),
        _smooth("gauss", 2, _gauss, _gauss_grad, description="exp(-|y|^2) in R^2"),
        _smooth("gauss_1d", 1, _gauss, _gauss_grad, description="exp(-y^2) in R^1"),
        _smooth("linear", 2, lambda y: y @ _A, lambda y: np.broadcast_to(_A, y.shape).copy(), degree=1,
                description="0.7 y1 - 1.3 y2"),
        _smooth("quadratic", 2, lambda y: np.sum(y * y, axis=-1), lambda y: 2.0 * y, degree=2,
                description="|y|^2 in R^2"),
        CorpusEntry(
            "cubic_kink", 1, lambda y: y[..., 0] * np.abs(y[..., 0]), lambda y: 2.0 * np.abs(y),
            "C1",
            {"W1p": _always, "RW1p": _always, "W2p": _always, "RW2p": _never},
            {2: [(0.0,)]},
            description="y|y|: second derivative 2 sign(y) jumps at 0",
        ),
        _smooth("poly_2", 2, _poly2, _poly2_grad, degree=2, description="quadratic polynomial in R^2"),
        _smooth("poly_3", 2, _poly3, _poly3_grad, degree=3, description="cubic polynomial in R^2"),
        _smooth("bump", 2, _bump, _bump_grad, description="the mollifier kernel in R^2"),
        _smooth("exp_x1", 2, lambda y: np.exp(y[..., 0]),
                lambda y: np.stack([np.exp(y[..., 0]), np.zeros(y.shape[:-1])], axis=-1),
                bounded=False, description="exp(y1) in R^2"),
    ]
    return {e.id: e for e in entries}


_REGISTRY = _build()

PRODUCT_PAIRS = [("gauss", "quadratic"), ("gauss", "abs_nd"), ("poly_2", "exp_x1"), ("bump", "linear")]


def product(f_id: str, g_id: str) -> CorpusEntry:
    f, g = get(f_id), get(g_id)
    if f.n != g.n:
        raise ValueError("product factors must share the dimension")

    def fn(y):
        return f.fn(y) * g.fn(y)

    grad = None
    if f.grad is not None and g.grad is not None:

        def grad(y):
            return f.fn(y)[..., None] * g.grad(y) + g.fn(y)[..., None] * f.grad(y)

    spaces = {s: (lambda p, s=s: f.membership(s, p) and g.membership(s, p)) for s in SPACES}
    exc = {}
    for k in (1, 2):
        pts = sorted(set(f.exceptional_points(k)) | set(g.exceptional_points(k)))
        if pts:
            exc[k] = pts
    smooth = f.smoothness if f.smoothness == g.smoothness else "mixed"
    return CorpusEntry(
        f"{f_id}*{g_id}", f.n, fn, grad, smooth, spaces, exc, f.bounded and g.bounded,
        description=f"product of {f_id} and {g_id}",
    )


def get(id_: str) -> CorpusEntry:
    if id_ in _REGISTRY:
        return _REGISTRY[id_]
    if "*" in id_:
        a, _, b = id_.partition("*")
        if a in _REGISTRY and b in _REGISTRY:
            return product(a, b)
    raise UnknownFunctionError(f"unknown corpus function {id_!r}")


def ids() -> list:
    return list(_REGISTRY)


def entries() -> list:
    return list(_REGISTRY.values())
