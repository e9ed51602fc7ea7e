"""Multi-indices, Taylor polynomials from precise representatives, and remainders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .convergence import ConvergenceReport, make_report
from .differentiability import CONV_TOL, SLOPE_MIN, _bbox
from .errors import DomainError
from .grid import Grid, GridFunction, interpolate, multi_indices, region_weights, wkp_norm
from .representative import REP_TOL, LpVerdict, RadiusSchedule, classify_lp_point, precise_rep
from .sources import as_source

MAX_ORDER = 3
EPS = float(np.finfo(float).eps)


def multiindex_eval(alpha, z):
    """``(|alpha|, alpha!, z**alpha)``."""
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise DomainError("multi-index entries must be nonnegative")
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.size != len(alpha):
        raise DomainError("multi-index and point differ in dimension")
    order = sum(alpha)
    fact = math.prod(math.factorial(a) for a in alpha)
    power = float(np.prod([zi**a for zi, a in zip(z, alpha)]))
    return order, fact, power


def _monomial(alpha, Z):
    out = np.ones(Z.shape[:-1])
    for i, a in enumerate(alpha):
        if a:
            out = out * Z[..., i] ** a
    return out


def default_schedule(n: int, k: int) -> RadiusSchedule:
    """Radii fine enough for the representative of f, coarse enough for order-k differences."""
    if n >= 3:
        return RadiusSchedule(0.02, 0.5, 4)
    return RadiusSchedule(0.04, 0.5, 6)


@dataclass
class TaylorData:
    x: tuple
    k: int
    coeffs: dict  # alpha -> (d^alpha f)*(x)
    converged: dict  # alpha -> bool
    verdicts: dict = field(default_factory=dict)  # |alpha| = k -> LpVerdict

    @property
    def all_converged(self) -> bool:
        return all(self.converged.values())

    @property
    def exceptional(self) -> bool:
        """True when some top-order derivative is not classified as an L_p-point."""
        return any(v is not LpVerdict.LP_POINT for v in self.verdicts.values())

    def polynomial(self, Y) -> np.ndarray:
        """Taylor polynomial evaluated at displacements ``Y = y - x`` (shape ``(..., n)``)."""
        Y = np.asarray(Y, dtype=float)
        out = np.zeros(Y.shape[:-1])
        for alpha, c in self.coeffs.items():
            out = out + c / math.prod(math.factorial(a) for a in alpha) * _monomial(alpha, Y)
        return out


def taylor_data(
    f,
    x,
    k: int,
    p: float = 2.0,
    sched: RadiusSchedule | None = None,
    rep_tol: float = REP_TOL,
) -> TaylorData:
    """Coefficients ``(d^alpha f)*(x)`` for ``|alpha| <= k`` from nested finite differences.

    Unsettled representatives are reported through ``converged`` (value 0),
    and the top-order derivatives also get an L_p-point verdict at exponent p.
    """
    k = int(k)
    if not 0 <= k <= MAX_ORDER:
        raise DomainError(f"order k must be between 0 and {MAX_ORDER}")
    src = as_source(f)
    x = tuple(float(v) for v in np.atleast_1d(x))
    sched = sched or default_schedule(src.n, k)
    spacing = sched.r_min / 4.0
    coeffs, conv, verdicts = {}, {}, {}
    for alpha in multi_indices(src.n, k):
        fld = src.field(alpha, center=x, reach=sched.r0, spacing=spacing)
        if sum(alpha) == k:
            cls = classify_lp_point(fld, x, p, sched, rep_tol=rep_tol)
            est, ok = cls.estimate, cls.converged
            verdicts[alpha] = cls.verdict
        else:
            est, ok = precise_rep(fld, x, sched, rep_tol)
        coeffs[alpha] = float(est)
        conv[alpha] = bool(ok)
    return TaylorData(x, k, coeffs, conv, verdicts)


def _lattice(V, k, h_ref=None) -> Grid:
    from .differentiability import reference_lattice

    if h_ref is None:
        lo, hi = _bbox(V)
        h_ref = float(np.max(hi - lo)) / {1: 64, 2: 32}.get(lo.size, 16)
    return reference_lattice(V, h_ref, margin=k + 1)


def remainder(f, td: TaylorData, h: float, V, h_ref: float | None = None, lattice: Grid | None = None) -> GridFunction:
    """``z -> f*(x + h z) - P(h z)`` on a fixed lattice over V."""
    if not h > 0:
        raise DomainError("h must be positive")
    src = as_source(f)
    lattice = lattice or _lattice(V, td.k, h_ref)
    x = np.asarray(td.x)
    reach = h * max(max(abs(lo), abs(hi)) for lo, hi in zip(lattice.lower, lattice.upper))
    F = src.values(center=x, reach=reach, spacing=0.5 * h * min(lattice.spacing))
    Z = lattice.points()
    vals = interpolate(F, x + h * Z)
    return GridFunction(lattice, vals - td.polynomial(h * Z))


def _simpson_weights(m: int) -> np.ndarray:
    if m < 3 or m % 2 == 0:
        raise DomainError("Simpson's rule needs an odd node count >= 3")
    w = np.ones(m)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * (m - 1))


def integral_remainder(f, x, k: int, h: float, z, spacing: float | None = None, nodes: int = 65) -> float:
    """Integral-form remainder ``k h^k sum z^a/a! int (1-t)^(k-1) (d^a f(x+thz) - d^a f(x)) dt``.

    ``d^a f`` are finite differences on a patch around the segment, read off
    along it by cubic interpolation; the t-integral is composite Simpson.
    """
    k = int(k)
    if not 1 <= k <= MAX_ORDER:
        raise DomainError(f"order k must be between 1 and {MAX_ORDER}")
    src = as_source(f)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(np.asarray(z, dtype=float))
    seg = h * z
    length = float(np.max(np.abs(seg)))
    if spacing is None:
        spacing = max(length, 1e-2) / 64.0
    t = np.linspace(0.0, 1.0, nodes)
    w = _simpson_weights(nodes) * (1.0 - t) ** (k - 1)
    pts = x + t[:, None] * seg
    total = 0.0
    for alpha in multi_indices(x.size, k, exact=True):
        _, fact, power = multiindex_eval(alpha, z)
        if power == 0.0:
            continue
        fld = src.field(alpha, center=tuple(x), reach=length, spacing=spacing)
        vals = interpolate(fld, pts)
        base = interpolate(fld, x[None, :])[0]
        total += power / fact * float(w @ (vals - base))
    return k * h**k * total


def remainder_study(
    f,
    x,
    k: int,
    p: float,
    V,
    hs,
    sched: RadiusSchedule | None = None,
    norm: str = "full",
    h_ref: float | None = None,
    conv_tol: float = CONV_TOL,
    slope_min: float = SLOPE_MIN,
    td: TaylorData | None = None,
    jobs: int | None = None,
) -> ConvergenceReport:
    """``||R / h^k||_{W^k_p(V)}`` over the h-schedule.

    ``norm="reduced"`` keeps only the order-0 and order-k terms.  An
    unsettled coefficient makes the verdict Inconclusive.
    """
    if norm not in ("full", "reduced"):
        raise DomainError("norm must be 'full' or 'reduced'")
    src = as_source(f)
    td = td or taylor_data(src, x, k, p, sched)
    lattice = _lattice(V, td.k, h_ref)
    hs = [float(h) for h in hs]
    orders = "all" if norm == "full" else "ends"

    Z = lattice.points()
    vol = float(np.sum(region_weights(lattice, V)[1]))
    gain = sum(len(multi_indices(lattice.n, j, exact=True)) / min(lattice.spacing) ** j for j in range(td.k + 1))

    def one(h):
        R = remainder(src, td, h, V, lattice=lattice)
        err = wkp_norm(R * (1.0 / h**td.k), td.k, p, V, orders=orders)
        # rounding in f(x + hz) - P(hz), blown up by 1/h^k and by the lattice differences
        scale = float(np.max(np.abs(R.values + td.polynomial(h * Z))))
        return err, 16.0 * EPS * scale / h**td.k * gain * vol ** (1.0 / p)

    out = pmap(one, hs, jobs)
    errors = [e for e, _ in out]
    return make_report(
        hs, errors, conv_tol, slope_min,
        force_inconclusive=not td.all_converged,
        floors=[f for _, f in out],
        columns={"rounding_floor": [f for _, f in out]},
        notes={"coefficients": dict(td.coeffs), "converged": dict(td.converged),
               "verdicts": {a: v.value for a, v in td.verdicts.items()}},
    )
