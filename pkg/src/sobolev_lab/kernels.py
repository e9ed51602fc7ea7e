"""Hot inner loops, each in a numba flavour and a pure-numpy flavour.

The public names (``gather_convolve``, ``cell_energy``, ``disc_rect_area``)
are bound to the numba kernels unless numba is missing or
``SOBOLEV_LAB_NO_JIT=1`` is set.  Both flavours stay importable as
``*_numpy`` / ``*_numba`` so tests and the benchmark can compare them.
"""

import math

import numpy as np

from ._jit import USE_NUMBA, njit

# --------------------------------------------------------------------------
# stencil gather: out[i] = sum_k w[k] * v[idx[i] + off[k]]
# --------------------------------------------------------------------------


def gather_convolve_numpy(values, out_idx, offsets, weights):
    # same summation order as the jitted loop (k ascending) -> identical bits
    out = np.zeros(out_idx.shape[0], dtype=np.float64)
    for k in range(offsets.shape[0]):
        out += weights[k] * values[out_idx + offsets[k]]
    return out


@njit(cache=True, nogil=True)
def _gather_convolve_loop(values, out_idx, offsets, weights):
    m = out_idx.shape[0]
    nk = offsets.shape[0]
    out = np.zeros(m, dtype=np.float64)
    for i in range(m):
        base = out_idx[i]
        acc = 0.0
        for k in range(nk):
            acc += weights[k] * values[base + offsets[k]]
        out[i] = acc
    return out


def gather_convolve_numba(values, out_idx, offsets, weights):
    return _gather_convolve_loop(values, out_idx, offsets, weights)


# --------------------------------------------------------------------------
# cell-wise p-Dirichlet energy on staggered (cell-centred) gradients
#
# For cell c (flat index of its lower corner) and edge e with corner offsets
# (a_e, b_e) along axis ax_e:
#   |grad u|_c^2 = sum_e (u[c+b_e] - u[c+a_e])^2 / h_{ax_e}^2 / nper
# where nper = 2**(n-1) edges per axis.  Energy density (|grad u|^2 + delta^2)^(p/2).
# --------------------------------------------------------------------------


def cell_energy_numpy(u, cells, edge_a, edge_b, edge_w, p, delta2, vol, want_grad):
    """Return (energy, grad); ``edge_w`` is 1/(h_axis^2 * nper) per edge."""
    ia = cells[:, None] + edge_a[None, :]
    ib = cells[:, None] + edge_b[None, :]
    d = u[ib] - u[ia]
    g2 = (d * d) @ edge_w + delta2
    half = 0.5 * p
    energy = vol * float(np.sum(g2**half))
    if not want_grad:
        return energy, None
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(g2 > 0.0, vol * p * g2 ** (half - 1.0), 0.0)
    contrib = (coef[:, None] * d) * edge_w[None, :]
    size = u.shape[0]
    grad = np.bincount(ib.ravel(), weights=contrib.ravel(), minlength=size)
    grad -= np.bincount(ia.ravel(), weights=contrib.ravel(), minlength=size)
    return energy, grad


@njit(cache=True, nogil=True)
def _cell_energy_loop(u, cells, edge_a, edge_b, edge_w, p, delta2, vol, want_grad):
    ne = edge_a.shape[0]
    half = 0.5 * p
    grad = np.zeros(u.shape[0], dtype=np.float64)
    energy = 0.0
    for i in range(cells.shape[0]):
        c = cells[i]
        g2 = 0.0
        for e in range(ne):
            d = u[c + edge_b[e]] - u[c + edge_a[e]]
            g2 += d * d * edge_w[e]
        g2 += delta2
        energy += g2**half
        if want_grad and g2 > 0.0:
            coef = vol * p * g2 ** (half - 1.0)
            for e in range(ne):
                d = u[c + edge_b[e]] - u[c + edge_a[e]]
                t = coef * d * edge_w[e]
                grad[c + edge_b[e]] += t
                grad[c + edge_a[e]] -= t
    return vol * energy, grad


def cell_energy_numba(u, cells, edge_a, edge_b, edge_w, p, delta2, vol, want_grad):
    energy, grad = _cell_energy_loop(
        u, cells, edge_a, edge_b, edge_w, float(p), float(delta2), float(vol), bool(want_grad)
    )
    return energy, (grad if want_grad else None)


# --------------------------------------------------------------------------
# exact area of disc(0, r) intersected with axis-aligned rectangles
# --------------------------------------------------------------------------


def _arc_primitive(x, r):
    # antiderivative of sqrt(r^2 - x^2) on [-r, r]
    t = np.clip(x / r, -1.0, 1.0)
    return 0.5 * r * r * (t * np.sqrt(1.0 - t * t) + np.arcsin(t))


def disc_rect_area_numpy(x0, x1, y0, y1, r):
    """Area of {|z| < r} n [x0,x1]x[y0,y1], vectorised over rectangles."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    y0 = np.asarray(y0, dtype=np.float64)
    y1 = np.asarray(y1, dtype=np.float64)
    a = np.maximum(x0, -r)
    b = np.minimum(x1, r)
    b = np.maximum(a, b)
    sy0 = np.sqrt(np.maximum(r * r - y0 * y0, 0.0))
    sy1 = np.sqrt(np.maximum(r * r - y1 * y1, 0.0))
    pts = np.stack([a, b, -sy0, sy0, -sy1, sy1], axis=-1)
    pts = np.clip(pts, a[..., None], b[..., None])
    pts.sort(axis=-1)
    lo = pts[..., :-1]
    hi = pts[..., 1:]
    mid = 0.5 * (lo + hi)
    smid = np.sqrt(np.maximum(r * r - mid * mid, 0.0))
    upper_is_arc = smid < y1[..., None]
    lower_is_arc = -smid > y0[..., None]
    top = np.where(upper_is_arc, smid, y1[..., None])
    bot = np.where(lower_is_arc, -smid, y0[..., None])
    live = (top > bot) & (hi > lo)
    width = hi - lo
    arc = _arc_primitive(hi, r) - _arc_primitive(lo, r)
    upper_int = np.where(upper_is_arc, arc, y1[..., None] * width)
    lower_int = np.where(lower_is_arc, -arc, y0[..., None] * width)
    return np.sum(np.where(live, upper_int - lower_int, 0.0), axis=-1)


@njit(cache=True, nogil=True)
def _arc_primitive_scalar(x, r):
    t = x / r
    if t > 1.0:
        t = 1.0
    elif t < -1.0:
        t = -1.0
    return 0.5 * r * r * (t * math.sqrt(1.0 - t * t) + math.asin(t))


@njit(cache=True, nogil=True)
def _disc_rect_area_loop(x0, x1, y0, y1, r):
    m = x0.shape[0]
    out = np.zeros(m, dtype=np.float64)
    pts = np.empty(6, dtype=np.float64)
    rr = r * r
    for i in range(m):
        a = max(x0[i], -r)
        b = min(x1[i], r)
        if b <= a:
            continue
        sy0 = math.sqrt(max(rr - y0[i] * y0[i], 0.0))
        sy1 = math.sqrt(max(rr - y1[i] * y1[i], 0.0))
        pts[0] = a
        pts[1] = b
        pts[2] = -sy0
        pts[3] = sy0
        pts[4] = -sy1
        pts[5] = sy1
        for k in range(6):
            pts[k] = min(max(pts[k], a), b)
        pts.sort()
        total = 0.0
        for k in range(5):
            lo = pts[k]
            hi = pts[k + 1]
            if hi <= lo:
                continue
            mid = 0.5 * (lo + hi)
            smid = math.sqrt(max(rr - mid * mid, 0.0))
            upper_arc = smid < y1[i]
            lower_arc = -smid > y0[i]
            top = smid if upper_arc else y1[i]
            bot = -smid if lower_arc else y0[i]
            if top <= bot:
                continue
            arc = _arc_primitive_scalar(hi, r) - _arc_primitive_scalar(lo, r)
            up = arc if upper_arc else y1[i] * (hi - lo)
            dn = -arc if lower_arc else y0[i] * (hi - lo)
            total += up - dn
        out[i] = total
    return out


def disc_rect_area_numba(x0, x1, y0, y1, r):
    return _disc_rect_area_loop(
        np.ascontiguousarray(x0, dtype=np.float64).ravel(),
        np.ascontiguousarray(x1, dtype=np.float64).ravel(),
        np.ascontiguousarray(y0, dtype=np.float64).ravel(),
        np.ascontiguousarray(y1, dtype=np.float64).ravel(),
        float(r),
    ).reshape(np.shape(x0))


if USE_NUMBA:
    gather_convolve = gather_convolve_numba
    cell_energy = cell_energy_numba
    disc_rect_area = disc_rect_area_numba
else:
    gather_convolve = gather_convolve_numpy
    cell_energy = cell_energy_numpy
    disc_rect_area = disc_rect_area_numpy
