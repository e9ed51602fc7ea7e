"""End-to-end acceptance checks, one block per criterion.

Each test records its outcome through the ``criterion`` fixture, which prints
one PASS/FAIL line per criterion at the end of the run.
"""

import math
import time
from itertools import combinations
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from sobolev_lab import cli, corpus
from sobolev_lab.capacity import CapacityOptions, CondenserProblem, NullVerdict, cap_null_classify, p_capacity
from sobolev_lab.config import load
from sobolev_lab.convergence import Trend
from sobolev_lab.differentiability import (
    FormalDifferential,
    density_test,
    diffquot_study,
    lp_approx_differential,
)
from sobolev_lab.grid import AbsDev, Ball, Box, Grid, ball_average, gradient_fd, lp_norm, NodeMask, sample
from sobolev_lab.mollify import make_kernel, mollify
from sobolev_lab.representative import (
    LpVerdict,
    RadiusSchedule,
    classify_lp_point,
    classify_refined_gradient,
    precise_rep,
)
from sobolev_lab.sources import CorpusSource
from sobolev_lab.taylor import integral_remainder, remainder, remainder_study, taylor_data

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
ALL_IDS = corpus.ids() + [f"{a}*{b}" for a, b in corpus.PRODUCT_PAIRS]


def regular_points(entry, count, seed, k=1, spread=0.6):
    """Uniform points in the cube of half-width ``spread``, 0.1 away from exceptional points."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        x = rng.uniform(-spread, spread, entry.n)
        if all(np.linalg.norm(x - np.asarray(q)) > 0.1 for q in entry.exceptional_points(k)):
            out.append(tuple(float(v) for v in x))
    return out


def unit_ball(n):
    return Ball((0.0,) * n, 1.0)


# --- 1 -------------------------------------------------------------------------


def test_c1_abs_1d_origin_is_not_a_lebesgue_point_of_the_gradient(criterion, tmp_path):
    cfg = load(CONFIGS / "lp_point_abs_1d.ini")
    start = time.perf_counter()
    assert cli.main(["run", str(CONFIGS / "lp_point_abs_1d.ini"), "--out", str(tmp_path)]) == 0
    elapsed = time.perf_counter() - start

    sched = RadiusSchedule(*cfg.schedule["radius"])
    F = CorpusSource("abs_1d", sched.r_min / 1024).gradient(center=(0.0,), reach=sched.r0)
    c = classify_lp_point(F, (0.0,), cfg.p, sched)
    worst = max(abs(d - 1.0) for d in c.deviations)
    ok = worst <= 1e-3 and abs(float(c.estimate[0])) <= 1e-3 and c.verdict is LpVerdict.NOT_LP_POINT
    summary = (tmp_path / f"{cfg.name}.summary.txt").read_text()
    ok = ok and "verdict=NotLpPoint" in summary and elapsed < 10
    criterion(1, ok, f"max|dev-1|={worst:.1e} |rep|={abs(float(c.estimate[0])):.1e} {elapsed:.1f}s")
    assert ok


# --- 2 -------------------------------------------------------------------------


def test_c2_abs_nd_refined_gradient(criterion):
    cfg = load(CONFIGS / "refined_gradient_abs_nd.ini")
    away = [x for x in cfg.points if np.linalg.norm(x) > 0]
    assert len(away) == 25
    sched = RadiusSchedule(0.02, 0.5, 7)
    rep = classify_refined_gradient("abs_nd", 1.0, away, 1, sched)
    n_lp = sum(all(rep.table[i][a].verdict is LpVerdict.LP_POINT for a in rep.alphas) for i in range(25))
    gap = max(float(np.max(np.abs(rep.estimates(i) - np.asarray(x) / np.linalg.norm(x)))) for i, x in enumerate(away))
    with_origin = classify_refined_gradient("abs_nd", 1.0, [(0.0, 0.0)] + away, 1, sched)
    ok = n_lp == 25 and gap <= 1e-2 and with_origin.exceptional == [0]
    criterion(2, ok, f"{n_lp}/25 LpPoint, gradient gap {gap:.1e}, exceptional {len(with_origin.exceptional)}")
    assert ok


# --- 3 -------------------------------------------------------------------------

TS = [0.02 * 0.5**j for j in range(6)]


def test_c3_abs_1d_quotient_stalls_at_origin_only(criterion):
    U = Box((-1.0,), (1.0,))
    origin = diffquot_study("abs_1d", (0.0,), 2.0, U, TS)
    off = diffquot_study("abs_1d", (0.5,), 2.0, U, TS)
    parts = origin.columns["gradient_part"]
    worst = max(abs(g - math.sqrt(2.0)) for g in parts)
    ok = origin.verdict is Trend.STALLS and worst <= 5e-2 and off.verdict is Trend.CONVERGES
    criterion(3, ok, f"origin {origin.verdict.value} |grad part - sqrt2|<={worst:.3f}; x=0.5 {off.verdict.value}")
    assert ok


# --- 4 and 5 -------------------------------------------------------------------

# the start is free; 0.01 keeps C t below the 1e-2 threshold for the most curved product
TS4 = [0.01 * 0.5**j for j in range(6)]
RW1_MEMBERS = [
    (fid, p)
    for fid in ALL_IDS
    for p in (1.0, 2.0)
    if corpus.get(fid).membership("RW1p", p)
]
C4_SECONDS = {"t": 0.0}


@pytest.mark.parametrize("fid, p", RW1_MEMBERS)
def test_c4_c5_quotients_and_fits_at_regular_points(criterion, fid, p):
    entry = corpus.get(fid)
    U = unit_ball(entry.n)
    bad4, bad5 = [], []
    for x in regular_points(entry, 3, 0):
        start = time.perf_counter()
        rep = diffquot_study(fid, x, p, U, TS4)
        C4_SECONDS["t"] += time.perf_counter() - start
        if not (rep.verdict is Trend.CONVERGES and rep.slope >= 0.5):
            bad4.append((x, rep.verdict.value, rep.slope))
        fit = lp_approx_differential(fid, x, p)
        notes = fit.report.notes
        if not (fit.report.verdict is Trend.CONVERGES and notes.get("identity_ok") and notes["identity_gap"] <= 5e-2):
            bad5.append((x, fit.report.verdict.value, notes.get("identity_gap")))
    criterion(4, not bad4)
    criterion(5, not bad5)
    assert not bad4, bad4
    assert not bad5, bad5


def test_c4_runtime(criterion):
    total = C4_SECONDS["t"]
    ok = 0 < total < 120
    criterion(4, ok, f"{len(RW1_MEMBERS)} (member, p) pairs x 3 points, quotient studies {total:.1f}s")
    assert ok


# --- 6 -------------------------------------------------------------------------

FINE = [0.025 * 0.5**j for j in range(6)]
COARSE = [0.4 * 0.5**j for j in range(6)]


def test_c6_remainders(criterion):
    V = unit_ball(2)
    bad = []
    for fid, x in (("gauss", (0.2, -0.1)), ("poly_3", (0.1, 0.3))):
        for k in (1, 2):
            for p in (1.0, 2.0):
                rep = remainder_study(fid, x, k, p, V, FINE)
                if rep.verdict is not Trend.CONVERGES:
                    bad.append((fid, k, p, rep.verdict.value))
    worst_poly = 0.0
    for fid in ("const", "linear", "quadratic", "poly_2"):
        deg = corpus.get(fid).degree
        for k in range(max(deg, 1), 3):
            for p in (1.0, 2.0):
                worst_poly = max(worst_poly, max(remainder_study(fid, (0.1, 0.2), k, p, V, COARSE).errors))
    worst_gap = 0.0
    rng = np.random.default_rng(0)
    for fid, x, ks in (("gauss", (0.2, -0.1), (1, 2, 3)), ("poly_3", (0.1, 0.3), (1, 2, 3)),
                       ("bump", (0.1, 0.2), (1, 2)), ("gauss_1d", (0.2,), (1, 2, 3)), ("cubic_kink", (0.3,), (1,))):
        U = unit_ball(len(x))
        for k in ks:
            td = taylor_data(fid, x, k)
            for h in (FINE[0], FINE[2], COARSE[1]):
                R = remainder(fid, td, h, U)
                P = R.grid.points().reshape(-1, len(x))
                inside = np.flatnonzero(np.linalg.norm(P, axis=1) <= 1.0)
                for i in rng.choice(inside, 8, replace=False):
                    gap = abs(R.values.ravel()[i] - integral_remainder(fid, x, k, h, P[i]))
                    worst_gap = max(worst_gap, gap)
    ok = not bad and worst_poly <= 1e-9 and worst_gap < 1e-5
    criterion(6, ok, f"smooth studies bad={bad}, polynomial max {worst_poly:.1e}, direct vs integral {worst_gap:.1e}")
    assert ok


# --- 7 -------------------------------------------------------------------------

TIGHT = CapacityOptions(tol=1e-10)


def test_c7_point_condenser_on_the_line(criterion):
    g = Grid((-1.0,), (1.0,), (1025,))
    om = np.zeros(1025, dtype=bool)
    om[1:-1] = True
    K = np.zeros(1025, dtype=bool)
    K[g.nearest_index((0.0,))] = True
    e = p_capacity(CondenserProblem(g, K, om, 2.0)).energy
    ok = abs(e - 2.0) <= 0.02 * 2.0
    criterion(7, ok, f"1D point {e:.6f} vs 2")
    assert ok


def test_c7_annulus(criterion):
    oracle = 2 * math.pi / quad(lambda r: 1.0 / r, 0.25, 1.0)[0]
    g = Grid((-1.0, -1.0), (1.0, 1.0), (257, 257))
    P = g.points()
    rad = np.sqrt(np.sum(P * P, axis=-1))
    e = p_capacity(CondenserProblem(g, rad <= 0.25, rad < 1.0 - 1e-12, 2.0)).energy
    rel = abs(e - oracle) / oracle
    ok = rel <= 0.05
    criterion(7, ok, f"annulus {e:.4f} vs {oracle:.4f} ({rel:.1%})")
    assert ok


def _nested_pair(rng):
    p = float(rng.choice([1.0, 1.5, 2.0, 3.0]))
    g = Grid((-1.0, -1.0), (1.0, 1.0), (11, 11))
    om = np.zeros(g.shape, dtype=bool)
    om[1:-1, 1:-1] = True
    if rng.random() < 0.5:
        K2 = np.zeros(g.shape, dtype=bool)
        K2[2:-2, 2:-2] = rng.random((7, 7)) < 0.3
        K1 = K2 & (rng.random(g.shape) < 0.5)
        return (g, K1, om, p), (g, K2, om, p)
    small = np.zeros(g.shape, dtype=bool)
    lo, hi = rng.integers(1, 4, 2), rng.integers(8, 11, 2)
    small[lo[0]:hi[0], lo[1]:hi[1]] = True
    K = np.zeros(g.shape, dtype=bool)
    K[4:7, 4:7] = True
    # capacity grows as the domain shrinks: order the pair so the first should be smaller
    return (g, K, om, p), (g, K, small, p)


def test_c7_monotonicity_suite(criterion):
    rng = np.random.default_rng(0)
    violations = []
    for case in range(100):
        lo, hi = _nested_pair(rng)
        e_lo = p_capacity(CondenserProblem(*lo), TIGHT).energy
        e_hi = p_capacity(CondenserProblem(*hi), TIGHT).energy
        if e_lo > e_hi + 1e-8:
            violations.append((case, e_lo - e_hi))
    ok = not violations
    criterion(7, ok, f"monotonicity 100 pairs, {len(violations)} violations")
    assert ok, violations


# --- 8 -------------------------------------------------------------------------


def test_c8_null_set_dichotomy(criterion):
    plane = cap_null_classify(np.array([[0.0, 0.0]]), 1.0, levels=(17, 33, 65, 129))
    line = cap_null_classify(np.array([[0.0]]), 2.0, levels=(17, 33, 65, 129))
    ok = plane.verdict is NullVerdict.NULL and line.verdict is NullVerdict.POSITIVE
    criterion(8, ok, f"point in R^2, p=1: {plane.verdict.value}; point in R^1, p=2: {line.verdict.value}")
    assert ok


# --- 9 -------------------------------------------------------------------------


def _grid(n, m):
    return Grid((-1.0,) * n, (1.0,) * n, (m,) * n)


def test_c9_jensen(criterion):
    rng = np.random.default_rng(1)
    worst = -np.inf
    for fid in ALL_IDS:
        e = corpus.get(fid)
        f = sample(fid, _grid(e.n, {1: 401, 2: 65, 3: 25}[e.n]))
        for _ in range(5):
            x = rng.uniform(-0.4, 0.4, e.n)
            r = rng.uniform(0.2, 0.5)
            c = rng.uniform(-1, 1)
            p = rng.uniform(1, 4)
            q = 1 + rng.uniform() * (p - 1)
            lhs = ball_average(f, x, r, AbsDev(c, q))
            rhs = ball_average(f, x, r, AbsDev(c, p)) ** (q / p)
            worst = max(worst, lhs - rhs)
    ok = worst <= 1e-10
    criterion(9, ok, f"jensen {len(ALL_IDS)} ids")
    assert ok


def test_c9_young_and_kernel_mass(criterion):
    worst = -np.inf
    for fid in ALL_IDS:
        e = corpus.get(fid)
        g = _grid(e.n, {1: 401, 2: 41, 3: 25}[e.n])
        f = sample(fid, g)
        out = mollify(f, 0.4)
        for p in (1.0, 2.0, 4.0):
            lhs = lp_norm(out, p, NodeMask(out.mask))
            rhs = lp_norm(f, p, Box((-1.0,) * e.n, (1.0,) * e.n))
            worst = max(worst, lhs - rhs)
    masses = [make_kernel(_grid(n, m), eps).raw_integral for n, m, eps in ((1, 2001, 0.1), (2, 321, 0.25), (3, 81, 0.5))]
    mass_gap = max(abs(m - 1.0) for m in masses)
    ok = worst <= 1e-8 and mass_gap <= 1e-6
    criterion(9, ok, f"young, kernel mass gap {mass_gap:.1e}")
    assert ok


def test_c9_gradient_refinement(criterion):
    ratios = {}
    for fid in ALL_IDS:
        e = corpus.get(fid)
        # probes stay clear of every kink, which sits at the origin
        probes = np.array([[0.25] * e.n, [-0.5] + [0.125] * (e.n - 1), [0.5] * e.n])
        errs = []
        for m in ((17, 33, 65) if e.n == 3 else (33, 65, 129)):
            g = _grid(e.n, m)
            grad = gradient_fd(sample(fid, g))
            got = np.array([grad.values[g.nearest_index(x)] for x in probes])
            errs.append(float(np.max(np.abs(got - e.gradient(probes)))))
        if errs[1] <= 1e-12:
            ratios[fid] = math.inf  # exact to rounding: low-degree polynomials
        else:
            ratios[fid] = min(errs[0] / errs[1], errs[1] / errs[2])
    worst = min(ratios, key=ratios.get)
    ok = ratios[worst] >= 3.5
    criterion(9, ok, f"gradient refinement >= {ratios[worst]:.2f} ({worst})")
    assert ok, ratios


def test_c9_leibniz(criterion):
    sched = RadiusSchedule(0.02, 0.5, 6)
    two_d = [fid for fid in corpus.ids() if corpus.get(fid).n == 2]
    pairs = sorted(set(combinations(two_d, 2)) | set(corpus.PRODUCT_PAIRS))
    worst, checked = 0.0, 0
    for i, (f_id, g_id) in enumerate(pairs):
        for x in ((0.3, -0.2), (0.0, 0.0), tuple(np.random.default_rng(i).uniform(-0.5, 0.5, 2))):
            src_f, src_g = CorpusSource(f_id, sched.r_min / 4), CorpusSource(g_id, sched.r_min / 4)
            F, G = (s.field(None, center=x, reach=sched.r0) for s in (src_f, src_g))
            dF, dG = (s.gradient(center=x, reach=sched.r0) for s in (src_f, src_g))
            cls = [classify_lp_point(v, x, 1.0, sched) for v in (F, G, dF, dG)]
            if not all(c.is_lp_point for c in cls):
                continue
            fs, gs, dfs, dgs = (c.estimate for c in cls)
            lhs = precise_rep(gradient_fd(F * G), x, sched).estimate
            worst = max(worst, float(np.max(np.abs(lhs - (fs * np.asarray(dgs) + gs * np.asarray(dfs))))))
            checked += 1
    ok = worst <= 1e-6 and checked > len(pairs)
    criterion(9, ok, f"leibniz {checked} cases max {worst:.1e}")
    assert ok


def test_c9_uniqueness_and_density(criterion):
    worst_u, bad_d = 0.0, []
    for fid in ALL_IDS:
        e = corpus.get(fid)
        x = regular_points(e, 1, 2)[0]
        for p in (1.5, 2.0):
            a = lp_approx_differential(fid, x, p).a_fit
            b = lp_approx_differential(fid, x, p, a0=np.full(e.n, 4.0)).a_fit
            worst_u = max(worst_u, float(np.max(np.abs(a - b))))
        fit = lp_approx_differential(fid, x, 1.0)
        for eps in (0.1, 0.01):
            rep = density_test(fid, x, FormalDifferential(x, fit.a_fit), eps)
            if not rep.chebyshev_ok:
                bad_d.append((fid, eps))
    ok = worst_u <= 1e-6 and not bad_d
    criterion(9, ok, f"uniqueness gap {worst_u:.1e} (p in 1.5, 2), chebyshev failures {len(bad_d)}")
    assert ok, bad_d


# --- 10 ------------------------------------------------------------------------


@pytest.mark.parametrize("config", sorted(CONFIGS.glob("*.ini")), ids=lambda p: p.stem)
def test_c10_reruns_are_byte_identical(criterion, tmp_path, config):
    name = load(config).name
    outs = []
    for run, jobs in (("a", "1"), ("b", "2")):
        assert cli.main(["run", str(config), "--out", str(tmp_path / run), "--jobs", jobs]) == 0
        outs.append((tmp_path / run / f"{name}.csv").read_bytes())
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    criterion(10, ok, "" if ok else f"{name} differs")
    assert ok
