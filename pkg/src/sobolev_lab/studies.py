"""Run a :class:`StudyConfig` and turn the result into CSV rows and summary lines."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .capacity import CapacityOptions, cap_null_classify
from .config import StudyConfig
from .corpus import get
from .differentiability import (
    default_schedule as diff_schedule,
    diffquot_study,
    lp_approx_differential,
)
from .grid import Ball, Grid, sample
from .hausdorff import frostman_consistency, hausdorff_upper
from .representative import RadiusSchedule, classify_lp_point, classify_refined_gradient
from .sources import CorpusSource, GridSource
from .taylor import default_schedule as taylor_schedule, remainder_study


@dataclass
class StudyResult:
    header: list
    rows: list
    summary: list = field(default_factory=list)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _short(v) -> str:
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    body = ", ".join(format(float(a), ".6g") for a in arr)
    return body if arr.size == 1 else f"({body})"


def _point_cols(n):
    return [f"x{i}" for i in range(n)]


def _radius_schedule(cfg: StudyConfig, default: RadiusSchedule) -> RadiusSchedule:
    spec = cfg.schedule.get("radius")
    return RadiusSchedule(*spec) if spec else default


def _source(cfg: StudyConfig, patch_spacing=None):
    entry = get(cfg.corpus)
    if cfg.grid.get("mode") == "global":
        grid = Grid(tuple(cfg.grid["lower"]), tuple(cfg.grid["upper"]), tuple(cfg.grid["nodes"]))
        return GridSource(sample(entry.evaluate, grid))
    return CorpusSource(entry, cfg.grid.get("spacing", patch_spacing))


def _lp_default(n):
    if n == 1:
        return RadiusSchedule(0.1, 0.5, 6)
    if n == 2:
        return RadiusSchedule(0.02, 0.5, 7)
    return RadiusSchedule(0.01, 0.5, 4)


def _lp_spacing(n, sched):
    # 1D lattices are cheap: resolve the node sitting on the point to < 1e-3 of the ball
    return sched.r_min / (1024.0 if n == 1 else 4.0)


def _tols(cfg, *keys):
    return {k: cfg.tolerances[k] for k in keys if k in cfg.tolerances}


def run_lp_point(cfg: StudyConfig, jobs=None) -> StudyResult:
    n = cfg.n
    sched = _radius_schedule(cfg, _lp_default(n))
    src = _source(cfg, _lp_spacing(n, sched))
    tol = _tols(cfg, "lp_tol", "not_tol", "rep_tol")

    def one(x):
        hint = _lp_spacing(n, sched)
        if cfg.field_ == "gradient":
            values = src.gradient(center=x, reach=sched.r0, spacing=hint)
        else:
            values = src.field(None, center=x, reach=sched.r0, spacing=hint)
        return classify_lp_point(values, x, cfg.p, sched, **tol)

    results = pmap(one, cfg.points, jobs)
    m = n if cfg.field_ == "gradient" else 1
    header = ["point", *_point_cols(n), "r", "deviation", *[f"average{i}" for i in range(m)]]
    rows, summary = [], []
    for i, (x, c) in enumerate(zip(cfg.points, results)):
        for r, d, a in zip(c.radii, c.deviations, c.averages):
            rows.append([i, *x, r, d, *np.atleast_1d(a)])
        summary.append(
            f"point {i} {_short(x)}: verdict={c.verdict.value} estimate={_short(c.estimate)} "
            f"converged={_fmt(c.converged)} slope={c.slope:.6g}"
        )
    return StudyResult(header, rows, summary)


def run_refined_gradient(cfg: StudyConfig, jobs=None) -> StudyResult:
    n = cfg.n
    sched = _radius_schedule(cfg, _lp_default(n))
    src = _source(cfg, _lp_spacing(n, sched))
    tol = _tols(cfg, "lp_tol", "not_tol", "rep_tol")
    full = cfg.extra.get("full", "false").strip().lower() in ("1", "true", "yes")
    rep = classify_refined_gradient(src, cfg.p, cfg.points, cfg.k, sched, full=full, jobs=jobs, **tol)
    header = ["point", *_point_cols(n), "alpha", "r", "deviation"]
    rows = []
    for i, x in enumerate(rep.points):
        for alpha in rep.alphas:
            c = rep.table[i][alpha]
            tag = "".join(str(a) for a in alpha)
            for r, d in zip(c.radii, c.deviations):
                rows.append([i, *x, tag, r, d])
    summary = []
    for i, x in enumerate(rep.points):
        verdicts = " ".join(f"{''.join(map(str, a))}={rep.table[i][a].verdict.value}" for a in rep.alphas)
        summary.append(f"point {i} {_short(x)}: {verdicts} estimate={_short(rep.estimates(i))}")
    exc = rep.exceptional
    summary.append(f"exceptional points: {len(exc)} of {len(rep.points)}")
    for i in exc:
        summary.append(f"  exceptional {i} {_short(rep.points[i])}")
    summary.append(f"fail fraction: {rep.fail_fraction:.6g}")
    return StudyResult(header, rows, summary)


def _cap_opts(cfg):
    opts = CapacityOptions()
    if "cap_tol" in cfg.tolerances:
        opts.tol = cfg.tolerances["cap_tol"]
    if "method" in cfg.extra:
        opts.method = cfg.extra["method"].strip()
    return opts


def _box(cfg):
    if "box" in cfg.extra:
        lo, hi = (float(v) for v in cfg.extra["box"].replace(",", " ").split())
        return (lo, hi)
    return (-1.0, 1.0)


def run_capacity(cfg: StudyConfig, jobs=None) -> StudyResult:
    levels = cfg.schedule.get("levels", [17, 33, 65, 129])
    res = cap_null_classify(cfg.region, cfg.p, levels, box=_box(cfg), opts=_cap_opts(cfg))
    header = ["level", "nodes", "h", "energy", "k_volume", "iterations", "pg_norm"]
    rows = [
        [j, levels[j], h, e, v, est.iterations, est.pg_norm]
        for j, (h, e, v, est) in enumerate(zip(res.spacings, res.energies, res.k_volumes, res.estimates))
    ]
    summary = [f"verdict={res.verdict.value}", f"slope={res.slope:.6g}"]
    return StudyResult(header, rows, summary)


def run_hausdorff(cfg: StudyConfig, jobs=None) -> StudyResult:
    delta = cfg.schedule.get("delta", 0.5)
    levels = cfg.schedule.get("delta_levels", 4)
    est = hausdorff_upper(cfg.region, cfg.s, delta, levels)
    header = ["delta", "value"]
    rows = [[d, v] for d, v in est.history]
    summary = [f"s={cfg.s:.6g}", f"value={est.value:.6g}", f"cover_sets={len(est.boxes)}"]
    if "frostman_p" in cfg.extra:
        p = float(cfg.extra["frostman_p"])
        rep = frostman_consistency(cfg.region, p, cfg.n, delta, levels,
                                   cfg.schedule.get("levels", (17, 33, 65, 129)), _cap_opts(cfg))
        summary += [
            f"frostman p={p:.6g}: hausdorff={rep.hausdorff.verdict.value} capacity={rep.capacity_verdict.value}",
            f"frostman assertion_made={_fmt(rep.assertion_made)} consistent={_fmt(rep.consistent)}",
        ]
    return StudyResult(header, rows, summary)


def _unit_ball(n):
    return Ball(tuple([0.0] * n), 1.0)


def run_diffquot(cfg: StudyConfig, jobs=None) -> StudyResult:
    n = cfg.n
    src = _source(cfg)
    sched = _radius_schedule(cfg, diff_schedule(src))
    t0, ratio, count = cfg.schedule.get("t") or (0.05, 0.5, 6)
    ts = [t0 * ratio**j for j in range(count)]
    U = cfg.region or _unit_ball(n)
    tol = _tols(cfg, "conv_tol", "slope_min")
    reports = pmap(lambda x: diffquot_study(src, x, cfg.p, U, ts, sched, **tol), cfg.points, jobs)
    header = ["point", *_point_cols(n), "t", "error", "value_part", "gradient_part"]
    rows, summary = [], []
    for i, (x, rep) in enumerate(zip(cfg.points, reports)):
        for t, e, v, g in zip(rep.params, rep.errors, rep.columns["value_part"], rep.columns["gradient_part"]):
            rows.append([i, *x, t, e, v, g])
        summary.append(f"point {i} {_short(x)}: verdict={rep.verdict.value} slope={rep.slope:.6g} "
                       f"a={_short(rep.notes['a'])}")
    return StudyResult(header, rows, summary)


def run_approxdiff(cfg: StudyConfig, jobs=None) -> StudyResult:
    n = cfg.n
    src = _source(cfg)
    sched = _radius_schedule(cfg, diff_schedule(src))
    tol = _tols(cfg, "rep_tol", "conv_tol", "slope_min", "identity_tol")
    results = pmap(lambda x: lp_approx_differential(src, x, cfg.p, sched, **tol), cfg.points, jobs)
    header = ["point", *_point_cols(n), "r", "residual", *[f"a{i}" for i in range(n)]]
    rows, summary = [], []
    for i, (x, (a_fit, rep)) in enumerate(zip(cfg.points, results)):
        for j, (r, e) in enumerate(zip(rep.params, rep.errors)):
            rows.append([i, *x, r, e, *[rep.columns[f"a{c}"][j] for c in range(n)]])
        line = f"point {i} {_short(x)}: verdict={rep.verdict.value} slope={rep.slope:.6g} a_fit={_short(a_fit)}"
        if "identity_gap" in rep.notes:
            line += f" identity_gap={rep.notes['identity_gap']:.6g} identity_ok={_fmt(rep.notes['identity_ok'])}"
        summary.append(line)
    return StudyResult(header, rows, summary)


def run_taylor(cfg: StudyConfig, jobs=None) -> StudyResult:
    n = cfg.n
    src = _source(cfg)
    sched = _radius_schedule(cfg, taylor_schedule(n, cfg.k))
    h0, ratio, count = cfg.schedule.get("h") or (0.02, 0.5, 6)
    hs = [h0 * ratio**j for j in range(count)]
    V = cfg.region or _unit_ball(n)
    norm = cfg.extra.get("norm", "full").strip()
    tol = _tols(cfg, "conv_tol", "slope_min")
    reports = pmap(lambda x: remainder_study(src, x, cfg.k, cfg.p, V, hs, sched, norm=norm, **tol), cfg.points, jobs)
    header = ["point", *_point_cols(n), "h", "error", "rounding_floor"]
    rows, summary = [], []
    for i, (x, rep) in enumerate(zip(cfg.points, reports)):
        for h, e, fl in zip(rep.params, rep.errors, rep.columns["rounding_floor"]):
            rows.append([i, *x, h, e, fl])
        summary.append(f"point {i} {_short(x)}: verdict={rep.verdict.value} slope={rep.slope:.6g}")
    return StudyResult(header, rows, summary)


RUNNERS = {
    "lp-point": run_lp_point,
    "refined-gradient": run_refined_gradient,
    "capacity": run_capacity,
    "hausdorff": run_hausdorff,
    "diffquot": run_diffquot,
    "approxdiff": run_approxdiff,
    "taylor": run_taylor,
}


def run(cfg: StudyConfig, jobs=None) -> StudyResult:
    result = RUNNERS[cfg.kind](cfg, jobs)
    head = [f"study: {cfg.name}", f"kind: {cfg.kind}"]
    if cfg.corpus:
        head.append(f"corpus: {cfg.corpus}")
    if cfg.p is not None:
        head.append(f"p: {cfg.p:g}")
    if cfg.kind in ("refined-gradient", "taylor"):
        head.append(f"k: {cfg.k}")
    result.summary = head + result.summary
    return result


def write_csv(result: StudyResult, fh):
    fh.write(",".join(result.header) + "\n")
    for row in result.rows:
        fh.write(",".join(_fmt(v) for v in row) + "\n")
