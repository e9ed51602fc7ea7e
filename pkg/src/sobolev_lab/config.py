"""Study configuration files: INI-style sections of ``key = value`` lines.

Example::

    [study]
    kind = lp-point
    corpus = abs_1d
    p = 1
    points = 0

    [schedule]
    r0 = 0.1
    ratio = 0.5
    count = 6
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import get
from .errors import DomainError, UnknownFunctionError

KINDS = ("lp-point", "refined-gradient", "capacity", "hausdorff", "diffquot", "approxdiff", "taylor")

# per kind: keys required in [study]
REQUIRED = {
    "lp-point": ("corpus", "p"),
    "refined-gradient": ("corpus", "p"),
    "capacity": ("p",),
    "hausdorff": ("s",),
    "diffquot": ("corpus", "p"),
    "approxdiff": ("corpus", "p"),
    "taylor": ("corpus", "p", "k"),
}

TOLERANCE_KEYS = ("lp_tol", "not_tol", "rep_tol", "conv_tol", "slope_min", "cap_tol", "identity_tol")


class ConfigError(DomainError):
    """The configuration is malformed or incomplete."""


@dataclass
class StudyConfig:
    kind: str
    name: str
    corpus: str | None = None
    p: float | None = None
    k: int = 1
    s: float | None = None
    points: list = field(default_factory=list)
    field_: str = "gradient"
    region: object = None  # U / V for diffquot and taylor, the set E for capacity/hausdorff
    grid: dict = field(default_factory=dict)
    schedule: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    n: int | None = None


def _floats(text: str, what: str) -> list:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected numbers, got {text!r}") from exc


def _float(sec, key, what=None, default=None):
    if key not in sec:
        return default
    try:
        v = float(sec[key])
    except ValueError as exc:
        raise ConfigError(f"{what or key}: expected a number, got {sec[key]!r}") from exc
    if not math.isfinite(v):
        raise ConfigError(f"{what or key}: must be finite")
    return v


def _int(sec, key, default=None):
    if key not in sec:
        return default
    try:
        return int(sec[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {sec[key]!r}") from exc


def parse_points(text: str) -> list:
    """``"0.3,0.4; 0,0"`` -> ``[(0.3, 0.4), (0.0, 0.0)]``."""
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if chunk:
            pts.append(tuple(_floats(chunk, "points")))
    return pts


def _region(text: str, n: int | None):
    """``ball: cx,cy; r`` | ``box: lo...; hi...`` | ``points: x; y; ...`` | ``segment: a; b``."""
    from .grid import Ball, Box

    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    parts = [p.strip() for p in rest.split(";") if p.strip()]
    if kind == "ball" and len(parts) == 2:
        r = _floats(parts[1], "ball radius")
        return Ball(tuple(_floats(parts[0], "ball center")), r[0])
    if kind == "box" and len(parts) == 2:
        return Box(tuple(_floats(parts[0], "box lower")), tuple(_floats(parts[1], "box upper")))
    if kind == "points" and parts:
        return np.array([_floats(p, "points") for p in parts])
    if kind == "segment" and len(parts) == 2:
        from .hausdorff import segment

        return segment(_floats(parts[0], "segment start"), _floats(parts[1], "segment end"))
    raise ConfigError(f"cannot parse region {text!r}")


def _region_dim(region) -> int:
    from .grid import Ball, Box

    if isinstance(region, Ball):
        return len(region.center)
    if isinstance(region, Box):
        return len(region.lower)
    if hasattr(region, "points"):
        return region.points.shape[1]
    return np.atleast_2d(region).shape[1]


def _random_points(count, n, rmin, rmax, seed):
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < count:
        y = rng.uniform(-rmax, rmax, size=n)
        r = float(np.linalg.norm(y))
        if rmin <= r <= rmax:
            pts.append(tuple(float(v) for v in y))
    return pts


def seed() -> int:
    text = os.environ.get("SOBOLEV_LAB_SEED", "0")
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"SOBOLEV_LAB_SEED must be an integer, got {text!r}") from exc


def _geometric(sch, start_key, ratio_key, count_key, label):
    if start_key not in sch:
        return None
    start = _float(sch, start_key)
    ratio = _float(sch, ratio_key, default=0.5)
    count = _int(sch, count_key, default=6)
    if not start > 0:
        raise ConfigError(f"[schedule] {start_key} must be positive")
    if not 0 < ratio < 1:
        raise ConfigError(f"[schedule] {ratio_key} must lie in (0, 1) for the {label} schedule")
    if count < 4:
        raise ConfigError(f"[schedule] {count_key} must be at least 4")
    return (start, ratio, count)


def load(path) -> StudyConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(path.read_text())
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return parse(cp, default_name=path.stem)


def loads(text: str, default_name: str = "study") -> StudyConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    return parse(cp, default_name)


def parse(cp: configparser.ConfigParser, default_name: str = "study") -> StudyConfig:
    if not cp.has_section("study"):
        raise ConfigError("missing [study] section")
    st = cp["study"]
    kind = st.get("kind", "").strip()
    if not kind:
        raise ConfigError("missing required field 'kind' in [study]")
    if kind not in KINDS:
        raise ConfigError(f"unknown study kind {kind!r}; expected one of {', '.join(KINDS)}")
    for key in REQUIRED[kind]:
        if not st.get(key, "").strip():
            raise ConfigError(f"missing required field '{key}' in [study] for kind {kind}")

    cfg = StudyConfig(kind=kind, name=st.get("name", default_name).strip() or default_name)
    if "corpus" in st:
        cfg.corpus = st["corpus"].strip()
        try:
            cfg.n = get(cfg.corpus).n
        except UnknownFunctionError as exc:
            raise ConfigError(str(exc)) from exc
    cfg.p = _float(st, "p")
    if cfg.p is not None and not cfg.p >= 1:
        raise ConfigError("p must be >= 1")
    cfg.k = _int(st, "k", 1)
    if not 1 <= cfg.k <= 3:
        raise ConfigError("k must be 1, 2 or 3")
    cfg.s = _float(st, "s")
    if cfg.s is not None and cfg.s < 0:
        raise ConfigError("s must be >= 0")
    cfg.field_ = st.get("field", "gradient").strip()
    if cfg.field_ not in ("gradient", "value"):
        raise ConfigError("field must be 'gradient' or 'value'")

    for key in ("region", "set"):
        if key in st:
            cfg.region = _region(st[key], cfg.n)
    if cfg.kind in ("capacity", "hausdorff") and cfg.region is None:
        raise ConfigError(f"missing required field 'set' in [study] for kind {kind}")
    if cfg.region is not None and cfg.n is None:
        cfg.n = _region_dim(cfg.region)

    if "points" in st:
        cfg.points = parse_points(st["points"])
    if "random_points" in st:
        count = _int(st, "random_points")
        lo, hi = _floats(st.get("random_radius", "0.4, 0.9"), "random_radius")
        if cfg.n is None:
            raise ConfigError("random_points needs a corpus entry to fix the dimension")
        cfg.points += _random_points(count, cfg.n, lo, hi, seed())
    if cfg.kind not in ("capacity", "hausdorff"):
        if not cfg.points:
            raise ConfigError(f"missing required field 'points' in [study] for kind {kind}")
        for x in cfg.points:
            if len(x) != cfg.n:
                raise ConfigError(f"point {x} has dimension {len(x)}, corpus entry {cfg.corpus} has {cfg.n}")

    for key in st:
        if key not in ("kind", "name", "corpus", "p", "k", "s", "points", "field", "region", "set",
                       "random_points", "random_radius"):
            cfg.extra[key] = st[key]

    if cp.has_section("grid"):
        g = cp["grid"]
        cfg.grid = {"mode": g.get("mode", "patch").strip()}
        if cfg.grid["mode"] not in ("patch", "global"):
            raise ConfigError("[grid] mode must be 'patch' or 'global'")
        if "spacing" in g:
            cfg.grid["spacing"] = _float(g, "spacing")
            if not cfg.grid["spacing"] > 0:
                raise ConfigError("[grid] spacing must be positive")
        if cfg.grid["mode"] == "global":
            for key in ("lower", "upper", "nodes"):
                if key not in g:
                    raise ConfigError(f"missing required field '{key}' in [grid] for global mode")
            cfg.grid["lower"] = _floats(g["lower"], "lower")
            cfg.grid["upper"] = _floats(g["upper"], "upper")
            cfg.grid["nodes"] = [int(v) for v in _floats(g["nodes"], "nodes")]
    sch = cp["schedule"] if cp.has_section("schedule") else {}
    cfg.schedule = {
        "radius": _geometric(sch, "r0", "ratio", "count", "radius"),
        "t": _geometric(sch, "t0", "t_ratio", "t_count", "t"),
        "h": _geometric(sch, "h0", "h_ratio", "h_count", "h"),
    }
    if "levels" in sch:
        levels = [int(v) for v in _floats(sch["levels"], "levels")]
        if len(levels) < 2 or any(b <= a for a, b in zip(levels, levels[1:])):
            raise ConfigError("[schedule] levels must be increasing node counts (at least two)")
        cfg.schedule["levels"] = levels
    if "delta" in sch:
        cfg.schedule["delta"] = _float(sch, "delta")
        cfg.schedule["delta_levels"] = _int(sch, "delta_levels", 4)
    if cp.has_section("tolerances"):
        tol = cp["tolerances"]
        for key in tol:
            if key not in TOLERANCE_KEYS:
                raise ConfigError(f"unknown tolerance {key!r}")
            cfg.tolerances[key] = _float(tol, key)
    for sec in cp.sections():
        if sec not in ("study", "grid", "schedule", "tolerances"):
            raise ConfigError(f"unknown section [{sec}]")
    return cfg
