"""``lab``: scenario-driven experiment runner.

A run config is a TOML file::

    scenario = "bloch"
    engine = "free"          # ed | free | auto
    L = [30]
    d = [5, 10, 15]
    seed = 0

    [params]
    beta = [2.0]
    mu = [0.0]
    b = [0.9424777960769379]

    [model]
    preset = "hofstadter"

    [options]
    r_max = 25

Each grid point ``(L, beta, mu, b)`` is evaluated independently (optionally
in a process pool); results are merged in grid order and written as
``report.json``, ``points.csv`` and ``plot_<name>.csv`` files.  Floats are
written with 17 significant digits so reruns are byte identical.

Regression baselines hold named scalar series with tolerances.  They are only
written with ``--update-baselines``; otherwise an existing baseline is
compared and any drift makes the run fail.
"""
from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import logging
import math
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from . import currents as cur
from .fock import SectorCapError, ThermoParams
from .geometry import random_connected_region
from .model import ModelError, strip_edge_terms
from .modelio import model_from_dict
from .thermo import (
    EngineMismatch,
    bulk_pressure_comparison,
    edge_independence_gap,
    engine_comparison,
    format_float,
    gibbs_state,
    indistinguishability_curve,
    magnetization,
    mu_derivative_report,
    resolve_engine,
)

log = logging.getLogger("bulkedge.lab")

SCENARIOS = {
    "continuity": "continuity equation i[H, N_z] = J_1^z - J_1^{z-e1} + J_2^z - J_2^{z-e2}",
    "conservation": "current conservation: net current out of any region vanishes",
    "bloch": "decay of equilibrium bulk currents away from the boundary",
    "magnetization_gap": "magnetization as derivative of the pressure, as <dH/db> and as a current sum; "
                         "comparison with the edge current",
    "edge_independence": "edge current does not depend on edge terms",
    "mu_derivative": "chemical-potential derivatives as beta Cov(N, A) and by finite differences",
    "indistinguishability": "local indistinguishability of the Gibbs state",
    "bulk_pressure": "pressure with edge terms against the pressure of the bulk system",
    "engine_equivalence": "exact diagonalization against the free-fermion engine",
}

DEFAULT_OPTIONS = {
    "continuity": {"tol": 1e-12},
    "conservation": {"tol": 1e-9, "regions": 100, "max_region": 200},
    "bloch": {"r_max": 25, "ratio": [15, 5], "ratio_threshold": None},
    "magnetization_gap": {"fd_step": 1e-5, "fd_steps": [0.05, 0.025], "identity_tol": 1e-9,
                          "fd_tol": 1e-6, "ratio_band": [3.5, 4.5], "band": 0.35},
    "edge_independence": {},
    "mu_derivative": {"fd_step": 1e-4, "rel_tol": 1e-5, "floor": 1e-12},
    "indistinguishability": {"center": None, "radii": None, "observables": ["density", "current"],
                             "digits": 40},
    "bulk_pressure": {"exact_tol": 1e-10},
    "engine_equivalence": {"tol": 1e-10},
}

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
REPORT_SCHEMA = 1


class ConfigError(ValueError):
    """Invalid run config; the message names the field (and line when known)."""


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*(\[\s*{re.escape(key)}\s*\]|{re.escape(key)}\s*=)", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(text: str, key: str, msg: str):
    line = _line_of(text, key.split(".")[-1])
    where = f"{key} (line {line})" if line else key
    raise ConfigError(f"{where}: {msg}")


@dataclass
class ScenarioConfig:
    scenario: str
    model: dict
    beta: list
    mu: list
    b: list
    L: list
    d: list = field(default_factory=list)
    engine: str = "auto"
    out: str = "lab-out"
    seed: int = 0
    options: dict = field(default_factory=dict)
    baseline: dict = field(default_factory=dict)
    source: str | None = None

    def points(self) -> list[dict]:
        Ls = self.L or [None]
        return [{"L": L, "beta": beta, "mu": mu, "b": b}
                for L, beta, mu, b in itertools.product(Ls, self.beta, self.mu, self.b)]

    def canonical(self) -> dict:
        """Everything that determines the numbers; output location excluded."""
        return {"scenario": self.scenario, "model": self.model, "beta": self.beta, "mu": self.mu,
                "b": self.b, "L": self.L, "d": self.d, "engine": self.engine, "seed": self.seed,
                "options": self.options}

    def config_hash(self) -> str:
        blob = json.dumps(_jsonable(self.canonical()), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def baseline_path(self) -> Path:
        if "path" in self.baseline:
            p = Path(self.baseline["path"])
            if not p.is_absolute() and self.source:
                p = Path(self.source).parent / p
            return p
        if self.source:
            src = Path(self.source)
            return src.with_name(src.stem + ".baseline.json")
        return Path(self.out) / "baseline.json"


def _number_list(text, raw, key, kind=float, positive=False, prefix=""):
    if key not in raw:
        return None
    vals = raw[key]
    key = prefix + key
    if not isinstance(vals, list):
        vals = [vals]
    if not vals:
        _fail(text, key, "grid must not be empty")
    try:
        vals = [kind(v) for v in vals]
    except (TypeError, ValueError):
        _fail(text, key, f"expected a list of {kind.__name__} values")
    if positive and any(v <= 0 for v in vals):
        _fail(text, key, "values must be positive")
    return vals


def parse_config(text: str, source: str | None = None) -> ScenarioConfig:
    """Parse and validate a run config given as TOML text."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax: {exc}") from exc
    known = {"scenario", "engine", "out", "seed", "L", "d", "params", "model", "options", "baseline"}
    for k in raw:
        if k not in known:
            _fail(text, k, f"unknown field; expected one of {sorted(known)}")
    scenario = raw.get("scenario")
    if scenario not in SCENARIOS:
        _fail(text, "scenario", f"must be one of {sorted(SCENARIOS)}, got {scenario!r}")
    if "model" not in raw or not isinstance(raw["model"], dict):
        _fail(text, "model", "a [model] table is required")
    model = dict(raw["model"])
    params = raw.get("params", {})
    for k in params:
        if k not in ("beta", "mu", "b"):
            _fail(text, f"params.{k}", "unknown parameter; expected beta, mu or b")
    beta = _number_list(text, params, "beta", positive=True, prefix="params.")
    if beta is None:
        _fail(text, "params.beta", "at least one inverse temperature is required")
    mu = _number_list(text, params, "mu", prefix="params.") or [0.0]
    b = _number_list(text, params, "b", prefix="params.") or [float(model.get("b", 0.0))]
    L = _number_list(text, raw, "L", int) or []
    if L and any(v < 0 for v in L):
        _fail(text, "L", "box sizes must be nonnegative")
    if not L and "preset" in model:
        if "L" not in model:
            _fail(text, "L", "preset models need a box size list")
        L = [int(model["L"])]
    if L and "preset" not in model:
        _fail(text, "L", "an L grid only applies to preset models")
    d = _number_list(text, raw, "d", int) or []
    engine = raw.get("engine", "auto")
    if engine not in ("ed", "free", "auto"):
        _fail(text, "engine", f"must be ed, free or auto, got {engine!r}")
    opts = dict(DEFAULT_OPTIONS[scenario])
    for k, v in raw.get("options", {}).items():
        if k not in opts:
            _fail(text, f"options.{k}", f"unknown option for scenario {scenario}; "
                                        f"expected one of {sorted(opts)}")
        opts[k] = v
    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        _fail(text, "seed", "must be an integer")
    cfg = ScenarioConfig(scenario, model, beta, mu, b, L, d, engine, str(raw.get("out", "lab-out")),
                         seed, opts, dict(raw.get("baseline", {})), source)
    try:
        build_spec(cfg, cfg.points()[0])
    except ModelError as exc:
        _fail(text, "model", str(exc))
    except TypeError as exc:
        _fail(text, "model", f"bad preset arguments ({exc})")
    return cfg


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    return parse_config(path.read_text(), str(path))


def build_spec(cfg: ScenarioConfig, point: dict):
    model = dict(cfg.model)
    if "preset" in model:
        model["L"] = point["L"]
    model["b"] = point["b"]
    return model_from_dict(model)


# ---------------------------------------------------------------- scenarios

def _check(name, passed, value=None, bound=None) -> dict:
    return {"name": name, "passed": bool(passed), "value": value, "bound": bound}


def _point_continuity(cfg, spec, params, engine, rng):
    tol = float(cfg.options["tol"])
    res = cur.continuity_residuals(spec)
    worst = max(res.values())
    rows = [(list(z), v) for z, v in sorted(res.items())]
    return {"values": {"max_residual": worst},
            "checks": [_check("continuity residual", worst <= tol, worst, tol)],
            "tables": {"residuals": (["z1", "z2", "residual"], [(z[0], z[1], v) for z, v in rows])}}


def _point_conservation(cfg, spec, params, engine, rng):
    tol = float(cfg.options["tol"])
    fld = cur.current_field(spec, gibbs_state(spec, params, engine))
    fam = {}
    for label, _, Z in cur.conservation_families(spec.box_size()):
        fam[label] = max(fam.get(label, 0.0), abs(cur.conservation_sum(fld, Z)))
    n = int(cfg.options["regions"])
    top = min(int(cfg.options["max_region"]), len(spec.region))
    sizes = []
    worst_random = 0.0
    for _ in range(n):
        size = int(rng.integers(1, top + 1))
        Z = random_connected_region(spec.region, size, rng)
        sizes.append(size)
        worst_random = max(worst_random, abs(cur.conservation_sum(fld, Z)))
    values = {f"family_{k}": v for k, v in fam.items()}
    values["random_regions"] = worst_random
    checks = [_check(f"conservation family {k}", v <= tol, v, tol) for k, v in fam.items()]
    checks.append(_check(f"conservation on {n} random connected regions", worst_random <= tol,
                         worst_random, tol))
    return {"values": values, "checks": checks,
            "tables": {"region_sizes": (["index", "size"], list(enumerate(sizes)))}}


def _strictly_decreasing(vals) -> tuple[bool, int | None]:
    for k in range(1, len(vals)):
        if not vals[k] < vals[k - 1]:
            return False, k
    return True, None


def _point_bloch(cfg, spec, params, engine, rng):
    o = cfg.options
    fld = cur.current_field(spec, gibbs_state(spec, params, engine))
    prof = cur.bloch_profile(fld)
    lo, hi = spec.R + spec.D + 1, int(o["r_max"])
    window = [prof.value(r) for r in range(lo, hi + 1)]
    ok, where = _strictly_decreasing(window)
    checks = [_check(f"shell maxima strictly decreasing on [{lo}, {hi}]", ok,
                     None if ok else lo + where, None)]
    r_hi, r_lo = o["ratio"]
    ratio = prof.value(r_hi) / prof.value(r_lo)
    if o["ratio_threshold"] is not None:
        checks.append(_check(f"shellmax({r_hi})/shellmax({r_lo})", ratio < float(o["ratio_threshold"]),
                             ratio, float(o["ratio_threshold"])))
    values = {"ratio": ratio, "slope": prof.slope}
    return {"values": values, "checks": checks,
            "series": {"shellmax": [float(v) for v in prof.shellmax]},
            "tables": {"decay": (["r", "shellmax"], prof.as_rows())}}


def _point_magnetization(cfg, spec, params, engine, rng):
    o = cfg.options
    steps = [float(h) for h in o["fd_steps"]]
    state = gibbs_state(spec, params, engine)
    fld = cur.current_field(spec, state)
    rep = magnetization(spec, params, engine, float(o["fd_step"]), cfg.d, steps, state, fld)
    L = rep.L
    checks = [
        _check("<dH/db> equals the row-weighted current sum", rep.identity_gap <= o["identity_tol"],
               rep.identity_gap, o["identity_tol"]),
        _check(f"finite difference at step {o['fd_step']:g}", rep.fd_gap <= o["fd_tol"],
               rep.fd_gap, o["fd_tol"]),
    ]
    errors = [abs(m - rep.m_duhamel) for _, m in rep.fd_table[1:]]
    lo, hi = o["ratio_band"]
    for (h1, h2), (e1, e2) in zip(zip(steps, steps[1:]), zip(errors, errors[1:])):
        ratio = e1 / e2 if e2 else math.inf
        checks.append(_check(f"error reduction {h1:g} -> {h2:g}", lo <= ratio <= hi, ratio, [lo, hi]))
    prof = cur.bloch_profile(fld)
    for d in cfg.d:
        diff = abs(rep.edge_currents[d] - rep.edge_currents[L])
        tail = prof.tail(d)
        checks.append(_check(f"|I^{d} - I^L| below the shell tail from {d}", diff <= tail, diff, tail))
    values = {"m_fd": rep.m_fd, "m_duhamel": rep.m_duhamel, "m_current_sum": rep.m_current_sum,
              "I_L": rep.edge_currents[L], "scaled_gap": rep.edge_gap * (2 * L + 1),
              "scaled_sum": rep.edge_sum * (2 * L + 1)}
    for d in cfg.d:
        values[f"I_{d}"] = rep.edge_currents[d]
    table = [(h, m, abs(m - rep.m_duhamel)) for h, m in rep.fd_table]
    return {"values": values, "checks": checks,
            "tables": {"fd_steps": (["step", "m_fd", "error"], table)}}


def _band(values, width):
    mean = float(np.mean(values))
    dev = max(abs(v - mean) for v in values) / abs(mean) if mean else math.inf
    return dev <= width, dev


def _final_magnetization(cfg, points):
    if len(points) < 2:
        return [], {}
    Ls = [p["L"] for p in points]
    gaps = [p["values"]["scaled_gap"] for p in points]
    sums = [p["values"]["scaled_sum"] for p in points]
    width = float(cfg.options["band"])
    ok, dev = _band(gaps, width)
    checks = [_check(f"(m_L - I_L)(2L+1) within +-{width:.0%} band", ok, dev, width)]
    _, dev_sum = _band(sums, width)
    tables = {"gap_vs_L": (["L", "m_minus_I_scaled", "m_plus_I_scaled", "band_deviation_sum"],
                           [(L, g, s, dev_sum) for L, g, s in zip(Ls, gaps, sums)])}
    return checks, tables


def _point_edge_independence(cfg, spec, params, engine, rng):
    other = strip_edge_terms(spec)
    L = spec.box_size()
    checks, values = [], {}
    fields = [cur.current_field(s, gibbs_state(s, params, engine)) for s in (spec, other)]
    for d in cfg.d or [L // 2]:
        e = edge_independence_gap(spec, other, params, d, L, engine, fields)
        checks.append(_check(f"|I^{d}_A - I^{d}_B| below the measured bound", e.gap <= e.bound,
                             e.gap, e.bound))
        values[f"gap_{d}"] = e.gap
        values[f"bound_{d}"] = e.bound
    return {"values": values, "checks": checks}


def _point_mu_derivative(cfg, spec, params, engine, rng):
    o = cfg.options
    rep = mu_derivative_report(spec, params, engine, float(o["fd_step"]), cfg.d)
    dis = rep.max_relative_disagreement(float(o["floor"]))
    checks = [_check("beta Cov(N, A) against central differences in mu", dis <= o["rel_tol"],
                     dis, o["rel_tol"])]
    values = {"dm_cov": rep.dm_cov, "dm_fd": rep.dm_fd, "dI_cov": rep.dI_cov[rep.L],
              "dI_fd": rep.dI_fd[rep.L], "gap": rep.gap,
              "sum": abs(rep.dm_cov + rep.dI_cov[rep.L]), "dp_fd": rep.dp_fd, "density": rep.density}
    return {"values": values, "checks": checks}


def _final_mu_derivative(cfg, points):
    if len(points) < 2:
        return [], {}
    gaps = [p["values"]["gap"] for p in points]
    ok, where = _strictly_decreasing(gaps)
    checks = [_check("|d_mu m_L - d_mu I_L| decreasing in L", ok, where, None)]
    tables = {"mu_gap_vs_L": (["L", "gap", "sum"],
                              [(p["L"], p["values"]["gap"], p["values"]["sum"]) for p in points])}
    return checks, tables


def _point_indistinguishability(cfg, spec, params, engine, rng):
    o = cfg.options
    L = spec.box_size()
    center = o["center"] or ([0, L] if L is not None else list(spec.region.members[len(spec.region) // 2]))
    radii = o["radii"] or list(range(0, 2 * (L or 4)))
    digits = int(o["digits"]) or None
    checks, tables, series = [], {}, {}
    for obs in o["observables"]:
        rows = indistinguishability_curve(spec, params, center, radii, obs, digits)
        rows = [g for g in rows if math.isfinite(g.dist_to_rest)]
        gaps = [g.gap for g in rows]
        ok, where = _strictly_decreasing(gaps)
        checks.append(_check(f"{obs} gap strictly decreasing in buffer distance", ok,
                             None if ok else rows[where].dist_to_rest, None))
        series[f"{obs}_gap"] = gaps
        tables[f"{obs}_gap"] = (["buffer", "sites", "gap"],
                                [(g.dist_to_rest, len(g.sub), g.gap) for g in rows])
    return {"values": {}, "checks": checks, "series": series, "tables": tables}


def _point_bulk_pressure(cfg, spec, params, engine, rng):
    c = bulk_pressure_comparison(spec, spec.box_size(), params, engine)
    if spec.edge_hopping or spec.edge_interaction:
        check = _check("pressure gap below C_edge D/(2L+1)", c.gap <= c.bound, c.gap, c.bound)
    else:
        tol = float(cfg.options["exact_tol"])
        check = _check("pressure equals the bulk pressure without edge terms", c.gap <= tol, c.gap, tol)
    return {"values": {"p_edge": c.p_edge, "p_bulk": c.p_bulk, "gap": c.gap, "bound": c.bound},
            "checks": [check]}


def _point_engine_equivalence(cfg, spec, params, engine, rng):
    tol = float(cfg.options["tol"])
    diff = engine_comparison(spec, params)
    checks = [_check(f"engines agree on {k}", v <= tol, v, tol) for k, v in diff.items()]
    return {"values": diff, "checks": checks}


POINT = {
    "continuity": _point_continuity,
    "conservation": _point_conservation,
    "bloch": _point_bloch,
    "magnetization_gap": _point_magnetization,
    "edge_independence": _point_edge_independence,
    "mu_derivative": _point_mu_derivative,
    "indistinguishability": _point_indistinguishability,
    "bulk_pressure": _point_bulk_pressure,
    "engine_equivalence": _point_engine_equivalence,
}
FINAL = {"magnetization_gap": _final_magnetization, "mu_derivative": _final_mu_derivative}


def run_point(cfg: ScenarioConfig, index: int, point: dict) -> dict:
    """Evaluate one grid point; the seed stream depends on the point index only."""
    spec = build_spec(cfg, point)
    engine = resolve_engine(spec, cfg.engine)
    if cfg.scenario == "engine_equivalence":
        engine = "free"
    params = ThermoParams(point["beta"], point["mu"])
    rng = np.random.default_rng([cfg.seed, index])
    out = POINT[cfg.scenario](cfg, spec, params, engine, rng)
    out.setdefault("series", {})
    out.setdefault("tables", {})
    return {**point, "engine": engine, **out}


# ---------------------------------------------------------------- output

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _fmt_scalar(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Infinity" if v > 0 else "-Infinity"
        return format_float(v)
    if v is None:
        return "null"
    return json.dumps(str(v))


def dumps_json(obj, indent: int = 0) -> str:
    """JSON with sorted keys and 17-significant-digit floats."""
    obj = _jsonable(obj)
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {dumps_json(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_fmt_scalar(v) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps_json(v, indent + 1) for v in obj) + "\n" + pad + "]"
    return _fmt_scalar(obj)


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt_scalar(_jsonable(v)) for v in row))
    return "\n".join(lines) + "\n"


def build_report(cfg: ScenarioConfig, points: list[dict]) -> dict:
    checks = []
    series: dict = {}
    for p in points:
        for c in p["checks"]:
            checks.append({**c, "point": {k: p[k] for k in ("L", "beta", "mu", "b")}})
        for k, v in p["values"].items():
            series.setdefault(k, []).append(v)
        for k, v in p["series"].items():
            tag = f"L={p['L']},beta={p['beta']:g},mu={p['mu']:g},b={p['b']:.17g}"
            series[f"{k}[{tag}]"] = list(v)
    final_checks, final_tables = FINAL.get(cfg.scenario, lambda c, p: ([], {}))(cfg, points)
    checks.extend({**c, "point": None} for c in final_checks)
    return {
        "header": {
            "schema": REPORT_SCHEMA,
            "scenario": cfg.scenario,
            "exercises": SCENARIOS[cfg.scenario],
            "config_hash": cfg.config_hash(),
            "seed": cfg.seed,
            "engine": cfg.engine,
            "version": __version__,
        },
        "config": cfg.canonical(),
        "points": [{k: p[k] for k in ("L", "beta", "mu", "b", "engine", "values")} for p in points],
        "checks": checks,
        "series": series,
        "passed": all(c["passed"] for c in checks),
        "_tables": final_tables,
    }


def write_outputs(report: dict, points: list[dict], out: Path) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    tables = report.pop("_tables")
    path = out / "report.json"
    path.write_text(dumps_json(report) + "\n")
    written.append(path)
    keys = sorted({k for p in points for k in p["values"]})
    rows = [[p["L"], p["beta"], p["mu"], p["b"]] + [p["values"].get(k) for k in keys] for p in points]
    path = out / "points.csv"
    path.write_text(_csv(["L", "beta", "mu", "b"] + keys, rows))
    written.append(path)
    for idx, p in enumerate(points):
        for name, (header, trows) in sorted(p["tables"].items()):
            path = out / f"plot_{name}_{idx:03d}.csv"
            path.write_text(_csv(header, trows))
            written.append(path)
    for name, (header, trows) in sorted(tables.items()):
        path = out / f"plot_{name}.csv"
        path.write_text(_csv(header, trows))
        written.append(path)
    return written


# ---------------------------------------------------------------- baselines

@dataclass
class RegressionBaseline:
    scenario: str
    config_hash: str
    series: dict

    @classmethod
    def from_report(cls, report: dict, rtol: float = 1e-8, atol: float = 1e-12,
                    overrides: dict | None = None) -> "RegressionBaseline":
        overrides = overrides or {}
        series = {}
        for name, vals in report["series"].items():
            base = name.split("[")[0]
            tol = overrides.get(base, {})
            series[name] = {"values": list(vals), "rtol": float(tol.get("rtol", rtol)),
                            "atol": float(tol.get("atol", atol))}
        return cls(report["header"]["scenario"], report["header"]["config_hash"], series)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "config_hash": self.config_hash, "series": self.series}

    @classmethod
    def load(cls, path) -> "RegressionBaseline":
        d = json.loads(Path(path).read_text())
        return cls(d["scenario"], d["config_hash"], d["series"])

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(dumps_json(self.to_dict()) + "\n")


@dataclass
class Comparison:
    hash_mismatch: bool
    drifts: list
    expected_hash: str = ""
    got_hash: str = ""

    @property
    def passed(self) -> bool:
        return not self.hash_mismatch and not self.drifts

    def describe(self) -> list[str]:
        if self.hash_mismatch:
            return [f"config drift: baseline hash {self.expected_hash[:12]} "
                    f"!= report hash {self.got_hash[:12]}"]
        return [f"value drift: series {s} index {i}: expected {format_float(e)}, got {g}"
                for s, i, e, g in self.drifts]


def _close(a, b, rtol, atol) -> bool:
    if a is None or b is None:
        return a is b
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return abs(a - b) <= atol + rtol * abs(a)


def compare_baseline(report: dict, baseline: RegressionBaseline) -> Comparison:
    """Per-series check of a report against a pinned baseline."""
    got_hash = report["header"]["config_hash"]
    if got_hash != baseline.config_hash:
        return Comparison(True, [], baseline.config_hash, got_hash)
    drifts = []
    for name, entry in sorted(baseline.series.items()):
        vals = report["series"].get(name)
        if vals is None:
            drifts.append((name, "-", math.nan, "missing"))
            continue
        expected = entry["values"]
        if len(vals) != len(expected):
            drifts.append((name, "length", float(len(expected)), str(len(vals))))
            continue
        for i, (e, g) in enumerate(zip(expected, vals)):
            if not _close(e, g, entry["rtol"], entry["atol"]):
                drifts.append((name, i, e, _fmt_scalar(g)))
    return Comparison(False, drifts, baseline.config_hash, got_hash)


# ---------------------------------------------------------------- driver

def execute(cfg: ScenarioConfig, jobs: int = 1) -> tuple[dict, list[dict]]:
    pts = cfg.points()
    if jobs > 1 and len(pts) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_point, cfg, i, p) for i, p in enumerate(pts)]
            results = [f.result() for f in futures]
    else:
        results = [run_point(cfg, i, p) for i, p in enumerate(pts)]
    return build_report(cfg, results), results


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"lab: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.engine:
        cfg.engine = args.engine
    if args.seed is not None:
        cfg.seed = args.seed
    out = Path(args.out or cfg.out)
    try:
        report, points = execute(cfg, max(1, args.jobs))
    except SectorCapError as exc:
        print(f"lab: infeasible exact diagonalization: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EngineMismatch as exc:
        print(f"lab: engine mismatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_outputs(report, points, out)
    for c in report["checks"]:
        tag = "PASS" if c["passed"] else "FAIL"
        where = "" if c["point"] is None else (
            f" [L={c['point']['L']} beta={c['point']['beta']:g} mu={c['point']['mu']:g} b={c['point']['b']:g}]")
        print(f"{tag} {c['name']}{where}: value={_fmt_scalar(_jsonable(c['value']))}")
    status = EXIT_OK if report["passed"] else EXIT_FAIL
    bpath = cfg.baseline_path()
    if args.update_baselines:
        RegressionBaseline.from_report(report, float(cfg.baseline.get("rtol", 1e-8)),
                                       float(cfg.baseline.get("atol", 1e-12)),
                                       cfg.baseline.get("tolerances")).save(bpath)
        print(f"baseline written: {bpath}")
    elif bpath.exists():
        cmp = compare_baseline(report, RegressionBaseline.load(bpath))
        for line in cmp.describe():
            print(line)
        print(f"baseline {bpath}: {'PASS' if cmp.passed else 'FAIL'}")
        if not cmp.passed:
            status = EXIT_FAIL
    print(f"report: {out / 'report.json'} ({'PASS' if status == EXIT_OK else 'FAIL'})")
    return status


def cmd_compare(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text())
        baseline = RegressionBaseline.load(args.baseline)
    except (OSError, ValueError, KeyError) as exc:
        print(f"lab: cannot read input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    cmp = compare_baseline(report, baseline)
    for line in cmp.describe():
        print(line)
    print("PASS" if cmp.passed else "FAIL")
    return EXIT_OK if cmp.passed else EXIT_FAIL


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lab", description="Run bulk/edge current experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario config")
    r.add_argument("config")
    r.add_argument("--engine", choices=["ed", "free", "auto"])
    r.add_argument("--out")
    r.add_argument("--update-baselines", action="store_true")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("compare", help="compare a report with a baseline")
    c.add_argument("report")
    c.add_argument("baseline")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
