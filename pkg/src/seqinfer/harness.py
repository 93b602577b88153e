"""Monte Carlo quantile tables and coverage studies.

Replicate ``i`` of every study draws its trial from stream ``(seed, i)``;
resampling methods draw from streams keyed by ``(i, method)``.  Results are
therefore a pure function of the configuration and seed and do not depend
on how replicates are split across worker processes.
"""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .estimators import METHODS, build_interval, method_variance
from .exceptions import ConfigError, SeqInferError
from .intervals import default_grid
from .pivots import RootKind, SmoothFunctional, normal_quantile, pivot_arrays, sorted_quantile, t_quantile
from .resampling import Parametric, QuantileCurve, RootSimulator, RootSpec, summarize_paths
from .sampling import MAPS, NormalExpMixture, NormalKnownVar, RandomStream, derive_stream_id, draw_many
from .stopping import BOUNDARIES, StoppingRule, stopped_sample

log = logging.getLogger(__name__)

TABLE1_LEVELS = (0.025, 0.05, 0.10, 0.20, 0.50, 0.80, 0.90, 0.95, 0.975)
QUANTILE_STATISTICS = ("R", "R0", "R1", "R1_sigmahat")
CSV_COLUMNS = ("mu", "method", "L_pct", "U_pct", "L_se", "U_se", "mean_length", "mean_T")
FAST_PROFILE = dict(n_sims=2000, B=500, grid_points=61)
# tolerances for the fast profile widen by sqrt(10000 / 2000)
FAST_TOLERANCE_FACTOR = math.sqrt(10_000 / 2_000)


# -- configuration ----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    g: str
    g_params: tuple
    a: float
    n0: int
    n1: int
    map: str = "identity"
    variance: str = "known"
    clamp_early: bool = False

    def rule(self) -> StoppingRule:
        return StoppingRule(BOUNDARIES[self.g](**dict(self.g_params)), self.a, self.n0, self.n1, self.clamp_early)

    @property
    def omap(self):
        return MAPS[self.map]


@dataclass(frozen=True)
class PopulationSpec:
    variant: str
    params: tuple = ()

    def at(self, mu: float):
        p = dict(self.params)
        if self.variant == "normal":
            return NormalKnownVar(mu, p.get("sigma", 1.0))
        return NormalExpMixture(mu, p.get("p_normal", 0.2))


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: Scenario
    population: PopulationSpec
    mu_list: tuple
    methods: tuple = ()
    alpha: float = 0.05
    n_sims: int = 10_000
    B: int = 1000
    B_exact: int = 10_000
    seed: int = 0
    grid_points: int = 161
    exact_lattice: float = 0.005
    levels: tuple = TABLE1_LEVELS
    boot_variance: str = "estimated"

    def method_variance(self, method: str) -> str:
        chosen = self.boot_variance if method.startswith("boot_") else self.scenario.variance
        return method_variance(method, chosen)


_TOP_KEYS = {"scenario", "population", "mu_list", "methods", "alpha", "n_sims", "B", "B_exact",
             "seed", "grid", "exact_lattice", "levels", "profile", "boot_variance"}
_SCENARIO_KEYS = {"g", "a", "n0", "n1", "map", "variance", "clamp_early"}
_G_PARAMS = {"quadratic": set(), "smoothed_abs": {"delta"}, "studentized": set()}
_POP_PARAMS = {"normal": {"sigma"}, "mixture": {"p_normal"}}


def _reject_unknown(d: dict, allowed: set, where: str):
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(sorted(extra))}")


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing field {where}.{key}")
    return d[key]


def parse_config(raw: dict, sweep_ok: bool = False):
    """Validate a JSON config dict.

    Returns an :class:`ExperimentConfig`, or a list of them when
    ``sweep_ok`` and the boundary parameter ``delta`` is a list.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(raw, _TOP_KEYS, "config")
    sc = _need(raw, "scenario", "config")
    if not isinstance(sc, dict):
        raise ConfigError("scenario must be an object")
    _reject_unknown(sc, _SCENARIO_KEYS, "scenario")
    g = _need(sc, "g", "scenario")
    if isinstance(g, str):
        g = {"name": g}
    if not isinstance(g, dict) or g.get("name") not in _G_PARAMS:
        raise ConfigError(f"scenario.g must name one of {sorted(_G_PARAMS)}")
    name = g["name"]
    params = {k: v for k, v in g.items() if k != "name"}
    _reject_unknown(params, _G_PARAMS[name], "scenario.g")
    if name == "smoothed_abs" and "delta" not in params:
        params["delta"] = 0.5
    omap = sc.get("map", "square" if name == "studentized" else "identity")
    if omap not in MAPS:
        raise ConfigError(f"scenario.map must be one of {sorted(MAPS)}")
    variance = sc.get("variance", "estimated" if omap == "square" else "known")
    if variance not in ("known", "estimated"):
        raise ConfigError("scenario.variance must be 'known' or 'estimated'")

    pop = _need(raw, "population", "config")
    if not isinstance(pop, dict):
        raise ConfigError("population must be an object")
    _reject_unknown(pop, {"variant", "params"}, "population")
    variant = _need(pop, "variant", "population")
    if variant not in _POP_PARAMS:
        raise ConfigError(f"population.variant must be one of {sorted(_POP_PARAMS)}")
    pparams = pop.get("params", {}) or {}
    _reject_unknown(pparams, _POP_PARAMS[variant], "population.params")

    grid = raw.get("grid", {}) or {}
    _reject_unknown(grid, {"points"}, "grid")
    methods = tuple(raw.get("methods", ()))
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")

    kw = dict(
        mu_list=tuple(float(m) for m in _need(raw, "mu_list", "config")),
        methods=methods,
        alpha=float(raw.get("alpha", 0.05)),
        n_sims=int(raw.get("n_sims", 10_000)),
        B=int(raw.get("B", 1000)),
        B_exact=int(raw.get("B_exact", 10_000)),
        seed=int(raw.get("seed", 0)),
        grid_points=int(grid.get("points", 161)),
        exact_lattice=float(raw.get("exact_lattice", 0.005)),
        levels=tuple(float(x) for x in raw.get("levels", TABLE1_LEVELS)),
        boot_variance=raw.get("boot_variance", "estimated"),
    )
    profile = raw.get("profile", "full")
    if profile not in ("full", "fast"):
        raise ConfigError("profile must be 'full' or 'fast'")
    if profile == "fast":
        kw.update(FAST_PROFILE)
    pspec = PopulationSpec(variant, tuple(sorted(pparams.items())))

    def build(g_params):
        try:
            sc_obj = Scenario(name, tuple(sorted(g_params.items())), float(_need(sc, "a", "scenario")),
                              int(_need(sc, "n0", "scenario")), int(_need(sc, "n1", "scenario")), omap, variance,
                              bool(sc.get("clamp_early", False)))
            rule = sc_obj.rule()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from exc
        cfg = ExperimentConfig(sc_obj, pspec, **kw)
        validate_config(cfg, rule)
        return cfg

    delta = params.get("delta")
    if isinstance(delta, list):
        if not sweep_ok:
            raise ConfigError("a list of delta values is only accepted by the quantile sweep")
        return [build({**params, "delta": float(d)}) for d in delta]
    return build(params)


def validate_config(cfg: ExperimentConfig, rule: Optional[StoppingRule] = None):
    rule = rule or cfg.scenario.rule()
    if cfg.n_sims < 1:
        raise ConfigError("n_sims must be >= 1")
    if cfg.B < 1 or cfg.B_exact < 1:
        raise ConfigError("B must be >= 1")
    if not 0 < cfg.alpha < 0.5:
        raise ConfigError("alpha must lie in (0, 0.5)")
    if not cfg.mu_list:
        raise ConfigError("mu_list is empty")
    if cfg.grid_points < 3 or cfg.grid_points % 2 == 0:
        raise ConfigError("grid.points must be an odd integer >= 3")
    if cfg.boot_variance not in ("known", "estimated"):
        raise ConfigError("boot_variance must be 'known' or 'estimated'")
    if cfg.boot_variance == "known" and rule.d != 1 and any(m.startswith("boot_") for m in cfg.methods):
        raise ConfigError("boot_variance = 'known' needs a scalar scenario")
    if cfg.scenario.omap.d != rule.d:
        raise ConfigError("scenario.map dimension does not match the boundary function")
    for m in cfg.methods:
        if m in ("normal_R", "hybrid", "exact") and rule.d != 1:
            raise ConfigError(f"method {m} needs a scalar known-variance scenario")
        if m.startswith("t_") and cfg.scenario.variance == "known":
            raise ConfigError(f"method {m} needs scenario.variance = 'estimated'")


def load_config(path, sweep_ok: bool = False):
    from .presets import PRESETS

    p = Path(path)
    if not p.exists() and str(path) in PRESETS:
        raw = copy.deepcopy(PRESETS[str(path)])
    else:
        try:
            raw = json.loads(p.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, sweep_ok=sweep_ok)


# -- trials --------------------------------------------------------------------------


@dataclass
class TrialBatch:
    """Vectorized outcomes of replicates ``start .. start + n - 1`` at one mean."""

    paths: np.ndarray
    T: np.ndarray
    means: np.ndarray
    V: Optional[np.ndarray]

    def sample(self, i: int, omap):
        return stopped_sample(self.paths[i, : self.T[i]], omap)


def simulate_trials(cfg: ExperimentConfig, mu: float, start: int = 0, n: Optional[int] = None,
                    need_cov: bool = False) -> TrialBatch:
    n = cfg.n_sims - start if n is None else n
    rule = cfg.scenario.rule()
    pop = cfg.population.at(mu)
    paths = np.stack([draw_many(pop, RandomStream(cfg.seed, i), rule.n0) for i in range(start, start + n)])
    T, means, V = summarize_paths(rule, cfg.scenario.omap, paths, need_cov)
    return TrialBatch(paths, T, means, V)


# -- coverage -------------------------------------------------------------------------


@dataclass
class CoverageRow:
    mu: float
    method: str
    L_pct: float
    U_pct: float
    L_se: float
    U_se: float
    mean_length: float
    mean_T: float
    failures: int = 0


@dataclass
class CoverageReport:
    rows: list = field(default_factory=list)

    def row(self, mu: float, method: str) -> CoverageRow:
        for r in self.rows:
            if r.method == method and math.isclose(r.mu, mu, abs_tol=1e-12):
                return r
        raise KeyError((mu, method))


def _proportion(misses: np.ndarray):
    n = len(misses)
    p = float(np.mean(misses)) if n else float("nan")
    return 100.0 * p, 100.0 * math.sqrt(p * (1 - p) / n) if n else float("nan")


def summarize_coverage(mu, method, lower, upper, T, failures=0) -> CoverageRow:
    """L misses: lower limit strictly above ``mu``; U misses: upper strictly below."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    L, L_se = _proportion(lower > mu)
    U, U_se = _proportion(upper < mu)
    return CoverageRow(float(mu), method, L, U, L_se, U_se, float(np.mean(upper - lower)),
                       float(np.mean(T)), int(failures))


def closed_form_limits(cfg: ExperimentConfig, batch: TrialBatch, method: str):
    """Vectorized normal and t intervals for a whole batch; NaN marks failures."""
    rule = cfg.scenario.rule()
    h = SmoothFunctional.coordinate(0, rule.d)
    variance = cfg.method_variance(method)
    kind = {"normal_R0": RootKind.R0, "normal_R1": RootKind.R1, "normal_R": RootKind.R_RENORM,
            "t_R0": RootKind.R0, "t_R1": RootKind.R1}[method]
    V = batch.V if variance == "estimated" else None
    p = pivot_arrays(kind, rule, h, batch.T, batch.means, V)
    if method.startswith("t_"):
        z_lo, z_hi = t_quantile(cfg.alpha, batch.T), t_quantile(1 - cfg.alpha, batch.T)
    else:
        z_lo, z_hi = normal_quantile(cfg.alpha), normal_quantile(1 - cfg.alpha)
    ok = (p.scale > 0) & np.isfinite(p.offset)
    with np.errstate(invalid="ignore"):
        lower = np.where(ok, p.invert(z_hi), np.nan)
        upper = np.where(ok, p.invert(z_lo), np.nan)
    return lower, upper


_EXACT_CURVES: dict = {}


def exact_curve(cfg: ExperimentConfig) -> QuantileCurve:
    """Shared lattice quantile curve for the exact method (data independent)."""
    key = (cfg.scenario, cfg.B_exact, cfg.seed, cfg.alpha, cfg.exact_lattice)
    if key not in _EXACT_CURVES:
        rule = cfg.scenario.rule()
        spec = RootSpec(RootKind.R0, rule)
        stream = RandomStream(cfg.seed, derive_stream_id("exact", cfg.B_exact))
        sim = RootSimulator(Parametric.normal(), spec, cfg.B_exact, stream)
        _EXACT_CURVES[key] = QuantileCurve(sim, cfg.alpha, cfg.exact_lattice)
    return _EXACT_CURVES[key]


def _resampling_chunk(cfg: ExperimentConfig, mu: float, method: str, start: int, n: int):
    """Per-replicate intervals for bootstrap, hybrid and exact methods."""
    rule = cfg.scenario.rule()
    omap = cfg.scenario.omap
    batch = simulate_trials(cfg, mu, start, n)
    curve = exact_curve(cfg) if method == "exact" else None
    lower = np.full(n, np.nan)
    upper = np.full(n, np.nan)
    for k in range(n):
        i = start + k
        sample = batch.sample(k, omap)
        stream = RandomStream(cfg.seed, derive_stream_id("inner", i, method))
        grid = None
        if method in ("hybrid", "exact"):
            grid = default_grid(sample, points=cfg.grid_points)
        B = cfg.B_exact if method == "exact" else cfg.B
        try:
            res = build_interval(sample, rule, method, cfg.alpha, cfg.method_variance(method), B, stream, grid,
                                 curve=curve)
        except SeqInferError as exc:
            log.debug("replicate %d failed for %s: %s", i, method, exc)
            continue
        lower[k], upper[k] = res.lower, res.upper
    return lower, upper, batch.T


def _chunks(n: int, jobs: int):
    size = max(1, math.ceil(n / max(jobs, 1)))
    return [(s, min(size, n - s)) for s in range(0, n, size)]


def run_coverage(cfg: ExperimentConfig, jobs: int = 1) -> CoverageReport:
    """Coverage errors of every configured method at every true mean."""
    if not cfg.methods:
        raise ConfigError("no methods configured")
    report = CoverageReport()
    closed = [m for m in cfg.methods if m.startswith(("normal", "t_"))]
    need_cov = any(cfg.method_variance(m) == "estimated" for m in closed)
    for mu in cfg.mu_list:
        batch = simulate_trials(cfg, mu, need_cov=need_cov) if closed else None
        for method in cfg.methods:
            if method in closed:
                lower, upper = closed_form_limits(cfg, batch, method)
                T = batch.T
            else:
                parts = _chunks(cfg.n_sims, jobs)
                if jobs > 1 and len(parts) > 1:
                    with ProcessPoolExecutor(max_workers=jobs) as ex:
                        outs = list(ex.map(_resampling_chunk, *zip(*[(cfg, mu, method, s, n) for s, n in parts])))
                else:
                    outs = [_resampling_chunk(cfg, mu, method, s, n) for s, n in parts]
                lower = np.concatenate([o[0] for o in outs])
                upper = np.concatenate([o[1] for o in outs])
                T = np.concatenate([o[2] for o in outs])
            ok = np.isfinite(lower) & np.isfinite(upper)
            row = summarize_coverage(mu, method, lower[ok], upper[ok], T, failures=int((~ok).sum()))
            log.info("mu=%g %s: L=%.2f%% U=%.2f%%", mu, method, row.L_pct, row.U_pct)
            report.rows.append(row)
    return report


# -- quantile tables ---------------------------------------------------------------------


@dataclass
class QuantileTable:
    levels: tuple
    rows: list = field(default_factory=list)  # (mu, statistic, [quantiles])
    failures: dict = field(default_factory=dict)
    label: str = ""

    def get(self, mu: float, statistic: str) -> np.ndarray:
        for m, s, q in self.rows:
            if s == statistic and math.isclose(m, mu, abs_tol=1e-12):
                return np.asarray(q)
        raise KeyError((mu, statistic))


def quantile_statistics(cfg: ExperimentConfig, batch: TrialBatch, mu: float) -> dict:
    """Known-variance R, R0, R1 and estimated-variance R1 at the true mean."""
    rule = cfg.scenario.rule()
    h = SmoothFunctional.coordinate(0, 1)
    out = {
        "R": pivot_arrays(RootKind.R_RENORM, rule, h, batch.T, batch.means)(mu),
        "R0": pivot_arrays(RootKind.R0, rule, h, batch.T, batch.means)(mu),
        "R1": pivot_arrays(RootKind.R1, rule, h, batch.T, batch.means)(mu),
    }
    p = pivot_arrays(RootKind.R1, rule, h, batch.T, batch.means, batch.V)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = p(mu)
    out["R1_sigmahat"] = np.where((batch.T >= 2) & (p.scale > 0), r, np.nan)
    return out


def run_quantile_table(cfg: ExperimentConfig) -> QuantileTable:
    if cfg.scenario.rule().d != 1 or cfg.scenario.variance != "known":
        raise ConfigError("quantile tables need a scalar known-variance scenario")
    table = QuantileTable(cfg.levels, label=_scenario_label(cfg))
    levels = np.asarray(cfg.levels)
    for mu in cfg.mu_list:
        batch = simulate_trials(cfg, mu, need_cov=True)
        for name, vals in quantile_statistics(cfg, batch, mu).items():
            good = np.sort(vals[np.isfinite(vals)])
            table.failures[(mu, name)] = int(len(vals) - len(good))
            q = sorted_quantile(good, levels) if len(good) else np.full(len(levels), np.nan)
            table.rows.append((float(mu), name, np.atleast_1d(q).tolist()))
    return table


def _scenario_label(cfg: ExperimentConfig) -> str:
    params = ",".join(f"{k}={v}" for k, v in cfg.scenario.g_params)
    return f"{cfg.scenario.g}({params})"


# -- I/O ------------------------------------------------------------------------------


def load_dataset(path) -> list:
    """Scalars from a one-value-per-line file or a one-column CSV headed ``x``."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {path}: {exc}") from exc
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        tok = line.strip()
        if not tok:
            continue
        if lineno == 1 and tok.lower() == "x":
            continue
        try:
            values.append(float(tok))
        except ValueError:
            raise ConfigError(f"{path}: non-numeric value {tok!r} on line {lineno}") from None
    return values


def _fmt(x) -> str:
    return f"{x:.6g}"


def _num6(x) -> float:
    return float(_fmt(x))


def report_records(report: CoverageReport) -> list:
    return [
        {c: (r.method if c == "method" else _num6(getattr(r, c))) for c in CSV_COLUMNS}
        for r in report.rows
    ]


def write_report(report: CoverageReport, path, fmt: str = "csv"):
    """Write a coverage report as CSV (fixed columns) or JSON."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in report.rows:
            w.writerow([r.method if c == "method" else _fmt(getattr(r, c)) for c in CSV_COLUMNS])
        text = buf.getvalue()
    elif fmt == "json":
        failures = [{"mu": _num6(r.mu), "method": r.method, "count": r.failures} for r in report.rows if r.failures]
        text = json.dumps({"rows": report_records(report), "failures": failures}, indent=2) + "\n"
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    Path(path).write_text(text)


def read_report(path) -> CoverageReport:
    """Inverse of :func:`write_report` for either format."""
    text = Path(path).read_text()
    if text.lstrip().startswith("{"):
        data = json.loads(text)
        fails = {(f["mu"], f["method"]): f["count"] for f in data.get("failures", [])}
        rows = [CoverageRow(**rec, failures=fails.get((rec["mu"], rec["method"]), 0)) for rec in data["rows"]]
        return CoverageReport(rows)
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append(CoverageRow(**{c: (rec[c] if c == "method" else float(rec[c])) for c in CSV_COLUMNS}))
    return CoverageReport(rows)


def write_quantile_tables(tables: list, path, fmt: str = "csv"):
    """Quantile tables: one row per (mu, statistic), one column per level."""
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        header = ["scenario", "mu", "statistic"] + [f"q{100 * p:g}" for p in tables[0].levels]
        w.writerow(header)
        for t in tables:
            for mu, stat, q in t.rows:
                w.writerow([t.label, _fmt(mu), stat] + [_fmt(v) for v in q])
        text = buf.getvalue()
    elif fmt == "json":
        text = json.dumps([
            {"scenario": t.label, "levels": list(t.levels),
             "rows": [{"mu": _num6(mu), "statistic": s, "quantiles": [_num6(v) for v in q],
                       "failures": t.failures.get((mu, s), 0)} for mu, s, q in t.rows]}
            for t in tables
        ], indent=2) + "\n"
    else:
        raise ConfigError(f"unknown table format {fmt!r}")
    Path(path).write_text(text)
