"""Benchmark plumbing: tasks and manifests, synthetic datasets, run
configuration, the benchmark runner and the expected-samples table."""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import jsonschema
import numpy as np
import yaml

from .analytics import (
    ambiguity_corrected_rate,
    count_table,
    exact_str,
    expected_samples_cfg,
    expected_samples_pcfg,
    expected_success_rate,
    reconstruction_ratio,
)
from .chart import target_probability
from .discovery import DiscoveryConfig, mc_gbed, resample_success_curve, run_report
from .expr import ExpressionError, evaluate, parameters, parse_expression, variables
from .fitting import Dataset, DatasetError, FitConfig
from .grammar import BUILTIN_GRAMMARS, GrammarError, Pcfg, builtin_grammar, load_grammar

REPORT_SCHEMA_VERSION = 1
DEFAULT_RANGE = (1.0, 5.0)
TARGET_COLUMN = "f"
MAX_OVERSAMPLING = 100


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BenchmarkTask:
    id: str
    expression: str
    variables: Mapping[str, tuple[float, float]]
    n_rows: int = 100
    data_seed: int = 0
    target: str = TARGET_COLUMN

    def __post_init__(self):
        if self.n_rows < 1:
            raise ValueError(f"task {self.id}: n_rows must be positive")
        for name, (lo, hi) in self.variables.items():
            if not lo < hi:
                raise ValueError(f"task {self.id}: degenerate range for {name}")
        if self.target in self.variables:
            raise ValueError(f"task {self.id}: target name {self.target!r} clashes with a variable")

    @property
    def variable_names(self) -> list[str]:
        return list(self.variables)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "BenchmarkTask":
        raw = d.get("variables")
        if raw is None:
            names = sorted(variables(parse_expression(d["expression"])))
            raw = {n: DEFAULT_RANGE for n in names}
        elif isinstance(raw, (list, tuple)):
            raw = {n: DEFAULT_RANGE for n in raw}
        ranges = {k: (float(v[0]), float(v[1])) for k, v in raw.items()}
        return cls(
            str(d["id"]),
            str(d["expression"]),
            ranges,
            int(d.get("n_rows", 100)),
            int(d.get("data_seed", 0)),
            str(d.get("target", TARGET_COLUMN)),
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "expression": self.expression,
            "variables": {k: list(v) for k, v in self.variables.items()},
            "n_rows": self.n_rows,
            "data_seed": self.data_seed,
            "target": self.target,
        }


def load_manifest(source: str | Path) -> list[BenchmarkTask]:
    """Load a manifest by bundled name (``easy``, ``main``, ``extended``) or path."""
    path = Path(source)
    if path.suffix == "" and not path.exists():
        text = resources.files("pcfg_discovery").joinpath("data", f"{source}.json").read_text()
    else:
        text = path.read_text()
    doc = json.loads(text) if text.lstrip().startswith("{") or path.suffix == ".json" else yaml.safe_load(text)
    tasks = [BenchmarkTask.from_dict(t) for t in doc["tasks"]]
    ids = [t.id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate task ids in manifest")
    return tasks


def generate_dataset(task: BenchmarkTask) -> Dataset:
    """Noise-free data: uniform draws per variable, target evaluated per row.

    Rows with a non-finite target are rejected and redrawn; the task is
    declared infeasible after ``100 * n_rows`` draws.
    """
    expr = parse_expression(task.expression)
    if parameters(expr):
        raise DatasetError(f"task {task.id}: target contains a free constant 'c'")
    missing = variables(expr) - set(task.variables)
    if missing:
        raise DatasetError(f"task {task.id}: no range for {', '.join(sorted(missing))}")
    rng = np.random.default_rng(task.data_seed)
    names = task.variable_names
    lo = np.array([task.variables[n][0] for n in names])
    hi = np.array([task.variables[n][1] for n in names])
    kept: list[np.ndarray] = []
    have = 0
    drawn = 0
    budget = MAX_OVERSAMPLING * task.n_rows
    while have < task.n_rows:
        if drawn >= budget:
            raise DatasetError(f"task {task.id}: domain-infeasible (fewer than {task.n_rows} finite rows in {budget} draws)")
        batch = min(task.n_rows - have, budget - drawn)
        x = lo + rng.random((batch, len(names))) * (hi - lo)
        drawn += batch
        y = np.broadcast_to(evaluate(expr, {n: x[:, i] for i, n in enumerate(names)}), (batch,))
        ok = np.isfinite(y)
        if ok.any():
            kept.append(np.column_stack([x[ok], y[ok]]))
            have += int(ok.sum())
    rows = np.vstack(kept)[: task.n_rows]
    return Dataset(tuple(names) + (task.target,), rows, task.target)


def read_dataset(path: str | Path, target: str) -> Dataset:
    """CSV with a header row of variable names."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetError(f"{path}:{lineno}: expected {len(header)} fields")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return Dataset(tuple(h.strip() for h in header), np.array(rows, dtype=float).reshape(-1, len(header)), target)


def write_dataset(d: Dataset, path: str | Path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(d.names)
        for row in d.rows:
            w.writerow([repr(float(v)) for v in row])


# -- configuration -------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; see :data:`CONFIG_KEYS` for the file schema."""

    grammar: str = "uniform_universal"
    n_samples: int = 5000
    runs: int = 3
    seed: int = 0
    max_parameters: int = 5
    success_threshold: float = 1e-9
    max_expansions: int = 1000
    stop_on_success: bool = False
    population_factor: int = 10
    mutation_factor: float = 0.6
    crossover_rate: float = 0.9
    max_generations: int = 1000
    bounds_low: float = -10.0
    bounds_high: float = 10.0
    stagnation_window: int = 100
    target_error: float = 1e-12
    fit_seed: int = 0
    jobs: int = 1
    resample_repeats: int = 20
    curve_points: int = 25
    linear_p: float = 0.5

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        try:
            self.fit_config()
            self.discovery_config(0)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def fit_config(self) -> FitConfig:
        return FitConfig(
            population_factor=self.population_factor,
            mutation_factor=self.mutation_factor,
            crossover_rate=self.crossover_rate,
            max_generations=self.max_generations,
            bounds=(self.bounds_low, self.bounds_high),
            stagnation_window=self.stagnation_window,
            target_error=self.target_error,
            seed=self.fit_seed,
        )

    def discovery_config(self, run: int, n_samples: int | None = None) -> DiscoveryConfig:
        return DiscoveryConfig(
            n_samples=self.n_samples if n_samples is None else n_samples,
            seed=self.seed + run,
            max_parameters=self.max_parameters,
            success_threshold=self.success_threshold,
            max_expansions=self.max_expansions,
            fit=self.fit_config(),
            stop_on_success=self.stop_on_success,
        )

    def grammar_for(self, variable_names: Sequence[str]) -> Pcfg:
        if self.grammar in BUILTIN_GRAMMARS or self.grammar in ("uniform", "biased", "extended"):
            return builtin_grammar(self.grammar, variable_names, self.linear_p)
        return load_grammar(self.grammar)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


CONFIG_KEYS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
ENV_PREFIX = "PCFG_"


def _coerce(key: str, value):
    default = getattr(RunConfig, key)
    if isinstance(default, bool):
        if isinstance(value, bool):
            return value
        s = str(value).strip().lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        return type(default)(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot convert {value!r}") from None


def load_run_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Merge file values, then ``PCFG_*`` environment variables, then explicit overrides."""
    values: dict[str, Any] = {}
    if path is not None:
        doc = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: expected a flat key/value mapping")
        for k, v in doc.items():
            if k not in CONFIG_KEYS:
                raise ConfigError(f"{path}: unknown key {k!r}")
            if isinstance(v, (dict, list)):
                raise ConfigError(f"{path}: value of {k!r} must be a scalar")
            values[k] = _coerce(k, v)
    env = os.environ if env is None else env
    for k in CONFIG_KEYS:
        name = ENV_PREFIX + k.upper()
        if name in env:
            values[k] = _coerce(k, env[name])
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k not in CONFIG_KEYS:
            raise ConfigError(f"unknown setting {k!r}")
        values[k] = _coerce(k, v)
    return RunConfig(**values)


# -- benchmark --------------------------------------------------------------------


def log_grid(low_exp: float, high_exp: float, points: int) -> list[float]:
    """Log-spaced sample sizes, rounded to integers and deduplicated."""
    raw = np.logspace(low_exp, high_exp, max(points, 2))
    out = sorted({int(round(v)) for v in raw})
    return [v for v in out if v >= 1]


def _safe_target_probability(g: Pcfg, text: str):
    try:
        return target_probability(g, text)
    except (ValueError, GrammarError):
        return None


def _run_task(args) -> tuple[list[dict], dict, list[tuple[float, bool]] | None]:
    task, cfg = args
    rows: list[dict] = []
    try:
        data = generate_dataset(task)
        g = cfg.grammar_for(task.variable_names)
    except (ValueError, GrammarError, ExpressionError) as exc:
        for run in range(cfg.runs):
            rows.append({"task": task.id, "run": run, "seed": cfg.seed + run, "error": str(exc)})
        return rows, {"task": task.id, "error": str(exc)}, None
    parsed = _safe_target_probability(g, task.expression)
    p_u = _safe_target_probability(builtin_grammar("uniform_universal", task.variable_names), task.expression)
    p_b = _safe_target_probability(builtin_grammar("biased_universal", task.variable_names), task.expression)
    summary = {
        "task": task.id,
        "expression": task.expression,
        "p_tilde": parsed[0] if parsed else None,
        "height": parsed[1] if parsed else None,
        "p_tilde_uniform": p_u[0] if p_u else None,
        "height_uniform": p_u[1] if p_u else None,
        "p_tilde_biased": p_b[0] if p_b else None,
        "height_biased": p_b[1] if p_b else None,
    }
    successes = 0
    ratios = []
    resample_input = None
    cache: dict = {}
    for run in range(cfg.runs):
        try:
            result = mc_gbed(g, data, cfg.discovery_config(run), cache)
        except ValueError as exc:
            rows.append({"task": task.id, "run": run, "seed": cfg.seed + run, "error": str(exc)})
            continue
        row = run_report(result, task.id, run, summary["p_tilde"])
        row["seed"] = cfg.seed + run
        rows.append(row)
        successes += row["success"]
        if result.n_raw_samples:
            ratios.append(result.uniqueness_ratio)
        if run == 0:
            resample_input = [
                (c.generation_probability, c.error < cfg.success_threshold) for c in result.candidates
            ]
    summary["successes"] = successes
    summary["uniqueness_ratio"] = float(np.mean(ratios)) if ratios else None
    return rows, summary, resample_input


def run_benchmark(
    manifest: Sequence[BenchmarkTask],
    cfg: RunConfig,
    progress: Callable[[str], None] | None = None,
) -> dict:
    """Run discovery ``cfg.runs`` times per task and assemble the report.

    Per-task failures become rows with an ``error`` field.  The report is a
    pure function of (manifest, cfg).
    """
    if not manifest:
        raise ValueError("empty manifest")
    jobs = [(t, cfg) for t in manifest]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            outputs = list(ex.map(_run_task, jobs))
    else:
        outputs = []
        for job in jobs:
            if progress:
                progress(job[0].id)
            outputs.append(_run_task(job))
    rows = [r for out in outputs for r in out[0]]
    summaries = [out[1] for out in outputs]
    rows.sort(key=lambda r: (r["task"], r["run"]))
    summaries.sort(key=lambda s: s["task"])

    probs = [s["p_tilde"] for s in summaries if s.get("p_tilde")]
    ratios = [s["uniqueness_ratio"] for s in summaries if s.get("uniqueness_ratio")]
    global_ratio = float(np.mean(ratios)) if ratios else None
    grid = log_grid(0, math.log10(max(cfg.n_samples, 10)), cfg.curve_points)
    curves: dict[str, Any] = {"n": grid}
    if probs:
        expected = [expected_samples_pcfg(p) for p in probs]
        curves["ratio"] = [reconstruction_ratio(expected, n) for n in grid]
        curves["success_theory"] = [expected_success_rate(probs, n) for n in grid]
        if global_ratio:
            curves["success_corrected"] = [ambiguity_corrected_rate(probs, n, min(global_ratio, 1.0)) for n in grid]
    sets = [out[2] for out in outputs if out[2]]
    if sets:
        curve = resample_success_curve(sets, cfg.resample_repeats, cfg.seed)
        curves["success_resampled"] = [float(curve[min(n, len(curve)) - 1]) for n in grid]
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config": cfg.to_dict(),
        "tasks": summaries,
        "rows": rows,
        "uniqueness_ratio": global_ratio,
        "curves": curves,
    }


def emit_expected_vs_samples(
    manifest: Sequence[BenchmarkTask],
    grammars: Mapping[str, str] | None = None,
    curve_points: int = 40,
) -> dict:
    """Per task: parsed probabilities and heights under two PCFGs, expected
    samples for each, the deterministic-enumeration count and the reduction
    factor ``E_U / E_B``; plus ratio(n) curves over a log-spaced grid."""
    grammars = dict(grammars or {"uniform": "uniform_universal", "biased": "biased_universal"})
    if set(grammars) != {"uniform", "biased"}:
        raise ValueError("grammars must name 'uniform' and 'biased'")
    rows = []
    log_e = {"uniform": [], "biased": [], "cfg": []}
    for task in manifest:
        row: dict[str, Any] = {"task": task.id, "expression": task.expression}
        try:
            per = {}
            for label, name in grammars.items():
                g = builtin_grammar(name, task.variable_names) if name in BUILTIN_GRAMMARS else load_grammar(name)
                p, h = target_probability(g, task.expression)
                per[label] = (g, p, h)
            g_u, p_u, h_u = per["uniform"]
            _, p_b, h_b = per["biased"]
            e_u, e_b = expected_samples_pcfg(p_u), expected_samples_pcfg(p_b)
            e_cfg = expected_samples_cfg(g_u, h_u, count_table(g_u, h_u))
            row.update(
                {
                    "p_uniform": p_u,
                    "p_biased": p_b,
                    "height_uniform": h_u,
                    "height_biased": h_b,
                    "E_uniform": e_u,
                    "E_biased": e_b,
                    "E_cfg": exact_str(e_cfg.value),
                    "E_cfg_log10": e_cfg.log10,
                    "reduction": e_u / e_b,
                }
            )
            log_e["uniform"].append(math.log10(e_u))
            log_e["biased"].append(math.log10(e_b))
            log_e["cfg"].append(e_cfg.log10)
        except (ValueError, GrammarError) as exc:
            row["error"] = str(exc)
        rows.append(row)
    top = max((v for vs in log_e.values() for v in vs), default=1.0)
    grid = [float(v) for v in np.linspace(0.0, math.ceil(max(top, 1.0)), curve_points)]
    curves = {"log10_n": grid}
    for label, values in log_e.items():
        if values:
            curves[f"ratio_{label}"] = [reconstruction_ratio(values, n) for n in grid]
    ok = [r for r in rows if "error" not in r]
    fraction = sum(r["E_biased"] < r["E_uniform"] for r in ok) / len(ok) if ok else math.nan
    return {"rows": rows, "curves": curves, "fraction_biased_better": fraction}


# -- output helpers ------------------------------------------------------------------


def to_json(doc) -> str:
    return json.dumps(_clean(doc), indent=2, sort_keys=True) + "\n"


def _clean(v):
    if isinstance(v, float):
        return v if math.isfinite(v) else None
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def to_csv(records: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None) -> str:
    if columns is None:
        columns = []
        for r in records:
            for k in r:
                if k not in columns:
                    columns.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: _csv_cell(r.get(k)) for k in columns})
    return buf.getvalue()


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    if isinstance(v, (list, dict)):
        return json.dumps(_clean(v), sort_keys=True)
    return v


def to_jsonl(records: Sequence[Mapping[str, Any]]) -> str:
    return "".join(json.dumps(_clean(r), sort_keys=True) + "\n" for r in records)


def curve_records(curves: Mapping[str, Sequence], x: str) -> list[dict]:
    """Column-oriented curves to row records keyed by ``x``."""
    n = len(curves[x])
    return [{k: curves[k][i] for k in curves if len(curves[k]) == n} for i in range(n)]


def validate_report(report: Mapping) -> None:
    """Check a benchmark report against the bundled JSON schema."""
    schema = json.loads(resources.files("pcfg_discovery").joinpath("data", "report.schema.json").read_text())
    jsonschema.validate(json.loads(to_json(report)), schema)


__all__ = [
    "BenchmarkTask",
    "CONFIG_KEYS",
    "ConfigError",
    "RunConfig",
    "curve_records",
    "emit_expected_vs_samples",
    "generate_dataset",
    "load_manifest",
    "load_run_config",
    "log_grid",
    "read_dataset",
    "run_benchmark",
    "to_csv",
    "to_json",
    "to_jsonl",
    "validate_report",
    "write_dataset",
]
