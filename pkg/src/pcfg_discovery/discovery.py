"""Monte-Carlo equation discovery: sample, canonicalize, deduplicate, fit, rank."""
from __future__ import annotations

import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .expr import FUNCTION_NAMES, CanonicalForm, Expr, canonicalize, parameters, tree_to_expression
from .fitting import Dataset, FitConfig, FitResult, fit_parameters
from .grammar import CONSTANT, Pcfg
from .sampler import DEFAULT_MAX_EXPANSIONS, sample_many

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class DiscoveryError(ValueError):
    """Grammar and dataset are incompatible."""


@dataclass(frozen=True)
class DiscoveryConfig:
    n_samples: int = 10_000
    seed: int = 0
    max_parameters: int = 5
    success_threshold: float = 1e-9
    max_expansions: int = DEFAULT_MAX_EXPANSIONS
    fit: FitConfig = field(default_factory=FitConfig)
    n_jobs: int = 1
    # stop fitting once a candidate beats the threshold; `success` is unchanged
    stop_on_success: bool = False

    def __post_init__(self):
        if self.n_samples < 0:
            raise ValueError("n_samples must be nonnegative")
        if self.max_parameters < 0 or self.success_threshold < 0:
            raise ValueError("thresholds must be nonnegative")


@dataclass
class CandidateEquation:
    key: str
    expression: Expr
    n_parameters: int
    params: list[float]
    error: float
    generation_probability: float
    sample_multiplicity: int
    fitted: bool = True

    @property
    def admissible(self) -> bool:
        return self.fitted and math.isfinite(self.error)


@dataclass
class CandidatePool:
    """Distinct canonical forms from one sampling run, before fitting."""

    forms: dict[str, CanonicalForm]
    probability: dict[str, float]
    multiplicity: dict[str, int]
    n_raw_samples: int
    n_discarded: int
    coverage_achieved: float
    n_distinct_trees: int
    max_height: int

    @property
    def n_unique(self) -> int:
        return len(self.forms)

    def keys_by_probability(self) -> list[str]:
        return sorted(self.forms, key=lambda k: (-self.probability[k], k))


@dataclass
class DiscoveryResult:
    candidates: list[CandidateEquation]
    n_raw_samples: int
    n_unique: int
    coverage_achieved: float
    n_discarded: int
    success: bool
    wall_time: float = 0.0

    @property
    def best(self) -> CandidateEquation | None:
        return self.candidates[0] if self.candidates else None

    @property
    def uniqueness_ratio(self) -> float:
        return self.n_unique / self.n_raw_samples if self.n_raw_samples else math.nan


def grammar_variables(g: Pcfg) -> set[str]:
    """Identifier terminals other than function names and the constant."""
    return {t for t in g.terminals if _IDENT.match(t) and t not in FUNCTION_NAMES and t != CONSTANT}


def collect_candidates(
    g: Pcfg,
    n_samples: int,
    seed: int,
    max_expansions: int = DEFAULT_MAX_EXPANSIONS,
    n_jobs: int = 1,
) -> CandidatePool:
    """Sample ``n_samples`` trees and group them by canonical form.

    Coverage sums tree probabilities over distinct trees (rule sequences), the
    generation probability of a key sums over its distinct trees.
    """
    outcomes, discarded = sample_many(g, n_samples, seed, max_expansions, n_jobs)
    forms: dict[str, CanonicalForm] = {}
    probability: dict[str, float] = {}
    multiplicity: dict[str, int] = {}
    by_tree: dict[tuple[int, ...], str] = {}
    tree_mass: list[float] = []
    max_height = 0
    for o in outcomes:
        key = by_tree.get(o.derivation)
        if key is None:
            form = _canonical(o.tree, g)
            key = form.key
            by_tree[o.derivation] = key
            forms.setdefault(key, form)
            probability[key] = probability.get(key, 0.0) + o.probability
            tree_mass.append(o.probability)
            max_height = max(max_height, o.height)
        multiplicity[key] = multiplicity.get(key, 0) + 1
    return CandidatePool(
        forms,
        probability,
        multiplicity,
        len(outcomes),
        discarded,
        math.fsum(tree_mass),
        len(by_tree),
        max_height,
    )


def _canonical(tree, g: Pcfg) -> CanonicalForm:
    expr = tree_to_expression(tree, g)
    try:
        return canonicalize(expr)
    except RecursionError:
        # pathologically deep expressions keep their raw form as identity
        return CanonicalForm(expr, expr.key, len(parameters(expr)))


def _check_compatible(g: Pcfg, d: Dataset):
    if d.target in g.terminals:
        raise DiscoveryError(f"grammar terminal {d.target!r} names the target variable")
    unknown = grammar_variables(g) - set(d.features)
    if unknown:
        raise DiscoveryError(f"grammar variables not in dataset: {', '.join(sorted(unknown))}")


def _fit_one(args) -> FitResult:
    form, d, fit_cfg = args
    return fit_parameters(form, d, fit_cfg)


def mc_gbed(
    g: Pcfg,
    d: Dataset,
    cfg: DiscoveryConfig | None = None,
    fit_cache: dict[str, FitResult] | None = None,
) -> DiscoveryResult:
    """Sample candidate equations from ``g`` and rank them by fit to ``d``.

    Each canonical form is fitted once.  Forms with more than
    ``max_parameters`` constants are kept with error ``inf``.  Candidates are
    sorted by (error, -generation probability, key).  ``fit_cache`` may be
    shared between runs on the same dataset and fit configuration.
    """
    cfg = cfg or DiscoveryConfig()
    _check_compatible(g, d)
    t0 = time.perf_counter()
    pool = collect_candidates(g, cfg.n_samples, cfg.seed, cfg.max_expansions, cfg.n_jobs)
    cache = {} if fit_cache is None else fit_cache
    order = pool.keys_by_probability()
    todo = [k for k in order if pool.forms[k].n_parameters <= cfg.max_parameters and k not in cache]
    found = any(
        k in cache and cache[k].error < cfg.success_threshold
        for k in order
        if pool.forms[k].n_parameters <= cfg.max_parameters
    )
    if cfg.n_jobs > 1 and len(todo) > 1 and not cfg.stop_on_success:
        with ProcessPoolExecutor(cfg.n_jobs) as ex:
            jobs = [(pool.forms[k], d, cfg.fit) for k in todo]
            for k, res in zip(todo, ex.map(_fit_one, jobs, chunksize=16)):
                cache[k] = res
    else:
        for k in todo:
            if cfg.stop_on_success and found:
                break
            cache[k] = fit_parameters(pool.forms[k], d, cfg.fit)
            found = found or cache[k].error < cfg.success_threshold

    candidates = []
    for k in order:
        form = pool.forms[k]
        res = cache.get(k) if form.n_parameters <= cfg.max_parameters else None
        if res is None:
            params, err, fitted = [], math.inf, False
        else:
            params, err, fitted = res.params, res.error, True
        candidates.append(
            CandidateEquation(k, form.expr, form.n_parameters, list(params), err, pool.probability[k], pool.multiplicity[k], fitted)
        )
    candidates.sort(key=lambda c: (c.error if not math.isnan(c.error) else math.inf, -c.generation_probability, c.key))
    success = any(c.error < cfg.success_threshold for c in candidates)
    return DiscoveryResult(
        candidates,
        pool.n_raw_samples,
        pool.n_unique,
        pool.coverage_achieved,
        pool.n_discarded,
        success,
        time.perf_counter() - t0,
    )


def resample_success_curve(
    tasks: Sequence[Sequence[tuple[float, bool]]],
    repeats: int,
    seed: int,
    max_size: int | None = None,
) -> np.ndarray:
    """Average success indicator after the first ``n`` unique candidates.

    Each task is a list of ``(probability, successful)`` pairs.  Every repeat
    draws a probability-weighted permutation of each task (sequential
    weighted sampling without replacement, via exponential keys) and records
    the position of the first success.  Entry ``n - 1`` of the result is the
    mean success over tasks and repeats for prefix size ``n``.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if not tasks:
        raise ValueError("no tasks")
    longest = max((len(t) for t in tasks), default=0)
    size = longest if max_size is None else max_size
    hits = np.zeros(size + 1)
    rng = np.random.default_rng(seed)
    for task in tasks:
        if not task:
            continue
        w = np.array([p for p, _ in task], dtype=float)
        ok = np.array([s for _, s in task], dtype=bool)
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ValueError("candidate probabilities must be positive")
        if not ok.any():
            continue
        keys = rng.exponential(size=(repeats, len(task))) / w
        order = np.argsort(keys, axis=1, kind="stable")
        first = np.argmax(ok[order], axis=1) + 1  # prefix size of the first success
        np.add.at(hits, first[first <= size], 1)
    curve = np.cumsum(hits)[1:] / (repeats * len(tasks))
    return curve


def success_ratio(tasks: Iterable[Sequence[tuple[float, bool]]]) -> float:
    tasks = list(tasks)
    return sum(any(s for _, s in t) for t in tasks) / len(tasks)


def _json_number(v: float):
    return v if math.isfinite(v) else None


def run_report(
    result: DiscoveryResult,
    task_id: str = "",
    run: int = 0,
    p_tilde: float | None = None,
    include_time: bool = False,
    top: int = 5,
) -> dict:
    """One report row: parsed probability, success, unique count (also in thousands), coverage."""
    best = result.best
    row = {
        "task": task_id,
        "run": run,
        "p_tilde": p_tilde,
        "success": int(result.success),
        "n_samples": result.n_raw_samples,
        "n_unique": result.n_unique,
        "n_unique_k": result.n_unique / 1000.0,
        "coverage": result.coverage_achieved,
        "n_discarded": result.n_discarded,
        "best_key": best.key if best else None,
        "best_error": _json_number(best.error) if best else None,
        "best_params": list(best.params) if best else [],
        "top": [
            {"key": c.key, "error": _json_number(c.error), "probability": c.generation_probability, "params": list(c.params)}
            for c in result.candidates[:top]
        ],
    }
    if include_time:
        row["wall_time"] = result.wall_time
    return row
