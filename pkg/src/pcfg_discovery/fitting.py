"""Constant fitting with differential evolution and the ReRMSE objective."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import CanonicalForm, Expr, ExpressionError, compile_expression, parameters, variables

_IMPROVEMENT_EPS = 1e-12
_MAX_CELLS = 4_000_000  # population x rows evaluated per numpy pass


class DatasetError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observations of named variables; ``target`` is the column to explain."""

    names: tuple[str, ...]
    rows: np.ndarray
    target: str

    def __post_init__(self):
        names = tuple(self.names)
        rows = np.array(self.rows, dtype=float)
        object.__setattr__(self, "names", names)
        if rows.ndim != 2 or rows.shape[1] != len(names):
            raise DatasetError(f"rows must have shape (n, {len(names)})")
        if len(set(names)) != len(names):
            raise DatasetError("duplicate column names")
        if self.target not in names:
            raise DatasetError(f"target {self.target!r} is not a column")
        if rows.shape[0] < 2:
            raise DatasetError("need at least two rows")
        if not np.all(np.isfinite(rows)):
            raise DatasetError("dataset contains missing or non-finite values")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        if not self.sigma > 0.0:
            raise DatasetError(f"target {self.target!r} has zero variance")

    @classmethod
    def from_columns(cls, columns: dict[str, Sequence[float]], target: str) -> "Dataset":
        names = tuple(columns)
        return cls(names, np.column_stack([np.asarray(columns[k], dtype=float) for k in names]), target)

    @property
    def y(self) -> np.ndarray:
        return self.rows[:, self.names.index(self.target)]

    @property
    def sigma(self) -> float:
        return float(np.std(self.y))

    @property
    def features(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n != self.target)

    def bindings(self) -> dict[str, np.ndarray]:
        return {n: self.rows[:, i] for i, n in enumerate(self.names) if n != self.target}

    def __len__(self):
        return self.rows.shape[0]


@dataclass(frozen=True)
class FitConfig:
    population_factor: int = 10
    mutation_factor: float = 0.6
    crossover_rate: float = 0.9
    max_generations: int = 1000
    bounds: tuple[float, float] | tuple[tuple[float, float], ...] = (-10.0, 10.0)
    stagnation_window: int = 100
    target_error: float = 1e-12
    seed: int = 0
    min_population: int = 15

    def __post_init__(self):
        if self.population_factor < 1:
            raise ValueError("population_factor must be positive")
        if not 0.0 < self.mutation_factor < 2.0:
            raise ValueError("mutation_factor must be in (0, 2)")
        if not 0.0 < self.crossover_rate < 1.0:
            raise ValueError("crossover_rate must be in (0, 1)")
        if self.max_generations < 1 or self.stagnation_window < 1:
            raise ValueError("max_generations and stagnation_window must be positive")
        if self.target_error < 0:
            raise ValueError("target_error must be nonnegative")
        for lo, hi in self._bound_pairs():
            if not lo < hi:
                raise ValueError(f"degenerate bounds ({lo}, {hi})")

    def _bound_pairs(self):
        b = self.bounds
        if len(b) == 2 and all(isinstance(v, (int, float)) for v in b):
            return [tuple(map(float, b))]
        return [tuple(map(float, pair)) for pair in b]

    def bounds_for(self, dim: int) -> np.ndarray:
        pairs = self._bound_pairs()
        if len(pairs) == 1:
            pairs = pairs * dim
        if len(pairs) < dim:
            raise ValueError(f"bounds given for {len(pairs)} parameters, need {dim}")
        return np.array(pairs[:dim], dtype=float)

    def population_size(self, dim: int) -> int:
        return max(self.min_population, self.population_factor * dim)


@dataclass
class FitResult:
    params: list[float] = field(default_factory=list)
    error: float = math.inf
    evaluations: int = 0
    converged: bool = False
    generations: int = 0


def _check_variables(e: Expr, d: Dataset):
    missing = variables(e) - set(d.features)
    if missing:
        raise ExpressionError(f"variables not in dataset: {', '.join(sorted(missing))}")


def rermse(e: Expr, params: Sequence[float], d: Dataset) -> float:
    """Root mean squared error divided by the population std of the target.

    Non-finite predictions give ``nan``.
    """
    _check_variables(e, d)
    idx = parameters(e)
    if len(params) != len(idx):
        raise ExpressionError(f"expected {len(idx)} parameters, got {len(params)}")
    p = {i: np.float64(v) for i, v in zip(idx, params)}
    pred = np.broadcast_to(compile_expression(e)(d.bindings(), p), d.y.shape)
    if not np.all(np.isfinite(pred)):
        return math.nan
    return math.sqrt(float(np.mean((d.y - pred) ** 2))) / d.sigma


class _Objective:
    """Population-wide ReRMSE; non-finite values become +inf."""

    def __init__(self, e: Expr, d: Dataset):
        self.f = compile_expression(e)
        self.idx = parameters(e)
        self.b = d.bindings()
        self.y = d.y
        self.sigma = d.sigma
        self.calls = 0

    def __call__(self, pop: np.ndarray) -> np.ndarray:
        self.calls += pop.shape[0]
        step = max(1, _MAX_CELLS // max(1, self.y.size))
        out = np.empty(pop.shape[0])
        for s in range(0, pop.shape[0], step):
            chunk = pop[s : s + step]
            p = {i: chunk[:, [j]] for j, i in enumerate(self.idx)}
            pred = np.broadcast_to(self.f(self.b, p), (chunk.shape[0], self.y.size))
            with np.errstate(all="ignore"):
                err = np.sqrt(np.mean((pred - self.y) ** 2, axis=1)) / self.sigma
            out[s : s + step] = np.where(np.isfinite(err), err, np.inf)
        return out


def candidate_seed(seed: int, key: str) -> list[int]:
    """Seed material for one candidate: the config seed plus a stable digest of its key."""
    digest = hashlib.sha256(key.encode()).digest()
    return [seed & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest[:8], "little")]


def differential_evolution(objective, bounds: np.ndarray, cfg: FitConfig, rng: np.random.Generator) -> FitResult:
    """DE/rand/1/bin with greedy selection.

    Out-of-bounds trial components are redrawn uniformly inside the bounds.
    Stops at ``max_generations``, once the best error reaches
    ``target_error``, or after ``stagnation_window`` generations without an
    improvement larger than 1e-12.
    """
    dim = bounds.shape[0]
    size = cfg.population_size(dim)
    lo, hi = bounds[:, 0], bounds[:, 1]
    pop = lo + rng.random((size, dim)) * (hi - lo)
    err = objective(pop)
    best = int(np.argmin(err))
    best_err = float(err[best])
    since = 0
    gen = 0
    converged = best_err <= cfg.target_error
    while not converged and gen < cfg.max_generations:
        gen += 1
        keys = rng.random((size, size))
        np.fill_diagonal(keys, np.inf)
        r = np.argsort(keys, axis=1)[:, :3]
        mutant = pop[r[:, 0]] + cfg.mutation_factor * (pop[r[:, 1]] - pop[r[:, 2]])
        cross = rng.random((size, dim)) < cfg.crossover_rate
        cross[np.arange(size), rng.integers(dim, size=size)] = True
        trial = np.where(cross, mutant, pop)
        outside = (trial < lo) | (trial > hi)
        if outside.any():
            redraw = lo + rng.random((size, dim)) * (hi - lo)
            trial = np.where(outside, redraw, trial)
        t_err = objective(trial)
        keep = t_err <= err
        pop[keep] = trial[keep]
        err[keep] = t_err[keep]
        cur = int(np.argmin(err))
        if err[cur] < best_err - _IMPROVEMENT_EPS:
            since = 0
        else:
            since += 1
        best, best_err = cur, float(err[cur])
        if best_err <= cfg.target_error:
            converged = True
        elif since >= cfg.stagnation_window:
            converged = True
            break
    return FitResult([float(v) for v in pop[best]], best_err, objective.calls, converged, gen)


def fit_parameters(c: CanonicalForm | Expr, d: Dataset, cfg: FitConfig | None = None) -> FitResult:
    """Fit the constants of ``c`` to ``d`` by minimizing ReRMSE.

    Expressions without parameters are scored directly.  Given the same
    inputs the result is identical from run to run.
    """
    cfg = cfg or FitConfig()
    e = c.expr if isinstance(c, CanonicalForm) else c
    _check_variables(e, d)
    dim = len(parameters(e))
    if dim == 0:
        err = rermse(e, [], d)
        err = err if math.isfinite(err) else math.inf
        return FitResult([], err, 1, True, 0)
    rng = np.random.default_rng(candidate_seed(cfg.seed, e.key))
    return differential_evolution(_Objective(e, d), cfg.bounds_for(dim), cfg, rng)
