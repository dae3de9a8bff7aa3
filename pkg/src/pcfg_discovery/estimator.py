"""scikit-learn style wrapper around grammar-based equation discovery."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .discovery import DiscoveryConfig, mc_gbed
from .expr import evaluate
from .fitting import Dataset, FitConfig
from .grammar import CONSTANT, Pcfg, builtin_grammar

_TARGET = "__target__"


def _feature_names(X, feature_names, n_features):
    if feature_names is not None:
        names = [str(n) for n in feature_names]
    elif hasattr(X, "columns"):
        names = [str(c) for c in X.columns]
    else:
        names = [f"x{i}" for i in range(n_features)]
    if len(names) != n_features:
        raise ValueError(f"got {len(names)} feature names for {n_features} features")
    if len(set(names)) != len(names):
        raise ValueError("feature names must be distinct")
    if CONSTANT in names or _TARGET in names:
        raise ValueError(f"feature names may not be {CONSTANT!r} or {_TARGET!r}")
    return names


class PCFGRegressor(RegressorMixin, BaseEstimator):
    """Symbolic regressor that samples equations from a probabilistic grammar.

    ``grammar`` is a builtin name (``uniform_universal``, ``biased_universal``,
    ``linear``, ``extended_universal``) instantiated with the feature names,
    or a :class:`Pcfg` whose variables are the feature names.

    After ``fit``: ``equation_`` (canonical text), ``params_``, ``error_``
    (training ReRMSE), ``success_`` and ``result_`` (the full ranking).

    >>> import numpy as np
    >>> X = np.random.default_rng(0).uniform(1, 5, (50, 2))
    >>> reg = PCFGRegressor(n_samples=300, feature_names=["x", "y"], stop_on_success=True)
    >>> reg.fit(X, X[:, 0] * X[:, 1]).equation_
    'x*y'
    """

    def __init__(
        self,
        grammar="uniform_universal",
        n_samples=2000,
        max_parameters=5,
        success_threshold=1e-9,
        max_expansions=1000,
        population_factor=10,
        max_generations=1000,
        bounds=(-10.0, 10.0),
        stop_on_success=False,
        feature_names=None,
        random_state=0,
        n_jobs=1,
    ):
        self.grammar = grammar
        self.n_samples = n_samples
        self.max_parameters = max_parameters
        self.success_threshold = success_threshold
        self.max_expansions = max_expansions
        self.population_factor = population_factor
        self.max_generations = max_generations
        self.bounds = bounds
        self.stop_on_success = stop_on_success
        self.feature_names = feature_names
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _grammar(self, names) -> Pcfg:
        if isinstance(self.grammar, Pcfg):
            return self.grammar
        return builtin_grammar(self.grammar, names)

    def _seed(self) -> int:
        rs = self.random_state
        if rs is None:
            return int(np.random.default_rng().integers(2**63))
        if isinstance(rs, np.random.Generator):
            return int(rs.integers(2**63))
        if isinstance(rs, np.random.RandomState):
            return int(rs.randint(2**31))
        return int(rs)

    def fit(self, X, y):
        names = _feature_names(X, self.feature_names, np.shape(X)[1] if np.ndim(X) == 2 else 0)
        X, y = check_X_y(X, y, y_numeric=True, dtype=float)
        seed = self._seed()
        data = Dataset(tuple(names) + (_TARGET,), np.column_stack([X, y]), _TARGET)
        cfg = DiscoveryConfig(
            n_samples=self.n_samples,
            seed=seed,
            max_parameters=self.max_parameters,
            success_threshold=self.success_threshold,
            max_expansions=self.max_expansions,
            fit=FitConfig(
                population_factor=self.population_factor,
                max_generations=self.max_generations,
                bounds=tuple(self.bounds),
                seed=seed,
            ),
            n_jobs=self.n_jobs,
            stop_on_success=self.stop_on_success,
        )
        self.result_ = mc_gbed(self._grammar(names), data, cfg)
        best = self.result_.best
        if best is None or not np.isfinite(best.error):
            raise RuntimeError("no admissible equation was found; increase n_samples")
        self.feature_names_in_ = np.asarray(names, dtype=object)
        self.n_features_in_ = len(names)
        self.expression_ = best.expression
        self.equation_ = best.key
        self.params_ = np.asarray(best.params, dtype=float)
        self.error_ = best.error
        self.success_ = self.result_.success
        return self

    def predict(self, X):
        check_is_fitted(self, "expression_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        bindings = {n: X[:, i] for i, n in enumerate(self.feature_names_in_)}
        out = evaluate(self.expression_, bindings, list(self.params_))
        return np.broadcast_to(np.asarray(out, dtype=float), (X.shape[0],)).copy()

