import numpy as np
import pytest
from sklearn.base import clone

from pcfg_discovery import PCFGRegressor, linear_grammar


@pytest.fixture
def xy():
    rng = np.random.default_rng(0)
    X = rng.uniform(1, 5, (60, 2))
    return X, X[:, 0] / X[:, 1]


def test_fit_predict(xy):
    X, y = xy
    reg = PCFGRegressor(n_samples=800, feature_names=["x", "y"], stop_on_success=True).fit(X, y)
    # a scaled form may be fitted first; both are exact
    assert reg.success_ and reg.equation_ in ("x/y", "C0*x/y")
    np.testing.assert_allclose(reg.predict(X), y, rtol=1e-8)
    assert reg.score(X, y) == pytest.approx(1.0)
    assert reg.n_features_in_ == 2 and list(reg.feature_names_in_) == ["x", "y"]


def test_default_feature_names_and_custom_grammar():
    X = np.arange(1, 21, dtype=float).reshape(10, 2)
    y = X[:, 0] + X[:, 1]
    reg = PCFGRegressor(n_samples=50).fit(X, y)
    assert list(reg.feature_names_in_) == ["x0", "x1"]
    g = linear_grammar(2, 0.5)
    reg = PCFGRegressor(grammar=g, n_samples=50, feature_names=["x", "y"]).fit(X, y)
    assert reg.equation_ == "x+y"


def test_params_and_clone(xy):
    reg = PCFGRegressor(n_samples=10, random_state=3)
    assert clone(reg).get_params() == reg.get_params()
    with pytest.raises(Exception):
        reg.predict(xy[0])


def test_input_validation(xy):
    X, y = xy
    with pytest.raises(ValueError):
        PCFGRegressor(feature_names=["x"]).fit(X, y)
    with pytest.raises(ValueError):
        PCFGRegressor(feature_names=["c", "y"]).fit(X, y)
    reg = PCFGRegressor(n_samples=200, feature_names=["x", "y"], stop_on_success=True).fit(X, y)
    with pytest.raises(ValueError):
        reg.predict(X[:, :1])


def test_reproducible(xy):
    X, y = xy
    y = y + 0.3 * X[:, 0]
    a = PCFGRegressor(n_samples=150, feature_names=["x", "y"], max_generations=40, random_state=1).fit(X, y)
    b = PCFGRegressor(n_samples=150, feature_names=["x", "y"], max_generations=40, random_state=1).fit(X, y)
    assert a.equation_ == b.equation_ and np.array_equal(a.params_, b.params_)


def test_docstring_example():
    import doctest

    from pcfg_discovery import estimator

    assert doctest.testmod(estimator).failed == 0
