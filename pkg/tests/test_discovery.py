import math

import numpy as np
import pytest

from pcfg_discovery import (
    DiscoveryConfig,
    FitConfig,
    collect_candidates,
    linear_grammar,
    mc_gbed,
    resample_success_curve,
    run_report,
    universal_grammar,
)
from pcfg_discovery.discovery import DiscoveryError, grammar_variables, success_ratio
from pcfg_discovery.fitting import Dataset

G = universal_grammar(["x", "y"])


def test_grammar_variables():
    assert grammar_variables(G) == {"x", "y"}
    assert grammar_variables(linear_grammar(3, 0.5)) == {"x", "y", "z"}


def test_pool_accounting():
    pool = collect_candidates(G, 1500, seed=4)
    assert pool.n_raw_samples == 1500
    assert sum(pool.multiplicity.values()) == 1500
    assert pool.n_unique <= pool.n_distinct_trees <= 1500
    assert 0 < pool.coverage_achieved <= 1
    # a key's probability sums its distinct trees, so the total is the coverage
    assert math.fsum(pool.probability.values()) == pytest.approx(pool.coverage_achieved, rel=1e-12)
    order = pool.keys_by_probability()
    assert [pool.probability[k] for k in order] == sorted(pool.probability.values(), reverse=True)


def test_pool_deterministic():
    a = collect_candidates(G, 400, seed=8)
    b = collect_candidates(G, 400, seed=8)
    assert a.keys_by_probability() == b.keys_by_probability()
    assert a.coverage_achieved == b.coverage_achieved


def test_linear_grammar_coverage_is_exact_sum():
    # in the unambiguous linear grammar keys and trees coincide up to reordering
    g = linear_grammar(1, 0.5)
    pool = collect_candidates(g, 2000, seed=0)
    # trees are x, x+x, x+x+x, ...: coverage is 1 - 0.5^k for the first k heights seen
    k = pool.n_distinct_trees
    assert pool.n_unique == k
    assert pool.coverage_achieved <= 1 - 0.5**k + 1e-12


def test_mc_gbed_finds_product(xy_data):
    d = xy_data(lambda x, y: x * y)
    res = mc_gbed(G, d, DiscoveryConfig(n_samples=600, seed=0))
    assert res.success
    assert res.best.key == "x*y" and res.best.error == 0.0
    errs = [c.error for c in res.candidates]
    assert errs == sorted(errs, key=lambda e: math.inf if math.isnan(e) else e)
    assert sum(c.sample_multiplicity for c in res.candidates) == 600
    assert res.n_unique == len(res.candidates)


def test_stop_on_success_keeps_ranking_head(xy_data):
    d = xy_data(lambda x, y: x + y)
    full = mc_gbed(G, d, DiscoveryConfig(n_samples=500, seed=2, fit=FitConfig(max_generations=50)))
    fast = mc_gbed(G, d, DiscoveryConfig(n_samples=500, seed=2, stop_on_success=True, fit=FitConfig(max_generations=50)))
    assert full.success == fast.success
    if fast.success:
        assert fast.best.error < 1e-9
    assert any(not c.fitted for c in fast.candidates) or len(fast.candidates) == len(full.candidates)


def test_max_parameters_marks_unfitted(xy_data):
    d = xy_data(lambda x, y: x - y)
    res = mc_gbed(G, d, DiscoveryConfig(n_samples=300, seed=1, max_parameters=0))
    for c in res.candidates:
        if c.n_parameters > 0:
            assert not c.fitted and c.error == math.inf and not c.admissible


def test_shared_fit_cache(xy_data):
    d = xy_data(lambda x, y: x / y)
    cache = {}
    cfg = DiscoveryConfig(n_samples=200, seed=0, fit=FitConfig(max_generations=20))
    a = mc_gbed(G, d, cfg, fit_cache=cache)
    size = len(cache)
    b = mc_gbed(G, d, cfg, fit_cache=cache)
    assert len(cache) == size
    assert [(c.key, c.error) for c in a.candidates] == [(c.key, c.error) for c in b.candidates]


def test_incompatible_grammar_and_data():
    d = Dataset.from_columns({"x": [1.0, 2.0, 3.0], "f": [1.0, 4.0, 9.0]}, "f")
    with pytest.raises(DiscoveryError, match="not in dataset"):
        mc_gbed(G, d, DiscoveryConfig(n_samples=10))
    d2 = Dataset.from_columns({"x": [1.0, 2.0], "y": [1.0, 3.0], "f": [0.0, 1.0]}, "x")
    with pytest.raises(DiscoveryError, match="target"):
        mc_gbed(G, d2, DiscoveryConfig(n_samples=10))


def test_run_report_fields(xy_data):
    res = mc_gbed(G, xy_data(lambda x, y: x * y), DiscoveryConfig(n_samples=100, seed=0, stop_on_success=True))
    row = run_report(res, "mul", 2, 0.00288, top=3)
    assert row["task"] == "mul" and row["run"] == 2 and row["p_tilde"] == 0.00288
    assert row["n_unique_k"] == row["n_unique"] / 1000
    assert len(row["top"]) == 3 and "wall_time" not in row
    assert "wall_time" in run_report(res, include_time=True)


def test_resample_curve_exact_single_task():
    # two candidates, success has weight 3 of 4: first draw hits with probability 0.75
    curve = resample_success_curve([[(1.0, False), (3.0, True)]], repeats=40_000, seed=0)
    assert curve[0] == pytest.approx(0.75, abs=0.01)
    assert curve[1] == 1.0


def test_resample_curve_properties():
    rng = np.random.default_rng(1)
    tasks = [[(float(p), bool(s)) for p, s in zip(rng.uniform(0.01, 1, 30), rng.random(30) < 0.1)] for _ in range(8)]
    curve = resample_success_curve(tasks, repeats=50, seed=3)
    assert np.all(np.diff(curve) >= 0)
    assert curve[-1] == pytest.approx(success_ratio(tasks))
    again = resample_success_curve(tasks, repeats=50, seed=3)
    assert np.array_equal(curve, again)
    with pytest.raises(ValueError):
        resample_success_curve([[(0.0, True)]], 5, 0)
