import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcfg_discovery import (
    ambiguity_corrected_rate,
    count_table,
    count_trees,
    coverage,
    expected_samples_cfg,
    expected_samples_pcfg,
    expected_success_rate,
    linear_closed_forms,
    linear_grammar,
    reconstruction_ratio,
    spearman,
    universal_grammar,
)
from pcfg_discovery.analytics import exact_str

from oracles import enumerate_trees, linear_counts, linear_coverage


def test_counts_match_enumeration_height_5():
    g = universal_grammar(["x", "y"])
    trees = enumerate_trees(g, "E", 5)
    table = count_table(g, 5)
    for h in range(6):
        assert table.n("E", h) == sum(1 for *_, th in trees if th == h)
    assert table.N("E", 5) == len(trees) == 3135
    assert coverage(g, "E", 5) == pytest.approx(math.fsum(p for _, p, _ in trees), abs=1e-12)


def test_counts_per_symbol_match_enumeration():
    g = universal_grammar(["x"])
    for sym in ("T", "R", "V", "F"):
        trees = enumerate_trees(g, sym, 4)
        assert count_trees(g, sym, 4)[1] == len(trees)


def test_terminal_counts():
    table = count_table(linear_grammar(2, 0.5), 3)
    assert [table.n("x", h) for h in range(4)] == [1, 0, 0, 0]
    assert table.N("x", 3) == 1
    assert table.n("E", -1) == 0


@given(n_vars=st.integers(1, 4), h=st.integers(2, 40), p=st.floats(0.05, 0.95))
def test_linear_closed_forms_property(n_vars, h, p):
    g = linear_grammar(n_vars, p)
    n, N = count_trees(g, "E", h)
    assert (n, N) == linear_counts(n_vars, h)
    forms = linear_closed_forms(n_vars, p, h)
    assert (forms["n"], forms["N"]) == (n, N)
    assert coverage(g, "E", h) == pytest.approx(linear_coverage(p, h), abs=1e-12)
    assert forms["Cov"] == pytest.approx(coverage(g, "E", h), abs=1e-12)


def test_counts_are_exact_big_integers():
    n, N = count_trees(linear_grammar(3, 0.5), "E", 200)
    assert n == 3**199
    assert isinstance(N, int)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 25))
def test_coverage_monotone_and_bounded(h):
    g = universal_grammar(["x", "y"])
    a, b = coverage(g, "E", h), coverage(g, "E", h + 1)
    assert 0.0 <= a <= b <= 1.0


def test_expected_samples():
    assert expected_samples_pcfg(0.25) == 4.0
    with pytest.raises(ValueError):
        expected_samples_pcfg(0.0)
    g = linear_grammar(2, 0.5)
    e = expected_samples_cfg(g, 4)
    # N(3) + n(4)/2 = 6 + 8/2
    assert e.value == Fraction(10)
    assert e.log10 == pytest.approx(1.0)
    big = expected_samples_cfg(universal_grammar(["x", "y"]), 9)
    k = math.floor(big.log10)
    assert 10**k <= big.value < 10 ** (k + 1)


def test_exact_str_beyond_int_digit_limit():
    v = 10**5000 + 1
    s = exact_str(v)
    assert len(s) == 5001 and s.endswith("1")
    assert exact_str(Fraction(3, 2)) == "3/2"


def test_success_rates():
    assert expected_success_rate([1.0, 0.0], 5) == 0.5
    assert expected_success_rate([0.5], 2) == pytest.approx(0.75)
    assert ambiguity_corrected_rate([0.25], 1, 0.5) == pytest.approx(0.5)
    assert ambiguity_corrected_rate([0.9], 1, 0.5) == 1.0
    with pytest.raises(ValueError):
        ambiguity_corrected_rate([0.1], 1, 0.0)
    with pytest.raises(ValueError):
        expected_success_rate([1.5], 1)


def test_reconstruction_ratio():
    assert reconstruction_ratio([1, 10, 100, 1000], 100) == 0.75
    with pytest.raises(ValueError):
        reconstruction_ratio([], 1)


def test_spearman():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 1, 2], [3, 3, 4]) == pytest.approx(1.0)
    assert math.isnan(spearman([1, 1], [2, 3]))
