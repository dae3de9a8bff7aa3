"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary section
lists every criterion.  Runtimes are asserted alongside correctness.
"""
from __future__ import annotations

import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest

from pcfg_discovery import (
    Dataset,
    DiscoveryConfig,
    FitConfig,
    builtin_grammar,
    collect_candidates,
    count_trees,
    coverage,
    coverage_table,
    count_table,
    fit_parameters,
    generate_sample,
    linear_grammar,
    mc_gbed,
    parse,
    parse_expression,
    sample_many,
    tree_probability,
    universal_grammar,
)
from pcfg_discovery.chart import target_probability
from pcfg_discovery.grammar import Pcfg, Rule
from pcfg_discovery.harness import emit_expected_vs_samples, generate_dataset, load_manifest, write_dataset

from oracles import enumerate_trees, least_squares_rermse, linear_counts, linear_coverage

pytestmark = pytest.mark.acceptance


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def test_c01_linear_coverage_oracle(acceptance):
    worst = 0.0
    with Timer() as t:
        for k in range(1, 10):
            p = k / 10
            table = coverage_table(linear_grammar(2, p), 30)["E"]
            for h in range(2, 31):
                worst = max(worst, abs(table[h] - (1 - p ** (h - 1))))
                worst = max(worst, abs(table[h] - linear_coverage(p, h)))
    ok = worst <= 1e-12 and t.elapsed < 1.0
    acceptance(1, ok, f"linear coverage max abs err {worst:.2e}, {t.elapsed:.3f}s")
    assert ok


def test_c02_linear_counting_oracle(acceptance):
    mismatches = []
    with Timer() as t:
        for n_vars in (1, 2, 3):
            table = count_table(linear_grammar(n_vars, 0.5), 60)
            for h in range(2, 61):
                got = (table.n("E", h), table.N("E", h))
                if got != linear_counts(n_vars, h):
                    mismatches.append((n_vars, h))
                if n_vars == 2 and got[1] != 2**h - 2:
                    mismatches.append((n_vars, h, "2^h-2"))
    ok = not mismatches and t.elapsed < 1.0
    acceptance(2, ok, f"linear counts exact for n_V=1,2,3, h<=60 ({len(mismatches)} mismatches), {t.elapsed:.3f}s")
    assert ok


def test_c03_bruteforce_enumeration(acceptance):
    g = universal_grammar(["x", "y"])
    with Timer() as t:
        trees = enumerate_trees(g, "E", 4)
        mass = math.fsum(p for _, p, _ in trees)
        n_exact = sum(1 for *_, h in trees if h == 4)
        n, N = count_trees(g, "E", 4)
        cov = coverage(g, "E", 4)
    ok = (n, N) == (n_exact, len(trees)) and abs(cov - mass) <= 1e-9 and t.elapsed < 60
    acceptance(
        3, ok, f"enumerated {len(trees)} trees (count_trees N={N}, n={n}), coverage diff {abs(cov - mass):.1e}, {t.elapsed:.2f}s"
    )
    assert ok


def test_c04_sampler_height_law(acceptance):
    g = linear_grammar(2, 0.5)
    n = 100_000
    with Timer() as t:
        outcomes, _ = sample_many(g, n, master_seed=4)
        heights = np.array([o.height for o in outcomes])
        worst_rel = max(abs(o.probability - tree_probability(o.tree, g)) / tree_probability(o.tree, g) for o in outcomes)
    worst_z = 0.0
    for h in range(2, 9):
        q = 0.5 ** (h - 2) * 0.5
        sd = math.sqrt(n * q * (1 - q))
        worst_z = max(worst_z, abs(int(np.sum(heights == h)) - n * q) / sd)
    ok = worst_z <= 3 and worst_rel <= 1e-12 and t.elapsed < 30
    acceptance(4, ok, f"height freq max |z|={worst_z:.2f}, prob rel err {worst_rel:.1e}, {t.elapsed:.1f}s")
    assert ok


def test_c05_geometric_expectation(acceptance):
    # Bernoulli(0.1) as a one-step grammar; count draws to the first hit
    g = Pcfg([Rule("S", ("hit",), 0.1), Rule("S", ("miss",), 0.9)], "S")
    rng = np.random.default_rng(5)
    with Timer() as t:
        trials = []
        for _ in range(10_000):
            k = 1
            while generate_sample(g, rng=rng).sentence != ("hit",):
                k += 1
            trials.append(k)
    mean = float(np.mean(trials))
    ok = abs(mean - 10) / 10 <= 0.05 and t.elapsed < 5
    acceptance(5, ok, f"mean trials {mean:.3f} vs 1/p=10, {t.elapsed:.2f}s")
    assert ok


def test_c06_parse_probability(acceptance):
    g = linear_grammar(2, 0.5)
    with Timer() as t:
        p1, h1 = target_probability(g, "x+y")
        p2, h2 = target_probability(g, "x+y+y")
    ok = p1 == 0.0625 and p2 == 0.015625 and (h1, h2) == (3, 4) and t.elapsed < 1
    acceptance(6, ok, f"P(x+y)={p1!r} h={h1}, P(x+y+y)={p2!r} h={h2}, {t.elapsed:.3f}s")
    assert ok


def test_c07_parser_roundtrip(acceptance):
    gu = universal_grammar(["x", "y"])
    gl = linear_grammar(2, 0.5)
    bad_u = bad_l = 0
    with Timer() as t:
        outs, _ = sample_many(gu, 1000, master_seed=7)
        for o in outs:
            best = parse(gu, list(o.sentence), top_k=1).best
            if best is None or best[1] < o.probability - 1e-12:
                bad_u += 1
        outs, _ = sample_many(gl, 1000, master_seed=7)
        for o in outs:
            best = parse(gl, list(o.sentence), top_k=1).best
            if best is None or best[0] != o.tree or best[0].derivation() != o.derivation:
                bad_l += 1
    ok = bad_u == 0 and bad_l == 0 and t.elapsed < 30
    acceptance(7, ok, f"round trip failures universal={bad_u}, linear={bad_l} of 1000 each, {t.elapsed:.1f}s")
    assert ok


_LINEAR_TEMPLATES = [
    ("c*x+c", lambda x, y: [x, np.ones_like(x)]),
    ("c*x+c*y", lambda x, y: [x, y]),
    ("c*x+c*y+c", lambda x, y: [x, y, np.ones_like(x)]),
    ("c*sin(x)+c*cos(y)", lambda x, y: [np.sin(x), np.cos(y)]),
    ("c*x*y+c*x+c", lambda x, y: [x * y, x, np.ones_like(x)]),
    ("c/x+c*y", lambda x, y: [1 / x, y]),
    ("c*exp(x/y)+c", lambda x, y: [np.exp(x / y), np.ones_like(x)]),
    ("c*sqrt(x)+c*y*y+c*x", lambda x, y: [np.sqrt(x), y * y, x]),
]


def test_c08_fitting_matches_least_squares(acceptance):
    worst = 0.0
    with Timer() as t:
        for i in range(20):
            rng = np.random.default_rng(100 + i)
            text, basis = _LINEAR_TEMPLATES[i % len(_LINEAR_TEMPLATES)]
            x, y = rng.uniform(1, 5, 50), rng.uniform(1, 5, 50)
            cols = np.column_stack(basis(x, y))
            f = cols @ rng.uniform(-4, 4, cols.shape[1]) + rng.normal(0, 0.3, 50)
            d = Dataset.from_columns({"x": x, "y": y, "f": f}, "f")
            oracle, _ = least_squares_rermse(cols, f)
            res = fit_parameters(parse_expression(text), d, FitConfig(seed=i))
            worst = max(worst, abs(res.error - oracle) / oracle)
        rng = np.random.default_rng(99)
        f = rng.normal(3.0, 1.0, 40)
        d = Dataset.from_columns({"x": rng.uniform(1, 5, 40), "f": f}, "f")
        res = fit_parameters(parse_expression("c"), d)
        mean_err = abs(res.params[0] - float(np.mean(f)))
    ok = worst <= 1e-6 and mean_err <= 1e-6 and t.elapsed < 60
    acceptance(8, ok, f"DE vs least squares max rel diff {worst:.1e}, mean recovery err {mean_err:.1e}, {t.elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_c09_end_to_end_easy(acceptance):
    tasks = load_manifest("easy")
    failures = []
    summary = []
    with Timer() as t:
        for task in tasks:
            d = generate_dataset(task)
            g = universal_grammar(list(task.variables))
            p_tilde, _ = target_probability(g, task.expression)
            n = math.ceil(10 / p_tilde)
            wins = 0
            for seed in range(3):
                cfg = DiscoveryConfig(n_samples=n, seed=seed, stop_on_success=True, fit=FitConfig(seed=seed))
                wins += mc_gbed(g, d, cfg).success
            summary.append(f"{task.id}:{wins}/3")
            if wins < 2:
                failures.append(task.id)
    ok = len(tasks) >= 10 and not failures and t.elapsed < 600
    acceptance(9, ok, f"{len(tasks)} easy tasks, N=ceil(10/p~), failing: {failures or 'none'}, {t.elapsed:.0f}s")
    print(" ".join(summary))
    assert ok


def test_c10_biased_beats_uniform(acceptance):
    tasks = load_manifest("main")
    with Timer() as t:
        table = emit_expected_vs_samples(tasks)
    frac = table["fraction_biased_better"]
    ok = len(tasks) >= 20 and frac >= 0.6 and t.elapsed < 60
    acceptance(10, ok, f"{len(tasks)} targets, biased E[N] lower for fraction {frac:.2f}, {t.elapsed:.2f}s")
    assert ok


@pytest.mark.slow
def test_c11_coverage_ordering(acceptance):
    gu = builtin_grammar("uniform_universal", ["x", "y"])
    gb = builtin_grammar("biased_universal", ["x", "y"])
    rows = []
    with Timer() as t:
        for seed in range(3):
            pu = collect_candidates(gu, 10_000, seed)
            pb = collect_candidates(gb, 10_000, seed)
            rows.append((pu.coverage_achieved, pb.coverage_achieved, pu.n_unique / pu.n_raw_samples))
    ordered = all(b > u for u, b, _ in rows)
    in_band = all(0.20 <= r <= 0.45 for *_, r in rows)
    ok = ordered and in_band and t.elapsed < 300
    detail = ", ".join(f"U={u:.3f} B={b:.3f} uniq={r:.3f}" for u, b, r in rows)
    acceptance(11, ok, f"{detail}, {t.elapsed:.0f}s")
    assert ok


def _cli(args, cwd, hashseed):
    env = dict(os.environ, PYTHONHASHSEED=str(hashseed))
    for k in list(env):
        if k.startswith("PCFG_"):
            del env[k]
    return subprocess.run(
        [sys.executable, "-m", "pcfg_discovery.cli", *args], cwd=cwd, env=env, capture_output=True, text=True
    )


@pytest.mark.slow
def test_c12_determinism(acceptance, tmp_path):
    task = load_manifest("easy")[2]
    gv = ["--grammar", "uniform_universal", "--variables", "x,y"]
    commands = {
        "sample": ["sample", *gv, "--n", "300", "--seed", "3", "--canonical", "--out", "sample.json"],
        "count": ["count", *gv, "--height", "7", "--table", "--format", "csv", "--out", "count.csv"],
        "coverage": ["coverage", *gv, "--height", "12", "--table", "--out", "coverage.json"],
        "parse-prob": ["parse-prob", *gv, "--expr", "x*y+2", "--out", "parse.json"],
        "expected": ["expected", "--manifest", "main", "--curves", "expected_curves.csv", "--out", "expected.json"],
        "discover": ["discover", "--data", "data.csv", "--target", "f", "--n", "300", "--seed", "1", "--out", "discover.json"],
        "benchmark": [
            "benchmark", "--manifest", "easy", "--limit", "2", "--n", "150", "--runs", "2",
            "--curves", "bench_curves.csv", "--out", "bench.json",
        ],
        "resample": ["resample", "discover.json", "--repeats", "50", "--seed", "2", "--out", "resample.csv"],
    }
    outputs = {}
    failed = []
    with Timer() as t:
        for run in (0, 1):
            wd = tmp_path / f"run{run}"
            wd.mkdir()
            write_dataset(generate_dataset(task), wd / "data.csv")
            for name, args in commands.items():
                proc = _cli(args, wd, hashseed=run + 11)
                if proc.returncode != 0:
                    failed.append(f"{name}: rc={proc.returncode} {proc.stderr.strip()}")
            outputs[run] = {p.name: p.read_bytes() for p in sorted(wd.iterdir())}
    differing = [f for f in outputs[0] if outputs[0][f] != outputs[1].get(f)]
    ok = not failed and not differing and len(outputs[0]) == 11 and t.elapsed < 300
    acceptance(
        12, ok, f"{len(commands)} subcommands x2, {len(outputs[0])} files, differing: {differing or 'none'}, {t.elapsed:.0f}s"
    )
    assert not failed, failed
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
