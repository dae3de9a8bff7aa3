import csv
import io
import json

import pytest

from pcfg_discovery import cli
from pcfg_discovery.harness import generate_dataset, load_manifest, write_dataset

GV = ["--grammar", "uniform_universal", "--variables", "x,y"]


def run(capsys, *argv):
    rc = cli.main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


def test_sample(capsys):
    rc, out, _ = run(capsys, "sample", *GV, "--n", "5", "--seed", "1", "--canonical")
    doc = json.loads(out)
    assert rc == 0 and doc["n"] == 5 and len(doc["samples"]) == 5
    assert {"sentence", "probability", "height", "canonical"} <= set(doc["samples"][0])
    rc, out2, _ = run(capsys, "sample", *GV, "--n", "5", "--seed", "1", "--canonical", "--format", "jsonl")
    assert [json.loads(l)["sentence"] for l in out2.splitlines()] == [s["sentence"] for s in doc["samples"]]


def test_count_and_coverage(capsys):
    rc, out, _ = run(capsys, "count", "--grammar", "linear", "--variables", "x,y", "--height", "10")
    assert rc == 0 and json.loads(out) == {"symbol": "E", "height": 10, "n": "512", "N": "1022"}
    rc, out, _ = run(capsys, "coverage", *GV, "--height", "4", "--table", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rc == 0 and [r["height"] for r in rows] == ["0", "1", "2", "3", "4"]
    assert float(rows[-1]["coverage"]) == pytest.approx(0.36615168)


def test_parse_prob_and_expected(capsys):
    rc, out, _ = run(capsys, "parse-prob", "--grammar", "linear", "--variables", "x,y", "--expr", "x+y+y")
    doc = json.loads(out)
    assert rc == 0 and doc["p_tilde"] == 0.015625 and doc["height"] == 4
    rc, out, _ = run(capsys, "expected", "--grammar", "linear", "--variables", "x,y", "--expr", "x+y")
    assert json.loads(out)["E_pcfg"] == 16.0
    rc, out, _ = run(capsys, "expected", "--grammar", "linear", "--variables", "x,y", "--expr", "x+y", "--deterministic")
    # N(2) + n(3)/2 = 2 + 4/2
    assert json.loads(out)["E_cfg"] == "4"


def test_expected_manifest(capsys, tmp_path):
    curves = tmp_path / "c.csv"
    rc, out, _ = run(capsys, "expected", "--manifest", "easy", "--format", "csv", "--curves", str(curves))
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rc == 0 and len(rows) == 10 and "reduction" in rows[0]
    assert curves.read_text().startswith("log10_n,")


def test_discover_and_resample(capsys, tmp_path):
    write_dataset(generate_dataset(load_manifest("easy")[2]), tmp_path / "d.csv")
    out_path = tmp_path / "r.json"
    rc, _, _ = run(capsys, "discover", "--data", str(tmp_path / "d.csv"), "--target", "f", "--n", "300", "--out", str(out_path))
    doc = json.loads(out_path.read_text())
    assert rc == 0 and doc["success"] == 1 and doc["best_key"] == "x*y"
    assert sum(c["multiplicity"] for c in doc["candidates"]) == 300
    rc, out, _ = run(capsys, "resample", str(out_path), "--repeats", "10")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert rc == 0 and rows[0].keys() == {"sample_size", "avg_success_rate"}
    assert float(rows[-1]["avg_success_rate"]) == 1.0


def test_benchmark(capsys, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("max_generations: 20\nstagnation_window: 5\ncurve_points: 4\n")
    rc, out, _ = run(capsys, "benchmark", "--limit", "1", "--n", "60", "--runs", "1", "--config", str(cfg))
    doc = json.loads(out)
    assert rc == 0 and doc["config"]["n_samples"] == 60 and len(doc["rows"]) == 1


@pytest.mark.parametrize(
    "argv, code",
    [
        (["sample", "--n", "3"], 1),
        (["nonsense"], 1),
        (["sample", "--grammar", "uniform_universal", "--n", "3"], 1),
        (["count", "--grammar", "missing.pcfg", "--height", "3"], 2),
        (["parse-prob", *GV, "--expr", "x ? y"], 2),
        (["parse-prob", "--grammar", "linear", "--variables", "x,y", "--expr", "x*y"], 2),
        (["discover", "--data", "missing.csv", "--target", "f"], 2),
        (["expected"], 1),
    ],
)
def test_exit_codes(capsys, argv, code):
    try:
        rc = cli.main(argv)
    except SystemExit as exc:  # argparse usage errors
        rc = exc.code
    err = capsys.readouterr().err
    assert rc == code
    assert "pcfg-discovery" in err


def test_resample_rejects_non_discover_file(capsys, tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    rc, _, err = run(capsys, "resample", str(p))
    assert rc == 2 and "candidate" in err
