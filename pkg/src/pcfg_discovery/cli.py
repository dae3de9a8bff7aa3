"""Sample, count, parse and discover equations with probabilistic grammars.

Exit codes: 0 success, 1 usage error, 2 data or grammar error, 3 internal
invariant violation.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .analytics import coverage_table, count_table, exact_str, expected_samples_cfg, expected_samples_pcfg
from .chart import NotInLanguage, TokenizeError, literals_to_constant, parse, tokenize
from .discovery import DiscoveryError, mc_gbed, resample_success_curve, run_report
from .expr import ExpressionError, canonicalize, tree_to_expression
from .fitting import DatasetError
from .grammar import BUILTIN_GRAMMARS, GrammarError, Pcfg, builtin_grammar, load_grammar
from .harness import (
    ConfigError,
    curve_records,
    emit_expected_vs_samples,
    load_manifest,
    load_run_config,
    log_grid,
    read_dataset,
    run_benchmark,
    to_csv,
    to_json,
    to_jsonl,
    validate_report,
)
from .sampler import sample_many, tree_height

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (GrammarError, DatasetError, ExpressionError, TokenizeError, NotInLanguage, DiscoveryError, OSError)


class UsageError(Exception):
    pass


class InvariantViolation(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _grammar(args, variables: Sequence[str] | None = None) -> Pcfg:
    name = args.grammar
    if name in BUILTIN_GRAMMARS or name in ("uniform", "biased", "extended"):
        names = _variables(args) or list(variables or [])
        if not names:
            raise UsageError(f"builtin grammar {name!r} needs --variables")
        return builtin_grammar(name, names, args.linear_p)
    return load_grammar(name)


def _variables(args) -> list[str]:
    raw = getattr(args, "variables", None)
    return [v.strip() for v in raw.split(",") if v.strip()] if raw else []


def _config(args, **overrides):
    values = {"seed": getattr(args, "seed", None), "jobs": getattr(args, "jobs", None)}
    values.update(overrides)
    try:
        return load_run_config(getattr(args, "config", None), overrides=values)
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _emit(args, doc: Any, records: list[dict] | None = None, columns=None):
    fmt = args.format
    if fmt == "json":
        text = to_json(doc)
    else:
        if records is None:
            records = doc if isinstance(doc, list) else [doc]
        text = to_csv(records, columns) if fmt == "csv" else to_jsonl(records)
    out = getattr(args, "out", None)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- subcommands -------------------------------------------------------------------


def cmd_sample(args) -> int:
    cfg = _config(args)
    g = _grammar(args)
    outcomes, discarded = sample_many(g, args.n, cfg.seed, args.max_expansions, cfg.jobs)
    records = []
    for i, o in enumerate(outcomes):
        rec = {
            "index": i,
            "sentence": " ".join(o.sentence),
            "probability": o.probability,
            "log_probability": o.log_probability,
            "height": o.height,
        }
        if args.canonical:
            rec["canonical"] = canonicalize(tree_to_expression(o.tree, g)).key
        records.append(rec)
    doc = {"seed": cfg.seed, "n": args.n, "discarded": discarded, "samples": records}
    _emit(args, doc, records)
    return EXIT_OK


def cmd_count(args) -> int:
    g = _grammar(args)
    symbol = args.symbol or g.start
    if symbol not in g.nonterminals and symbol not in g.terminals:
        raise GrammarError(f"unknown symbol {symbol!r}")
    table = count_table(g, args.height)
    lo = 0 if args.table else args.height
    records = [
        {"symbol": symbol, "height": h, "n": exact_str(table.n(symbol, h)), "N": exact_str(table.N(symbol, h))}
        for h in range(lo, args.height + 1)
    ]
    _emit(args, records if args.table else records[0], records)
    return EXIT_OK


def cmd_coverage(args) -> int:
    g = _grammar(args)
    symbol = args.symbol or g.start
    if symbol not in g.nonterminals and symbol not in g.terminals:
        raise GrammarError(f"unknown symbol {symbol!r}")
    table = coverage_table(g, args.height)[symbol]
    lo = 0 if args.table else args.height
    records = [{"symbol": symbol, "height": h, "coverage": table[h]} for h in range(lo, args.height + 1)]
    _emit(args, records if args.table else records[0], records)
    return EXIT_OK


def _parse_target(g: Pcfg, text: str, top_k: int):
    tokens = tokenize(literals_to_constant(text, g), g)
    if not tokens:
        raise NotInLanguage(f"empty expression {text!r}")
    result = parse(g, tokens, top_k)
    if not result.trees:
        raise NotInLanguage(f"{text!r} is not in the grammar's language")
    return result


def cmd_parse_prob(args) -> int:
    g = _grammar(args)
    result = _parse_target(g, args.expr, args.top_k)
    tree, p = result.trees[0]
    doc = {
        "expression": args.expr,
        "p_tilde": p,
        "log_p_tilde": math.log(p) if p > 0 else None,
        "height": tree_height(tree),
        "n_parses": len(result.trees),
        "inside_probability": result.inside_probability,
        "parses": [{"probability": q, "height": tree_height(t)} for t, q in result.trees],
    }
    if result.inside_probability < p * (1 - 1e-9):
        raise InvariantViolation("inside probability below the best parse")
    _emit(args, doc, [{k: v for k, v in doc.items() if k != "parses"}])
    return EXIT_OK


def cmd_expected(args) -> int:
    if args.manifest:
        table = emit_expected_vs_samples(load_manifest(args.manifest))
        columns = [
            "task", "expression", "p_uniform", "p_biased", "height_uniform", "height_biased",
            "E_uniform", "E_biased", "E_cfg_log10", "E_cfg", "reduction", "error",
        ]
        _emit(args, table, table["rows"], columns)
        if args.curves:
            Path(args.curves).write_text(to_csv(curve_records(table["curves"], "log10_n")))
        return EXIT_OK
    if not args.expr or not args.grammar:
        raise UsageError("expected needs --grammar and --expr, or --manifest")
    g = _grammar(args)
    result = _parse_target(g, args.expr, 1)
    tree, p = result.trees[0]
    h = tree_height(tree)
    doc: dict[str, Any] = {"expression": args.expr, "p_tilde": p, "height": h}
    if args.deterministic:
        e = expected_samples_cfg(g, h)
        doc.update({"E_cfg": exact_str(e.value), "E_cfg_log10": e.log10})
    else:
        doc["E_pcfg"] = expected_samples_pcfg(p)
    _emit(args, doc)
    return EXIT_OK


def cmd_discover(args) -> int:
    cfg = _config(args, n_samples=args.n)
    d = read_dataset(args.data, args.target)
    g = _grammar(args, d.features)
    result = mc_gbed(g, d, cfg.discovery_config(0))
    if sum(c.sample_multiplicity for c in result.candidates) != result.n_raw_samples:
        raise InvariantViolation("sample multiplicities do not add up to the sample count")
    row = run_report(result, args.target, 0, None, include_time=args.timing)
    row["seed"] = cfg.seed
    row["candidates"] = [
        {
            "key": c.key,
            "probability": c.generation_probability,
            "multiplicity": c.sample_multiplicity,
            "n_parameters": c.n_parameters,
            "params": c.params,
            "error": c.error,
            "fitted": c.fitted,
        }
        for c in result.candidates
    ]
    row["success_threshold"] = cfg.success_threshold
    _emit(args, row, row["candidates"])
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _config(args, n_samples=args.n, runs=args.runs, grammar=args.grammar)
    tasks = load_manifest(args.manifest)
    if args.limit:
        tasks = tasks[: args.limit]
    report = run_benchmark(tasks, cfg, progress=(lambda t: print(f"task {t}", file=sys.stderr)) if args.verbose else None)
    try:
        validate_report(report)
    except Exception as exc:  # schema drift is a bug, not a data problem
        raise InvariantViolation(f"report does not match schema: {exc}") from None
    _emit(args, report, report["rows"])
    if args.curves:
        Path(args.curves).write_text(to_csv(curve_records(report["curves"], "n")))
    return EXIT_OK


def cmd_resample(args) -> int:
    tasks = []
    for path in args.runs:
        doc = json.loads(Path(path).read_text())
        if "candidates" not in doc:
            raise DatasetError(f"{path}: no candidate list (produce it with the discover subcommand)")
        thr = doc.get("success_threshold", 1e-9)
        tasks.append(
            [(c["probability"], c["error"] is not None and c["error"] < thr) for c in doc["candidates"]]
        )
    cfg = _config(args)
    curve = resample_success_curve(tasks, args.repeats, cfg.seed)
    if args.points:
        sizes = log_grid(0, math.log10(len(curve)), args.points) if len(curve) > 1 else [1]
    else:
        sizes = range(1, len(curve) + 1)
    records = [{"sample_size": n, "avg_success_rate": float(curve[n - 1])} for n in sizes if n <= len(curve)]
    if args.format == "json":
        _emit(args, {"repeats": args.repeats, "seed": cfg.seed, "curve": records})
    else:
        _emit(args, records)
    return EXIT_OK


# -- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master random seed")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes")
    common.add_argument("--format", choices=("json", "csv", "jsonl"), default=argparse.SUPPRESS)
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat YAML run configuration")
    common.add_argument("--out", default=argparse.SUPPRESS, help="write output here instead of stdout")

    gram = argparse.ArgumentParser(add_help=False)
    gram.add_argument("--grammar", required=True, help=f"grammar file or builtin ({', '.join(BUILTIN_GRAMMARS)})")
    gram.add_argument("--variables", help="comma-separated variables for builtin grammars")
    gram.add_argument("--linear-p", type=float, default=0.5, help="recursion probability of the linear grammar")

    p = _Parser(prog="pcfg-discovery", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("sample", parents=[common, gram], help="draw parse trees")
    s.add_argument("--n", type=int, default=10)
    s.add_argument("--max-expansions", type=int, default=1000)
    s.add_argument("--canonical", action="store_true", help="add canonical expression keys")
    s.set_defaults(func=cmd_sample)

    for name, func, text in (("count", cmd_count, "count parse trees"), ("coverage", cmd_coverage, "coverage by height")):
        c = sub.add_parser(name, parents=[common, gram], help=text)
        c.add_argument("--symbol")
        c.add_argument("--height", type=int, required=True)
        c.add_argument("--table", action="store_true", help="emit every height up to --height")
        c.set_defaults(func=func)

    pp = sub.add_parser("parse-prob", parents=[common, gram], help="probability of a target expression")
    pp.add_argument("--expr", required=True)
    pp.add_argument("--top-k", type=int, default=4)
    pp.set_defaults(func=cmd_parse_prob)

    e = sub.add_parser("expected", parents=[common], help="expected number of samples")
    e.add_argument("--grammar")
    e.add_argument("--variables")
    e.add_argument("--linear-p", type=float, default=0.5)
    e.add_argument("--expr")
    e.add_argument("--deterministic", action="store_true", help="uniform enumeration count instead of 1/p")
    e.add_argument("--manifest", help="emit the uniform vs biased table for a manifest")
    e.add_argument("--curves", help="CSV file for ratio(n) curves (with --manifest)")
    e.set_defaults(func=cmd_expected)

    d = sub.add_parser("discover", parents=[common], help="run equation discovery on a CSV dataset")
    d.add_argument("--grammar", default="uniform_universal", help="grammar file or builtin (default: uniform_universal)")
    d.add_argument("--variables", help="variables for builtin grammars (default: dataset columns)")
    d.add_argument("--linear-p", type=float, default=0.5)
    d.add_argument("--data", required=True)
    d.add_argument("--target", required=True)
    d.add_argument("--n", type=int, default=None, help="number of sampled candidates")
    d.add_argument("--timing", action="store_true", help="include wall time (output no longer reproducible)")
    d.set_defaults(func=cmd_discover)

    b = sub.add_parser("benchmark", parents=[common], help="run a benchmark manifest")
    b.add_argument("--manifest", default="easy", help="bundled name (easy, main, extended) or path")
    b.add_argument("--grammar", default=None)
    b.add_argument("--n", type=int, default=None)
    b.add_argument("--runs", type=int, default=None)
    b.add_argument("--limit", type=int, default=0, help="only the first N tasks")
    b.add_argument("--curves", help="CSV file for success and ratio curves")
    b.add_argument("--verbose", action="store_true")
    b.set_defaults(func=cmd_benchmark)

    r = sub.add_parser("resample", parents=[common], help="resampled success curve from discover outputs")
    r.add_argument("runs", nargs="+", help="JSON files written by discover")
    r.add_argument("--repeats", type=int, default=100)
    r.add_argument("--points", type=int, default=0, help="log-spaced grid size (0 = every size)")
    r.set_defaults(func=cmd_resample)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "format"):
        args.format = "csv" if args.command == "resample" else "json"
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"pcfg-discovery: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"pcfg-discovery: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"pcfg-discovery: {exc}", file=sys.stderr)
        return EXIT_DATA
    except InvariantViolation as exc:
        print(f"pcfg-discovery: internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # anything unexpected is a bug on our side
        print(f"pcfg-discovery: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
