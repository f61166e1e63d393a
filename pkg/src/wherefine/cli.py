"""Command-line front end.

Subcommands: exec (run queries), explain (token/span attributions),
refine (correct WHERE triples), eval (accuracy report), ping (remote
scorer health). Exit status 0 on success, 1 on data-level failures,
2 on usage or I/O failures. Output depends only on inputs and seeds.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import nullcontext

from .dataset import DatasetError, TableStore, load_examples, load_tables
from .engine import (QueryFormatError, RuleViolationError, execute,
                     query_from_record)
from .explain import ExplainConfig, ExplainError, explain, explain_spans
from .metrics import MetricsError, evaluate, render_report
from .refine import (CandidateTriple, FusionConfig, RefineConfig, RefineError,
                     fuse_candidates, refine_where_clause)
from .scorer import (FallbackScorer, LexicalScorer, MockScorer, RemoteScorer,
                     ScorerError, TransportError, target_for)

OK, DATA_FAILURE, USAGE_FAILURE = 0, 1, 2


class UsageFailure(Exception):
    """Bad flags, unreadable files: exit status 2."""


def _add_explain_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--samples", type=int, default=1000,
                        help="perturbations per surrogate fit")
    parser.add_argument("--kernel-width", type=float, default=25.0)
    parser.add_argument("--lambda", dest="ridge_lambda", type=float, default=1e-3,
                        help="ridge penalty on the surrogate weights")


def _add_scorer_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scorer", required=True,
                        help="lexical | mock:FIXTURE.json | remote:URL")
    parser.add_argument("--fallback-lexical", action="store_true",
                        help="fall back to the lexical scorer when the remote one fails")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wherefine")
    commands = parser.add_subparsers(dest="command", required=True)

    p_exec = commands.add_parser("exec", help="execute canonical queries")
    p_exec.add_argument("--tables", required=True)
    source = p_exec.add_mutually_exclusive_group(required=True)
    source.add_argument("--query", help="one JSON query record with a table_id")
    source.add_argument("--pred", help="line-delimited query records")
    p_exec.add_argument("--out")

    p_explain = commands.add_parser("explain", help="token and span attributions")
    p_explain.add_argument("--tables", required=True)
    _add_scorer_flags(p_explain)
    p_explain.add_argument("--question", required=True)
    p_explain.add_argument("--table-id", required=True)
    p_explain.add_argument("--column", required=True,
                           help="column index or column name")
    p_explain.add_argument("--span", action="append", default=[],
                           metavar="START:END", help="word span to hold atomic")
    p_explain.add_argument("--format", choices=("text", "json"), default="text")
    p_explain.add_argument("--out")
    _add_explain_flags(p_explain)

    p_refine = commands.add_parser("refine", help="correct WHERE condition triples")
    p_refine.add_argument("--tables", required=True)
    p_refine.add_argument("--candidates", required=True,
                          help="line-delimited candidate records")
    _add_scorer_flags(p_refine)
    p_refine.add_argument("--out", help="refined candidate records (default stdout)")
    p_refine.add_argument("--trace-out", help="full per-triple decision traces")
    p_refine.add_argument("--pred-out", help="refined prediction records")
    p_refine.add_argument("--threshold", type=float, default=0.5,
                          help="confidence threshold for candidate fusion")
    p_refine.add_argument("--window", type=int, default=1,
                          help="words around the value to widen candidate spans")
    p_refine.add_argument("--max-eg-iterations", type=int, default=8)
    _add_explain_flags(p_refine)

    p_eval = commands.add_parser("eval", help="accuracy report")
    p_eval.add_argument("--tables", required=True)
    p_eval.add_argument("--data", required=True, help="gold examples")
    p_eval.add_argument("--pred", required=True, help="prediction records")
    p_eval.add_argument("--format", choices=("text", "json"), default="text")
    p_eval.add_argument("--out")

    p_ping = commands.add_parser("ping", help="remote scorer health check")
    p_ping.add_argument("--endpoint", required=True)

    return parser


def _open_out(path: str | None):
    if path is None:
        return nullcontext(sys.stdout)
    try:
        return open(path, "w", encoding="utf-8")
    except OSError as err:
        raise UsageFailure(f"cannot write {path}: {err}") from None


def _load_store(path: str) -> TableStore:
    try:
        return load_tables(path)
    except DatasetError as err:
        raise UsageFailure(str(err)) from None


def _read_jsonl(path: str):
    try:
        with open(path, encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as err:
        raise UsageFailure(f"cannot read {path}: {err}") from None
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append((lineno, json.loads(line)))
        except json.JSONDecodeError as err:
            raise UsageFailure(f"{path}:{lineno}: invalid JSON ({err.msg})") from None
    return records


def _make_scorer(spec: str, store: TableStore, fallback_lexical: bool):
    if spec == "lexical":
        return LexicalScorer(store)
    if spec.startswith("mock:"):
        try:
            return MockScorer.from_file(spec[len("mock:"):])
        except ScorerError as err:
            raise UsageFailure(str(err)) from None
    if spec.startswith("remote:"):
        remote = RemoteScorer(spec[len("remote:"):])
        if fallback_lexical:
            return FallbackScorer(remote, LexicalScorer(store))
        return remote
    raise UsageFailure(f"unknown scorer {spec!r}; use lexical, mock:PATH or remote:URL")


def _explain_config(args: argparse.Namespace) -> ExplainConfig:
    try:
        return ExplainConfig(sample_count=args.samples, kernel_width=args.kernel_width,
                             ridge_lambda=args.ridge_lambda, seed=args.seed)
    except ExplainError as err:
        raise UsageFailure(str(err)) from None


def _result_line(result) -> str:
    if result.kind == "scalar":
        return json.dumps(result.scalar)
    return json.dumps(result.rows)


def cmd_exec(args: argparse.Namespace) -> int:
    store = _load_store(args.tables)
    if args.query is not None:
        try:
            records = [(0, json.loads(args.query))]
        except json.JSONDecodeError as err:
            raise UsageFailure(f"--query is not valid JSON ({err.msg})") from None
        source = "--query"
    else:
        records = _read_jsonl(args.pred)
        source = args.pred
    failures = 0
    with _open_out(args.out) as out:
        for lineno, record in records:
            where = f"{source}:{lineno}" if lineno else source
            try:
                if not isinstance(record, dict):
                    raise QueryFormatError("expected a query object")
                table_id = record.get("table_id")
                if not isinstance(table_id, str):
                    raise QueryFormatError("query record needs a table_id")
                query = query_from_record(record, context="query")
                result = execute(query, store[table_id])
            except (QueryFormatError, RuleViolationError, DatasetError) as err:
                print(f"{where}: {err}", file=sys.stderr)
                failures += 1
                continue
            print(_result_line(result), file=out)
    return DATA_FAILURE if failures else OK


def _resolve_column(table, spec: str) -> int:
    try:
        index = int(spec)
    except ValueError:
        wanted = spec.casefold()
        for i, name in enumerate(table.header):
            if name.casefold() == wanted:
                return i
        raise UsageFailure(f"column {spec!r} not found in table '{table.id}'") from None
    if not 0 <= index < table.arity:
        raise UsageFailure(f"column {index} out of range for table '{table.id}'")
    return index


def _parse_span(text: str) -> tuple[int, int]:
    try:
        start, end = text.split(":")
        return int(start), int(end)
    except ValueError:
        raise UsageFailure(f"span {text!r} must look like START:END") from None


def cmd_explain(args: argparse.Namespace) -> int:
    store = _load_store(args.tables)
    try:
        table = store[args.table_id]
    except DatasetError as err:
        raise UsageFailure(str(err)) from None
    column = _resolve_column(table, args.column)
    scorer = _make_scorer(args.scorer, store, args.fallback_lexical)
    config = _explain_config(args)
    try:
        target = target_for(table, column)
        explanation = explain(args.question, scorer, target, config)
        spans = [_parse_span(s) for s in args.span]
        stats = explain_spans(args.question, scorer, target, spans, config) if spans else []
    except (ExplainError, ScorerError, TransportError) as err:
        print(f"explain failed: {err}", file=sys.stderr)
        return DATA_FAILURE
    with _open_out(args.out) as out:
        if args.format == "json":
            record = explanation.to_record()
            if stats:
                record["spans"] = [
                    {"text": s.text, "start": s.start, "end": s.end,
                     "width": s.width, "contribution": s.contribution}
                    for s in stats
                ]
            print(json.dumps(record), file=out)
        else:
            for unit, weight in zip(explanation.units, explanation.weights):
                print(f"{unit}\t{weight:.6f}", file=out)
            for stat in stats:
                print(f"span {stat.start}:{stat.end}\t{stat.text}\t"
                      f"{stat.contribution:.6f}", file=out)
    return OK


def _triples_from_record(record: dict, context: str,
                         fusion: FusionConfig) -> list[CandidateTriple]:
    if "paths" in record:
        paths = record["paths"]
        if not isinstance(paths, list) or not all(isinstance(p, list) for p in paths):
            raise RefineError(f"{context}: paths must be a list of triple lists")
        parsed = [
            [CandidateTriple.from_record(t, context=f"{context} path {i} triple {j}")
             for j, t in enumerate(path)]
            for i, path in enumerate(paths)
        ]
        return fuse_candidates(parsed, fusion)
    triples = record.get("triples")
    if not isinstance(triples, list):
        raise RefineError(f"{context}: needs a triples list or a paths list")
    return [CandidateTriple.from_record(t, context=f"{context} triple {j}")
            for j, t in enumerate(triples)]


def cmd_refine(args: argparse.Namespace) -> int:
    store = _load_store(args.tables)
    scorer = _make_scorer(args.scorer, store, args.fallback_lexical)
    try:
        fusion = FusionConfig(threshold=args.threshold, window=args.window,
                              max_eg_iterations=args.max_eg_iterations)
    except RefineError as err:
        raise UsageFailure(str(err)) from None
    config = RefineConfig(fusion=fusion, explain=_explain_config(args))
    records = _read_jsonl(args.candidates)
    failures = 0
    with _open_out(args.out) as out, \
            _open_out(args.trace_out) if args.trace_out else nullcontext(None) as trace_out, \
            _open_out(args.pred_out) if args.pred_out else nullcontext(None) as pred_out:
        for done, (lineno, record) in enumerate(records, 1):
            where = f"{args.candidates}:{lineno}"
            try:
                if not isinstance(record, dict):
                    raise RefineError("expected a candidate object")
                question = record.get("question")
                table_id = record.get("table_id")
                if not isinstance(question, str) or not question.strip():
                    raise RefineError("candidate record needs a question")
                if not isinstance(table_id, str) or table_id not in store:
                    raise RefineError(f"unknown table id {table_id!r}")
                table = store[table_id]
                triples = _triples_from_record(record, where, fusion)
                outcomes, connector = refine_where_clause(
                    triples, table, question, scorer, config)
            except (RefineError, ExplainError, ScorerError, TransportError,
                    QueryFormatError) as err:
                print(f"{where}: {err}", file=sys.stderr)
                failures += 1
                continue
            sel = record.get("sel", 0)
            agg = record.get("agg", 0)
            refined = {
                "question": question,
                "table_id": table_id,
                "sel": sel,
                "agg": agg,
                "triples": [
                    {"col": o.final.col, "op": int(o.final.op), "value": o.final.value,
                     "confidence": o.input.confidence}
                    for o in outcomes
                ],
            }
            print(json.dumps(refined), file=out)
            if trace_out is not None:
                for outcome in outcomes:
                    trace_record = outcome.to_record(question=question)
                    trace_record["table_id"] = table_id
                    print(json.dumps(trace_record), file=trace_out)
            if pred_out is not None:
                prediction = {
                    "table_id": table_id,
                    "sel": sel,
                    "agg": agg,
                    "conds": [o.final.as_list() for o in outcomes],
                    "connector": connector,
                }
                print(json.dumps(prediction), file=pred_out)
            if done % 50 == 0:
                print(f"refined {done}/{len(records)}", file=sys.stderr)
    return DATA_FAILURE if failures else OK


def cmd_eval(args: argparse.Namespace) -> int:
    store = _load_store(args.tables)
    try:
        gold = load_examples(args.data, store)
    except DatasetError as err:
        raise UsageFailure(str(err)) from None
    records = _read_jsonl(args.pred)
    predictions, ids = [], []
    for lineno, record in records:
        try:
            predictions.append(query_from_record(record, context=f"{args.pred}:{lineno}"))
        except QueryFormatError as err:
            print(str(err), file=sys.stderr)
            return DATA_FAILURE
        identifier = record.get("id") if isinstance(record, dict) else None
        ids.append(str(identifier) if identifier is not None else str(len(ids)))
    try:
        report = evaluate(predictions, gold, store, ids=ids)
    except (MetricsError, DatasetError) as err:
        print(str(err), file=sys.stderr)
        return DATA_FAILURE
    with _open_out(args.out) as out:
        print(render_report(report, fmt=args.format), file=out)
    return OK


def cmd_ping(args: argparse.Namespace) -> int:
    scorer = RemoteScorer(args.endpoint)
    try:
        body = scorer.health()
    except TransportError as err:
        print(str(err), file=sys.stderr)
        return DATA_FAILURE
    finally:
        scorer.close()
    print(json.dumps(body))
    return OK


_COMMANDS = {
    "exec": cmd_exec,
    "explain": cmd_explain,
    "refine": cmd_refine,
    "eval": cmd_eval,
    "ping": cmd_ping,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageFailure as err:
        print(str(err), file=sys.stderr)
        return USAGE_FAILURE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
