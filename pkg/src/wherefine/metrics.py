"""Logical-form and execution accuracy with component breakdowns.

A prediction matches in logical form when select, aggregate and the
condition multiset agree after value normalization; it matches in
execution when both queries produce the same observable result. Structural
components mirror the usual decomposition: select column, aggregate, and
the column / operator / value / count projections of the WHERE clause.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field

from .dataset import Example, Table, TableStore
from .engine import (CanonicalQuery, execution_equal, logical_form_equal,
                     validate_syntax)
from .textnorm import normalize

COMPONENT_KEYS = ("S_col", "S_agg", "W_col", "W_op", "W_val", "W_num")


class MetricsError(Exception):
    """Evaluation inputs that cannot be aligned."""


@dataclass
class ExampleScore:
    id: str
    lf_match: bool
    ex_match: bool
    components: dict[str, bool]

    def to_record(self) -> dict:
        return {"id": self.id, "lf_match": self.lf_match, "ex_match": self.ex_match,
                "components": dict(self.components)}


@dataclass
class EvalReport:
    n_examples: int
    acc_lf: float
    acc_ex: float
    components: dict[str, float]
    per_example: list[ExampleScore] = field(default_factory=list)

    def to_record(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "acc_lf": self.acc_lf,
            "acc_ex": self.acc_ex,
            "components": dict(self.components),
            "per_example": [score.to_record() for score in self.per_example],
        }


def report_from_record(record: dict) -> EvalReport:
    per_example = [
        ExampleScore(id=str(row["id"]), lf_match=bool(row["lf_match"]),
                     ex_match=bool(row["ex_match"]),
                     components={k: bool(v) for k, v in row["components"].items()})
        for row in record.get("per_example", [])
    ]
    return EvalReport(
        n_examples=int(record["n_examples"]),
        acc_lf=float(record["acc_lf"]),
        acc_ex=float(record["acc_ex"]),
        components={k: float(v) for k, v in record["components"].items()},
        per_example=per_example,
    )


def _value_key(cond, table: Table) -> object:
    if 0 <= cond.col < table.arity and table.is_real(cond.col):
        number = cond.number
        if number is not None:
            return number
    return normalize(cond.value)


def _in_range(query: CanonicalQuery, table: Table) -> bool:
    if not 0 <= query.sel < table.arity:
        return False
    return all(0 <= cond.col < table.arity for cond in query.conds)


def score_example(prediction: CanonicalQuery, gold: Example, table: Table,
                  example_id: str) -> ExampleScore:
    """Score one prediction. Rule-invalid or out-of-range predictions count
    as logical-form and execution mismatches; the structural components are
    still reported."""
    g = gold.gold
    components = {
        "S_col": prediction.sel == g.sel,
        "S_agg": prediction.agg == g.agg,
        "W_col": Counter(c.col for c in prediction.conds) == Counter(c.col for c in g.conds),
        "W_op": (Counter(int(c.op) for c in prediction.conds)
                 == Counter(int(c.op) for c in g.conds)),
        "W_val": (Counter(_value_key(c, table) for c in prediction.conds)
                  == Counter(_value_key(c, table) for c in g.conds)),
        "W_num": len(prediction.conds) == len(g.conds),
    }
    usable = _in_range(prediction, table) and not validate_syntax(prediction, table)
    lf = usable and logical_form_equal(prediction, g, table)
    if not usable:
        ex = False
    elif validate_syntax(g, table):
        # A rule-invalid gold query cannot run; only structural identity
        # can stand in for matching results.
        ex = lf
    else:
        ex = execution_equal(prediction, g, table)
    return ExampleScore(id=example_id, lf_match=lf, ex_match=ex, components=components)


def evaluate(predictions: list[CanonicalQuery], gold: list[Example],
             store: TableStore, ids: list[str] | None = None) -> EvalReport:
    """Score positionally aligned predictions against gold examples."""
    if len(predictions) != len(gold):
        raise MetricsError(f"{len(predictions)} predictions cannot align "
                           f"with {len(gold)} gold examples")
    if ids is not None and len(ids) != len(gold):
        raise MetricsError("ids must align one-to-one with the examples")
    scores = []
    for index, (prediction, example) in enumerate(zip(predictions, gold)):
        table = store[example.table_id]
        example_id = ids[index] if ids is not None else str(index)
        scores.append(score_example(prediction, example, table, example_id))
    n = len(scores)
    if n == 0:
        return EvalReport(n_examples=0, acc_lf=0.0, acc_ex=0.0,
                          components={key: 0.0 for key in COMPONENT_KEYS})
    return EvalReport(
        n_examples=n,
        acc_lf=sum(s.lf_match for s in scores) / n,
        acc_ex=sum(s.ex_match for s in scores) / n,
        components={key: sum(s.components[key] for s in scores) / n
                    for key in COMPONENT_KEYS},
        per_example=scores,
    )


def render_report(report: EvalReport, fmt: str = "text") -> str:
    """Render as an aligned text table (percentages, one decimal) or as a
    JSON record that report_from_record round-trips."""
    if fmt == "json":
        return json.dumps(report.to_record())
    if fmt != "text":
        raise MetricsError(f"unknown report format {fmt!r}")
    if report.n_examples == 0:
        return "n=0 (no examples evaluated)"
    headers = ["n", "Acc_lf", "Acc_ex", *COMPONENT_KEYS]
    values = [str(report.n_examples),
              f"{report.acc_lf * 100:.1f}",
              f"{report.acc_ex * 100:.1f}",
              *(f"{report.components[key] * 100:.1f}" for key in COMPONENT_KEYS)]
    widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
    head = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    body = "  ".join(v.ljust(w) for v, w in zip(values, widths))
    return f"{head}\n{body}"
