"""Canonical single-table queries: validation, execution and equality.

Queries follow the public WikiSQL encoding: an aggregate code, a selected
column index and a conjunctive list of [column, operator, value] conditions
with operators limited to =, > and <.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import TYPE_CHECKING

from .textnorm import normalize, parse_number

if TYPE_CHECKING:
    from .dataset import Table

TEXT = "text"
REAL = "real"


class Agg(IntEnum):
    NONE = 0
    MAX = 1
    MIN = 2
    COUNT = 3
    SUM = 4
    AVG = 5


class Op(IntEnum):
    EQ = 0
    GT = 1
    LT = 2


AGG_NAMES = ("", "MAX", "MIN", "COUNT", "SUM", "AVG")
OP_SYMBOLS = ("=", ">", "<")


class QueryFormatError(ValueError):
    """A query record does not follow the canonical encoding."""


@dataclass(frozen=True)
class Condition:
    """One WHERE condition. The value is kept as text; raw_value preserves
    the original JSON scalar so records round-trip exactly."""

    col: int
    op: Op
    value: str
    raw_value: object = None

    def __post_init__(self) -> None:
        if self.raw_value is None:
            object.__setattr__(self, "raw_value", self.value)

    @property
    def number(self) -> float | None:
        return parse_number(self.value)

    def as_list(self) -> list:
        return [self.col, int(self.op), self.raw_value]


@dataclass
class CanonicalQuery:
    sel: int
    agg: Agg
    conds: list[Condition] = field(default_factory=list)
    connector: str = "AND"

    def to_record(self) -> dict:
        return {
            "sel": self.sel,
            "agg": int(self.agg),
            "conds": [c.as_list() for c in self.conds],
        }


def query_from_record(record: dict, context: str = "query") -> CanonicalQuery:
    """Build a CanonicalQuery from a WikiSQL-shaped ``sql`` record."""
    if not isinstance(record, dict):
        raise QueryFormatError(f"{context}: expected an object, got {type(record).__name__}")
    try:
        sel = record["sel"]
        agg = record["agg"]
        conds = record["conds"]
    except KeyError as missing:
        raise QueryFormatError(f"{context}: missing field {missing}") from None
    if not isinstance(sel, int) or isinstance(sel, bool) or sel < 0:
        raise QueryFormatError(f"{context}: sel must be a non-negative integer")
    if not isinstance(agg, int) or isinstance(agg, bool) or not 0 <= agg <= 5:
        raise QueryFormatError(f"{context}: agg must be an integer in 0..5")
    if not isinstance(conds, list):
        raise QueryFormatError(f"{context}: conds must be a list")
    parsed: list[Condition] = []
    for i, cond in enumerate(conds):
        if not isinstance(cond, (list, tuple)) or len(cond) != 3:
            raise QueryFormatError(f"{context}: condition {i} must be [col, op, value]")
        col, op, value = cond
        if not isinstance(col, int) or isinstance(col, bool) or col < 0:
            raise QueryFormatError(f"{context}: condition {i} column must be a non-negative integer")
        if not isinstance(op, int) or isinstance(op, bool) or not 0 <= op <= 2:
            raise QueryFormatError(f"{context}: condition {i} operator must be 0 (=), 1 (>) or 2 (<)")
        if not isinstance(value, (str, int, float)) or isinstance(value, bool):
            raise QueryFormatError(f"{context}: condition {i} value must be a string or number")
        text = str(value)
        if not text.strip():
            raise QueryFormatError(f"{context}: condition {i} value must be non-empty")
        parsed.append(Condition(col=col, op=Op(op), value=text, raw_value=value))
    return CanonicalQuery(sel=sel, agg=Agg(agg), conds=parsed)


class ViolationKind(str, Enum):
    AGG_ON_TEXT = "agg_on_text"
    COMPARISON_ON_TEXT = "comparison_on_text"
    NON_NUMERIC_VALUE = "non_numeric_value"
    COMPARISON_NEEDS_NUMBER = "comparison_needs_number"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    message: str
    cond_index: int | None = None


class RuleViolationError(Exception):
    """Raised when a rule-invalid query reaches execution."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(v.message for v in violations))


def validate_syntax(query: CanonicalQuery, table: Table) -> list[Violation]:
    """Return every type-compatibility violation in *query* against *table*.

    Checked rules: SUM/AVG need a numeric select column; > and < need a
    numeric column and a numeric value; any condition on a real column
    needs a numeric value.
    """
    violations: list[Violation] = []
    if query.agg in (Agg.SUM, Agg.AVG) and not table.is_real(query.sel):
        violations.append(Violation(
            kind=ViolationKind.AGG_ON_TEXT,
            message=f"{AGG_NAMES[query.agg]} needs a numeric column, but "
                    f"'{table.header[query.sel]}' is text",
        ))
    for i, cond in enumerate(query.conds):
        col_name = table.header[cond.col]
        comparison = cond.op in (Op.GT, Op.LT)
        if comparison and not table.is_real(cond.col):
            violations.append(Violation(
                kind=ViolationKind.COMPARISON_ON_TEXT,
                message=f"condition {i}: '{OP_SYMBOLS[cond.op]}' on text column '{col_name}'",
                cond_index=i,
            ))
        if table.is_real(cond.col) and cond.number is None:
            violations.append(Violation(
                kind=ViolationKind.NON_NUMERIC_VALUE,
                message=f"condition {i}: value {cond.value!r} does not parse as a number "
                        f"for real column '{col_name}'",
                cond_index=i,
            ))
        if comparison and cond.number is None:
            violations.append(Violation(
                kind=ViolationKind.COMPARISON_NEEDS_NUMBER,
                message=f"condition {i}: '{OP_SYMBOLS[cond.op]}' needs a numeric value, "
                        f"got {cond.value!r}",
                cond_index=i,
            ))
    return violations


@dataclass
class ResultSet:
    """Execution result. kind is 'rows' when agg is NONE, else 'scalar'.

    observable is the comparison form used by execution_equal: the scalar
    for aggregates, a multiset of canonicalized selected cells otherwise.
    """

    kind: str
    rows: list
    scalar: object
    matched_count: int
    observable: object = None


def is_empty(result: ResultSet) -> bool:
    """True when no row satisfied the conditions (COUNT 0 included)."""
    return result.matched_count == 0


def _condition_holds(cond: Condition, table: Table, row: int) -> bool:
    if table.is_real(cond.col):
        cell = table.cell_number(row, cond.col)
        if cell is None:
            return False
        target = cond.number
        if target is None:
            return False
        if cond.op is Op.EQ:
            return cell == target
        if cond.op is Op.GT:
            return cell > target
        return cell < target
    # Text columns support equality only; validate_syntax rejects the rest.
    return normalize(table.cell_text(row, cond.col)) == normalize(cond.value)


def _canonical_cell(table: Table, row: int, col: int) -> object:
    if table.is_real(col):
        number = table.cell_number(row, col)
        if number is not None:
            return number
    return normalize(table.cell_text(row, col))


def execute(query: CanonicalQuery, table: Table) -> ResultSet:
    """Run *query* against *table*.

    Raises RuleViolationError for rule-invalid queries and QueryFormatError
    for out-of-range column indices. Empty aggregates: COUNT 0, SUM 0,
    MAX/MIN/AVG None.
    """
    arity = table.arity
    if not 0 <= query.sel < arity:
        raise QueryFormatError(f"select column {query.sel} out of range for table '{table.id}'")
    for i, cond in enumerate(query.conds):
        if not 0 <= cond.col < arity:
            raise QueryFormatError(
                f"condition {i} column {cond.col} out of range for table '{table.id}'")
    violations = validate_syntax(query, table)
    if violations:
        raise RuleViolationError(violations)

    matched = [
        row for row in range(table.row_count)
        if all(_condition_holds(cond, table, row) for cond in query.conds)
    ]

    if query.agg is Agg.NONE:
        rows = [table.rows[row][query.sel] for row in matched]
        observable = Counter(_canonical_cell(table, row, query.sel) for row in matched)
        return ResultSet(kind="rows", rows=rows, scalar=None,
                         matched_count=len(matched), observable=observable)

    if query.agg is Agg.COUNT:
        scalar: object = len(matched)
    elif table.is_real(query.sel):
        numbers = [n for row in matched
                   if (n := table.cell_number(row, query.sel)) is not None]
        if query.agg is Agg.SUM:
            scalar = sum(numbers)
        elif query.agg is Agg.AVG:
            scalar = sum(numbers) / len(numbers) if numbers else None
        elif query.agg is Agg.MAX:
            scalar = max(numbers) if numbers else None
        else:
            scalar = min(numbers) if numbers else None
    else:
        # MAX/MIN over a text column: lexicographic on the normalized form.
        values = [normalize(table.cell_text(row, query.sel)) for row in matched]
        if not values:
            scalar = None
        elif query.agg is Agg.MAX:
            scalar = max(values)
        elif query.agg is Agg.MIN:
            scalar = min(values)
        else:
            scalar = None
    return ResultSet(kind="scalar", rows=[], scalar=scalar,
                     matched_count=len(matched), observable=scalar)


def _condition_key(cond: Condition, table: Table) -> tuple:
    if 0 <= cond.col < table.arity and table.is_real(cond.col):
        number = cond.number
        if number is not None:
            return (cond.col, int(cond.op), "num", number)
    return (cond.col, int(cond.op), "text", normalize(cond.value))


def logical_form_equal(a: CanonicalQuery, b: CanonicalQuery, table: Table) -> bool:
    """Structural equality: same select, same aggregate, same conditions as
    a multiset with values normalized per the condition column's type."""
    if a.sel != b.sel or a.agg != b.agg:
        return False
    return (Counter(_condition_key(c, table) for c in a.conds)
            == Counter(_condition_key(c, table) for c in b.conds))


def execution_equal(a: CanonicalQuery, b: CanonicalQuery, table: Table) -> bool:
    """True when both queries produce the same observable result."""
    return execute(a, table).observable == execute(b, table).observable


def render_query(query: CanonicalQuery, table: Table) -> str:
    """Render the canonical one-line form, e.g.
    SELECT COUNT(casualties) FROM t WHERE location = kabul area."""
    col = table.header[query.sel] if 0 <= query.sel < table.arity else f"col{query.sel}"
    head = f"{AGG_NAMES[query.agg]}({col})" if query.agg is not Agg.NONE else col
    text = f"SELECT {head} FROM {table.id}"
    if query.conds:
        parts = []
        for cond in query.conds:
            name = table.header[cond.col] if 0 <= cond.col < table.arity else f"col{cond.col}"
            parts.append(f"{name} {OP_SYMBOLS[cond.op]} {cond.value}")
        text += " WHERE " + " AND ".join(parts)
    return text
