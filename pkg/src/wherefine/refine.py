"""WHERE-condition refinement.

Each extracted [column, operator, value] triple is checked and, where the
evidence supports it, corrected: type rules repair impossible operators,
execution probes separate plausible values from dead ones, and surrogate
attributions over the question rank replacement candidates. Text and
numeric columns take different routes; in particular, range comparisons on
numeric columns are never executed, because an empty numeric range is a
legitimate answer rather than an error signal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .engine import (Agg, CanonicalQuery, Condition, Op, ViolationKind,
                     execute, validate_syntax)
from .dataset import Table
from .explain import (ExplainConfig, Explanation, TokenizedText, explain,
                      explain_spans, tokenize)
from .scorer import ScoringTarget
from .textnorm import normalize, numeric_like, parse_number


class RefineError(Exception):
    """Refinement input that cannot be processed."""


class Verdict(str, Enum):
    ACCEPTED_AS_IS = "accepted_as_is"
    VALUE_REPLACED = "value_replaced"
    REJECTED_NO_CANDIDATE = "rejected_no_candidate"


class Rule(str, Enum):
    RULE_VALIDATION = "rule_validation"
    EG_NON_EMPTY = "eg_non_empty"
    EG_EMPTY_LIME_RESCUE = "eg_empty_lime_rescue"
    NUMERIC_DIRECT = "numeric_direct"
    NUMERIC_EQ_EMPTY_ACCEPT = "numeric_eq_empty_accept"


@dataclass(frozen=True)
class CandidateTriple:
    """One extracted condition candidate with the extractor's confidence."""

    col: int
    op: Op
    value: str
    confidence: float = 1.0
    value_token_span: tuple[int, int] | None = None

    def to_record(self) -> dict:
        record = {"col": self.col, "op": int(self.op), "value": self.value,
                  "confidence": self.confidence}
        if self.value_token_span is not None:
            record["span"] = list(self.value_token_span)
        return record

    @classmethod
    def from_record(cls, record: dict, context: str = "triple") -> "CandidateTriple":
        try:
            col = record["col"]
            op = record["op"]
            value = record["value"]
        except (TypeError, KeyError) as missing:
            raise RefineError(f"{context}: missing field {missing}") from None
        if not isinstance(col, int) or isinstance(col, bool) or col < 0:
            raise RefineError(f"{context}: col must be a non-negative integer")
        if not isinstance(op, int) or isinstance(op, bool) or not 0 <= op <= 2:
            raise RefineError(f"{context}: op must be 0 (=), 1 (>) or 2 (<)")
        if not isinstance(value, (str, int, float)) or isinstance(value, bool):
            raise RefineError(f"{context}: value must be a string or number")
        text = str(value)
        if not text.strip():
            raise RefineError(f"{context}: value must be non-empty")
        confidence = record.get("confidence", 1.0)
        if not isinstance(confidence, (int, float)) or isinstance(confidence, bool) \
                or not 0.0 <= float(confidence) <= 1.0:
            raise RefineError(f"{context}: confidence must be a number in [0, 1]")
        span = record.get("span")
        token_span = None
        if span is not None:
            if (not isinstance(span, (list, tuple)) or len(span) != 2
                    or not all(isinstance(x, int) and not isinstance(x, bool) for x in span)
                    or not 0 <= span[0] < span[1]):
                raise RefineError(f"{context}: span must be [start, end] with 0 <= start < end")
            token_span = (span[0], span[1])
        return cls(col=col, op=Op(op), value=text,
                   confidence=float(confidence), value_token_span=token_span)


@dataclass
class TraceStep:
    candidate: str
    decision: str
    contribution: float | None = None
    matched_count: int | None = None

    def to_record(self) -> dict:
        record: dict = {"candidate": self.candidate, "decision": self.decision}
        if self.contribution is not None:
            record["contribution"] = self.contribution
        if self.matched_count is not None:
            record["matched_count"] = self.matched_count
        return record


@dataclass
class RefinementOutcome:
    """Final condition for one input triple, with the decision trail.

    The verdict tracks the fate of the value; an operator repair is
    reported through rule_fired = RULE_VALIDATION and the trace. rule_fired
    is None when the triple passed through without a decisive rule (for
    example an exhausted candidate scan)."""

    input: CandidateTriple
    final: Condition
    verdict: Verdict
    rule_fired: Rule | None
    trace: list[TraceStep] = field(default_factory=list)

    def to_record(self, question: str | None = None) -> dict:
        record = {
            "input_triple": self.input.to_record(),
            "outcome": {"final": self.final.as_list(), "verdict": self.verdict.value},
            "rule_fired": self.rule_fired.value if self.rule_fired else None,
            "trace": [step.to_record() for step in self.trace],
        }
        if question is not None:
            record = {"question": question, **record}
        return record


@dataclass
class FusionConfig:
    threshold: float = 0.5
    window: int = 1
    max_eg_iterations: int = 8

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise RefineError("threshold must be in [0, 1]")
        if self.window < 0:
            raise RefineError("window must be non-negative")
        if self.max_eg_iterations < 1:
            raise RefineError("max_eg_iterations must be at least 1")


@dataclass
class RefineConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    explain: ExplainConfig = field(default_factory=ExplainConfig)


def fuse_candidates(paths: list[list[CandidateTriple]],
                    config: FusionConfig | None = None) -> list[CandidateTriple]:
    """Pick the candidate path with the highest mean confidence over its
    triples at or above the threshold, drop that path's sub-threshold
    triples, and deduplicate identical (col, op, value) triples keeping the
    highest confidence. Ties go to the earlier path."""
    config = config or FusionConfig()
    best: list[CandidateTriple] | None = None
    best_mean = float("-inf")
    for path in paths:
        kept = [t for t in path if t.confidence >= config.threshold]
        if not kept:
            continue
        mean = sum(t.confidence for t in kept) / len(kept)
        if mean > best_mean:
            best, best_mean = kept, mean
    if best is None:
        return []
    fused: dict[tuple[int, int, str], CandidateTriple] = {}
    for triple in best:
        key = (triple.col, int(triple.op), triple.value)
        held = fused.get(key)
        if held is None or triple.confidence > held.confidence:
            fused[key] = triple
    return list(fused.values())


def locate_value_span(question: TokenizedText, value: str) -> tuple[int, int] | None:
    """First word interval whose normalized join equals the normalized
    value, else None."""
    value_keys = [w.key for w in tokenize(value).words] if value.strip() else []
    if not value_keys:
        return None
    keys = [w.key for w in question.words]
    width = len(value_keys)
    for start in range(len(keys) - width + 1):
        if keys[start:start + width] == value_keys:
            return (start, start + width)
    return None


def generate_value_candidates(question: TokenizedText, triple: CandidateTriple,
                              config: FusionConfig | None = None) -> list[tuple[int, int]]:
    """Every contiguous word span inside a window of W words around the
    extracted value's location, with widths up to the value width plus 2W.
    Raises RefineError when the value cannot be located and no span was
    supplied."""
    config = config or FusionConfig()
    span = triple.value_token_span
    if span is not None:
        if not 0 <= span[0] < span[1] <= len(question.words):
            raise RefineError(f"value span {span} out of range for the question")
    else:
        span = locate_value_span(question, triple.value)
        if span is None:
            raise RefineError(f"value {triple.value!r} not located in the question")
    start, end = span
    window = config.window
    lo = max(0, start - window)
    hi = min(len(question.words), end + window)
    max_width = (end - start) + 2 * window
    candidates = [
        (s, e)
        for s in range(lo, hi)
        for e in range(s + 1, min(hi, s + max_width) + 1)
    ]
    return candidates


def _probe_count(cond: Condition, table: Table) -> int:
    probe = CanonicalQuery(sel=cond.col, agg=Agg.COUNT, conds=[cond])
    return execute(probe, table).matched_count


def refine_text_condition(triple: CandidateTriple, table: Table,
                          question: str | TokenizedText, scorer,
                          config: RefineConfig | None = None) -> RefinementOutcome:
    """Refine an equality condition on a text column.

    The extracted value is executed first; a non-empty result is accepted
    unchanged with no surrogate work. On an empty result, candidate spans
    around the value are ranked by atomic-span contribution and executed in
    descending order until one matches rows; if all stay empty the
    top-contribution candidate is kept anyway."""
    config = config or RefineConfig()
    tokenized = question if isinstance(question, TokenizedText) else tokenize(question)
    cond = Condition(col=triple.col, op=Op.EQ, value=triple.value)
    trace: list[TraceStep] = []

    matched = _probe_count(cond, table)
    trace.append(TraceStep(candidate=triple.value, matched_count=matched,
                           decision="execution probe on the extracted value"))
    if matched > 0:
        return RefinementOutcome(input=triple, final=cond,
                                 verdict=Verdict.ACCEPTED_AS_IS,
                                 rule_fired=Rule.EG_NON_EMPTY, trace=trace)

    try:
        spans = generate_value_candidates(tokenized, triple, config.fusion)
    except RefineError as err:
        trace.append(TraceStep(candidate=triple.value,
                               decision=f"passed through unrefined: {err}"))
        return RefinementOutcome(input=triple, final=cond,
                                 verdict=Verdict.ACCEPTED_AS_IS,
                                 rule_fired=None, trace=trace)

    target = ScoringTarget(table_id=table.id, column_index=triple.col,
                           column_name=table.header[triple.col])
    stats = explain_spans(tokenized, scorer, target, spans, config.explain)
    if not stats:
        trace.append(TraceStep(candidate=triple.value,
                               decision="no candidate spans to rank"))
        return RefinementOutcome(input=triple, final=cond,
                                 verdict=Verdict.REJECTED_NO_CANDIDATE,
                                 rule_fired=None, trace=trace)

    original = normalize(triple.value)
    executions = 0
    for stat in stats:
        if normalize(stat.text) == original:
            trace.append(TraceStep(candidate=stat.text, contribution=stat.contribution,
                                   decision="skipped: equals the extracted value, known empty"))
            continue
        if executions >= config.fusion.max_eg_iterations:
            trace.append(TraceStep(candidate=stat.text, contribution=stat.contribution,
                                   decision="iteration budget exhausted"))
            break
        candidate = Condition(col=triple.col, op=Op.EQ, value=stat.text)
        matched = _probe_count(candidate, table)
        executions += 1
        if matched > 0:
            trace.append(TraceStep(candidate=stat.text, contribution=stat.contribution,
                                   matched_count=matched,
                                   decision="non-empty result: value replaced"))
            return RefinementOutcome(input=triple, final=candidate,
                                     verdict=Verdict.VALUE_REPLACED,
                                     rule_fired=Rule.EG_EMPTY_LIME_RESCUE, trace=trace)
        trace.append(TraceStep(candidate=stat.text, contribution=stat.contribution,
                               matched_count=matched, decision="empty result"))

    top = stats[0]
    if normalize(top.text) == original:
        trace.append(TraceStep(candidate=top.text, contribution=top.contribution,
                               decision="all candidates empty: extracted value kept"))
        return RefinementOutcome(input=triple, final=cond,
                                 verdict=Verdict.ACCEPTED_AS_IS,
                                 rule_fired=None, trace=trace)
    trace.append(TraceStep(candidate=top.text, contribution=top.contribution,
                           decision="all candidates empty: top-contribution candidate kept"))
    return RefinementOutcome(input=triple,
                             final=Condition(col=triple.col, op=Op.EQ, value=top.text),
                             verdict=Verdict.VALUE_REPLACED,
                             rule_fired=None, trace=trace)


def _numeric_tokens(explanation: Explanation) -> list[tuple[int, str, float]]:
    members = []
    for index, (unit, weight) in enumerate(zip(explanation.units, explanation.weights)):
        if numeric_like(unit):
            members.append((index, unit, weight))
    return members


def _matches_value(surface: str, value: str) -> bool:
    if surface.casefold() == value.strip().casefold():
        return True
    a, b = parse_number(surface), parse_number(value)
    return a is not None and b is not None and a == b


def _argmax(members: list[tuple[int, str, float]], value: str) -> tuple[int, str, float]:
    # Ties break toward the extracted value, then toward earlier position.
    return min(members, key=lambda m: (-m[2], 0 if _matches_value(m[1], value) else 1, m[0]))


def verify_numeric_condition(triple: CandidateTriple, table: Table,
                             question: str | TokenizedText, scorer,
                             config: RefineConfig | None = None,
                             allow_execute: bool = True) -> RefinementOutcome:
    """Verify or correct a condition on a numeric column.

    Range conditions (> and <) are decided purely from token attributions;
    they are never executed, because empty numeric ranges are legitimate.
    Equality is executed first; when empty, the extracted value is accepted
    only if it carries the highest positive attribution among numeric-like
    tokens, otherwise that argmax token replaces it. Replacement values are
    restricted to tokens that parse as numbers, so the final condition
    stays rule-valid; date-shaped tokens still take part in the ranking.
    """
    config = config or RefineConfig()
    tokenized = question if isinstance(question, TokenizedText) else tokenize(question)
    cond = Condition(col=triple.col, op=triple.op, value=triple.value)
    trace: list[TraceStep] = []

    if triple.op is Op.EQ and allow_execute:
        matched = _probe_count(cond, table)
        trace.append(TraceStep(candidate=triple.value, matched_count=matched,
                               decision="execution probe on the extracted value"))
        if matched > 0:
            return RefinementOutcome(input=triple, final=cond,
                                     verdict=Verdict.ACCEPTED_AS_IS,
                                     rule_fired=Rule.EG_NON_EMPTY, trace=trace)

    target = ScoringTarget(table_id=table.id, column_index=triple.col,
                           column_name=table.header[triple.col])
    explanation = explain(tokenized, scorer, target, config.explain)
    members = _numeric_tokens(explanation)
    if not members:
        trace.append(TraceStep(candidate=triple.value,
                               decision="no numeric-like tokens in the question: "
                                        "passed through unrefined"))
        return RefinementOutcome(input=triple, final=cond,
                                 verdict=Verdict.ACCEPTED_AS_IS,
                                 rule_fired=None, trace=trace)
    for _index, unit, weight in members:
        trace.append(TraceStep(candidate=unit, contribution=weight,
                               decision="numeric-like token attribution"))

    best = _argmax(members, triple.value)
    extracted_is_best = _matches_value(best[1], triple.value)
    accept_rule = (Rule.NUMERIC_EQ_EMPTY_ACCEPT if triple.op is Op.EQ and allow_execute
                   else Rule.NUMERIC_DIRECT)

    if extracted_is_best and best[2] > 0:
        trace.append(TraceStep(candidate=triple.value, contribution=best[2],
                               decision="extracted value carries the top positive "
                                        "attribution: accepted"))
        return RefinementOutcome(input=triple, final=cond,
                                 verdict=Verdict.ACCEPTED_AS_IS,
                                 rule_fired=accept_rule, trace=trace)

    parseable = [m for m in members if parse_number(m[1]) is not None]
    replacement = _argmax(parseable, triple.value) if parseable else None
    if replacement is None or replacement[2] <= 0:
        trace.append(TraceStep(candidate=triple.value,
                               decision="low confidence: no positively weighted numeric "
                                        "token available, extracted value kept"))
        return RefinementOutcome(input=triple, final=cond,
                                 verdict=Verdict.ACCEPTED_AS_IS,
                                 rule_fired=Rule.NUMERIC_DIRECT, trace=trace)
    if _matches_value(replacement[1], triple.value):
        trace.append(TraceStep(candidate=triple.value, contribution=replacement[2],
                               decision="extracted value is the best number-parseable "
                                        "token: accepted"))
        return RefinementOutcome(input=triple, final=cond,
                                 verdict=Verdict.ACCEPTED_AS_IS,
                                 rule_fired=Rule.NUMERIC_DIRECT, trace=trace)
    final = Condition(col=triple.col, op=triple.op, value=replacement[1])
    trace.append(TraceStep(candidate=replacement[1], contribution=replacement[2],
                           decision="top-attribution numeric token replaces the value"))
    return RefinementOutcome(input=triple, final=final,
                             verdict=Verdict.VALUE_REPLACED,
                             rule_fired=Rule.NUMERIC_DIRECT, trace=trace)


def _final_key(cond: Condition, table: Table) -> tuple:
    if 0 <= cond.col < table.arity and table.is_real(cond.col):
        number = cond.number
        if number is not None:
            return (cond.col, int(cond.op), "num", number)
    return (cond.col, int(cond.op), "text", normalize(cond.value))


def refine_where_clause(triples: list[CandidateTriple], table: Table,
                        question: str | TokenizedText, scorer,
                        config: RefineConfig | None = None
                        ) -> tuple[list[RefinementOutcome], str]:
    """Refine a whole conjunctive WHERE clause.

    Each triple first passes rule validation (a range operator on a text
    column is demoted to equality), then routes to the text or numeric
    procedure by column type. Outcomes whose final conditions coincide are
    merged, keeping the first. The connector is always AND."""
    config = config or RefineConfig()
    tokenized = question if isinstance(question, TokenizedText) else tokenize(question)
    outcomes: list[RefinementOutcome] = []
    seen: dict[tuple, int] = {}

    for triple in triples:
        if not 0 <= triple.col < table.arity:
            cond = Condition(col=triple.col, op=triple.op, value=triple.value)
            outcomes.append(RefinementOutcome(
                input=triple, final=cond, verdict=Verdict.REJECTED_NO_CANDIDATE,
                rule_fired=None,
                trace=[TraceStep(candidate=triple.value,
                                 decision=f"column {triple.col} out of range "
                                          f"for table '{table.id}'")]))
            continue

        working = triple
        repair_steps: list[TraceStep] = []
        repaired = False
        probe = CanonicalQuery(sel=0, agg=Agg.NONE,
                               conds=[Condition(col=working.col, op=working.op,
                                                value=working.value)])
        kinds = {v.kind for v in validate_syntax(probe, table)}
        if ViolationKind.COMPARISON_ON_TEXT in kinds:
            symbol = ">" if working.op is Op.GT else "<"
            working = replace(working, op=Op.EQ)
            repaired = True
            repair_steps.append(TraceStep(
                candidate=working.value,
                decision=f"rule validation: '{symbol}' on text column "
                         f"'{table.header[working.col]}' demoted to '='"))
        value_broken = (ViolationKind.NON_NUMERIC_VALUE in kinds)
        if value_broken:
            repair_steps.append(TraceStep(
                candidate=working.value,
                decision="rule validation: value does not parse as a number "
                         "for a real column"))

        if table.is_real(working.col):
            outcome = verify_numeric_condition(working, table, tokenized, scorer,
                                               config, allow_execute=not value_broken)
        else:
            outcome = refine_text_condition(working, table, tokenized, scorer, config)

        if repair_steps:
            outcome.trace[:0] = repair_steps
        if repaired or value_broken:
            outcome.rule_fired = Rule.RULE_VALIDATION
        outcome = replace_input(outcome, triple)

        key = _final_key(outcome.final, table)
        if key in seen:
            outcomes[seen[key]].trace.append(TraceStep(
                candidate=outcome.final.value,
                decision="duplicate final condition merged from another triple"))
            continue
        seen[key] = len(outcomes)
        outcomes.append(outcome)

    if getattr(scorer, "engaged", False):
        for outcome in outcomes:
            outcome.trace.append(TraceStep(
                candidate=outcome.final.value,
                decision="fallback: remote scorer unavailable, lexical scorer used"))
    return outcomes, "AND"


def replace_input(outcome: RefinementOutcome, original: CandidateTriple) -> RefinementOutcome:
    """Re-attach the caller's original triple after internal repairs."""
    outcome.input = original
    return outcome
