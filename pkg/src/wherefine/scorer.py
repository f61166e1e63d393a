"""Black-box relevance scorers used by the surrogate explainer.

Every scorer is a callable (sentence, target) -> probability in [0, 1]
estimating how strongly the sentence targets the given table column.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import httpx

from .dataset import Table, TableStore
from .textnorm import split_words


class ScorerError(Exception):
    """A scorer received input it cannot serve."""


class TransportError(Exception):
    """A remote scorer call failed: network fault, bad status or a reply
    outside the wire contract."""


@dataclass(frozen=True)
class ScoringTarget:
    """The column a score is asked about."""

    table_id: str
    column_index: int
    column_name: str


def target_for(table: Table, column_index: int) -> ScoringTarget:
    if not 0 <= column_index < table.arity:
        raise ScorerError(f"column {column_index} out of range for table '{table.id}'")
    return ScoringTarget(table_id=table.id, column_index=column_index,
                         column_name=table.header[column_index])


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for item in a:
        current = [0] * (len(b) + 1)
        for j, other in enumerate(b, 1):
            if item == other:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[-1]


def _keys(text: str) -> list[str]:
    return [word.key for word in split_words(text)]


def lexical_score(sentence: str, target: ScoringTarget, table: Table) -> float:
    """Longest-common-subsequence containment of the best candidate.

    Candidates are the column name and the column's distinct cell values;
    each is matched against the sentence as a case-folded token sequence and
    scored LCS / candidate length. The maximum, clamped to [0, 1], is the
    probability. A sentence containing a candidate verbatim scores 1.
    """
    sentence_keys = _keys(sentence)
    candidates = [target.column_name] + table.column_values(target.column_index)
    best = 0.0
    for candidate in candidates:
        keys = _keys(candidate)
        if not keys:
            continue
        ratio = _lcs_length(sentence_keys, keys) / len(keys)
        best = max(best, ratio)
    return min(max(best, 0.0), 1.0)


class LexicalScorer:
    """lexical_score bound to a table store, with cached candidates."""

    def __init__(self, store: TableStore):
        self._store = store
        self._candidates: dict[tuple[str, int], list[list[str]]] = {}

    def __call__(self, sentence: str, target: ScoringTarget) -> float:
        key = (target.table_id, target.column_index)
        if key not in self._candidates:
            table = self._store[target.table_id]
            if not 0 <= target.column_index < table.arity:
                raise ScorerError(f"column {target.column_index} out of range "
                                  f"for table '{table.id}'")
            pool = [target.column_name] + table.column_values(target.column_index)
            self._candidates[key] = [k for k in map(_keys, pool) if k]
        sentence_keys = _keys(sentence)
        best = 0.0
        for keys in self._candidates[key]:
            best = max(best, _lcs_length(sentence_keys, keys) / len(keys))
        return min(max(best, 0.0), 1.0)


@dataclass
class MockCase:
    """Fixture weights for one (question, target) pair."""

    table_id: str
    column_index: int
    weights: dict[str, float]
    intercept: float = 0.0
    question: str = ""


class MockScorer:
    """Deterministic stand-in for a trained model.

    The probability is sigmoid(intercept + sum of fixture token weights
    present in the sentence), presence judged on case-folded words, so a
    surrogate fit over this scorer reproduces the fixture's weight ordering.
    Cases are keyed by (table_id, column_index); perturbed sentences cannot
    be matched back to their source question text.
    """

    def __init__(self, cases: list[MockCase]):
        self._cases: dict[tuple[str, int], MockCase] = {}
        for case in cases:
            key = (case.table_id, case.column_index)
            if key in self._cases:
                raise ScorerError(f"duplicate mock case for table '{case.table_id}' "
                                  f"column {case.column_index}")
            self._cases[key] = MockCase(
                table_id=case.table_id,
                column_index=case.column_index,
                weights={token.casefold(): float(w) for token, w in case.weights.items()},
                intercept=float(case.intercept),
                question=case.question,
            )

    @classmethod
    def from_file(cls, path: str) -> "MockScorer":
        try:
            with open(path, encoding="utf-8") as handle:
                payload = json.load(handle)
        except OSError as err:
            raise ScorerError(f"cannot read mock fixture {path}: {err}") from None
        except json.JSONDecodeError as err:
            raise ScorerError(f"invalid mock fixture {path}: {err.msg}") from None
        records = payload.get("cases") if isinstance(payload, dict) else payload
        if not isinstance(records, list):
            raise ScorerError(f"mock fixture {path} must hold a list of cases")
        cases = []
        for i, record in enumerate(records):
            try:
                cases.append(MockCase(
                    table_id=str(record["table_id"]),
                    column_index=int(record["column_index"]),
                    weights=dict(record["weights"]),
                    intercept=float(record.get("intercept", 0.0)),
                    question=str(record.get("question", "")),
                ))
            except (KeyError, TypeError, ValueError) as err:
                raise ScorerError(f"mock fixture {path}: case {i} is malformed ({err})") from None
        return cls(cases)

    def __call__(self, sentence: str, target: ScoringTarget) -> float:
        case = self._cases.get((target.table_id, target.column_index))
        if case is None:
            raise ScorerError(f"no mock case for table '{target.table_id}' "
                              f"column {target.column_index}")
        present = {word.key for word in split_words(sentence)}
        total = case.intercept
        for token, weight in case.weights.items():
            if token in present:
                total += weight
        return _sigmoid(total)


class RemoteScorer:
    """HTTP client for the scorer wire protocol.

    POST {endpoint}/score with {sentence, table_id, column_index,
    column_name} and expect {"probability": p} with p in [0, 1]. Transient
    transport faults and 5xx replies are retried once; any other failure
    raises TransportError.
    """

    def __init__(self, endpoint: str, timeout: float = 5.0,
                 transport: httpx.BaseTransport | None = None):
        self.endpoint = endpoint.rstrip("/")
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "RemoteScorer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _post_score(self, payload: dict) -> httpx.Response:
        last: Exception | None = None
        for _attempt in range(2):
            try:
                response = self._client.post(f"{self.endpoint}/score", json=payload)
            except httpx.HTTPError as err:
                last = err
                continue
            if response.status_code >= 500:
                last = TransportError(f"server error {response.status_code} from {self.endpoint}")
                continue
            return response
        raise TransportError(f"score request to {self.endpoint} failed: {last}")

    def __call__(self, sentence: str, target: ScoringTarget) -> float:
        payload = {
            "sentence": sentence,
            "table_id": target.table_id,
            "column_index": target.column_index,
            "column_name": target.column_name,
        }
        response = self._post_score(payload)
        if response.status_code != 200:
            raise TransportError(f"score request to {self.endpoint} "
                                 f"returned status {response.status_code}")
        try:
            body = response.json()
        except (json.JSONDecodeError, ValueError):
            raise TransportError(f"non-JSON score reply from {self.endpoint}") from None
        probability = body.get("probability") if isinstance(body, dict) else None
        if not isinstance(probability, (int, float)) or isinstance(probability, bool):
            raise TransportError(f"score reply from {self.endpoint} lacks a numeric probability")
        probability = float(probability)
        if not 0.0 <= probability <= 1.0:
            raise TransportError(f"score reply probability {probability} outside [0, 1]")
        return probability

    def health(self) -> dict:
        try:
            response = self._client.get(f"{self.endpoint}/health")
        except httpx.HTTPError as err:
            raise TransportError(f"health request to {self.endpoint} failed: {err}") from None
        if response.status_code != 200:
            raise TransportError(f"health request to {self.endpoint} "
                                 f"returned status {response.status_code}")
        try:
            body = response.json()
        except (json.JSONDecodeError, ValueError):
            raise TransportError(f"non-JSON health reply from {self.endpoint}") from None
        if not isinstance(body, dict) or body.get("status") != "ok":
            raise TransportError(f"health reply from {self.endpoint} does not report status ok")
        return body


class FallbackScorer:
    """Route around transport faults: try the primary scorer, fall back to
    the backup on TransportError and remember that it happened."""

    def __init__(self, primary, backup):
        self.primary = primary
        self.backup = backup
        self.engaged = False

    def __call__(self, sentence: str, target: ScoringTarget) -> float:
        try:
            return self.primary(sentence, target)
        except TransportError:
            self.engaged = True
            return self.backup(sentence, target)
