"""Relevance models behind the scoring endpoint.

A model turns (sentence, table id, column index, column name) into the
probability that the sentence is about that column. Every backend exposes
``name`` plus ``score(...)`` and must be deterministic for a fixed input.

Two backends ship: EchoModel answers a declared constant (test mode, the
default when no checkpoint is configured) and LinearModel applies a
sigmoid-of-linear sentence-pair head loaded from a JSON checkpoint.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Mapping

_WORD = re.compile(r"\w+(?:\.\w+)*")


class ModelError(Exception):
    """A model checkpoint cannot be loaded or is self-inconsistent."""


def _tokens(text: str) -> set[str]:
    # distinct casefolded words; "0.173" stays one token
    return set(_WORD.findall(text.casefold()))


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass(frozen=True)
class EchoModel:
    """Test-mode model: every request scores the declared constant."""

    probability: float = 0.5
    name: str = "echo"

    def __post_init__(self) -> None:
        if not 0.0 <= self.probability <= 1.0:
            raise ModelError(f"echo probability {self.probability} outside [0, 1]")

    def score(self, sentence: str, table_id: str, column_index: int,
              column_name: str) -> float:
        return self.probability


@dataclass(frozen=True)
class LinearModel:
    """Sigmoid-of-linear head over sentence and column-name tokens.

    Each distinct sentence token counts its token_weights entry once, each
    distinct column-name token counts its column_weights entry once, and the
    sum plus intercept passes through a sigmoid. Conditioning on the column
    therefore happens through the column text, the way a sentence-pair head
    sees it; table id and column index do not enter the score.
    """

    name: str = "linear"
    intercept: float = 0.0
    token_weights: Mapping[str, float] = field(default_factory=dict)
    column_weights: Mapping[str, float] = field(default_factory=dict)

    def score(self, sentence: str, table_id: str, column_index: int,
              column_name: str) -> float:
        total = self.intercept
        total += sum(self.token_weights.get(token, 0.0) for token in _tokens(sentence))
        total += sum(self.column_weights.get(token, 0.0) for token in _tokens(column_name))
        return _sigmoid(total)


def _weight_table(payload: dict, key: str, path: str) -> dict[str, float]:
    table = payload.get(key, {})
    if not isinstance(table, dict):
        raise ModelError(f"checkpoint '{path}': {key} must be an object")
    cleaned: dict[str, float] = {}
    for token, weight in table.items():
        if not isinstance(weight, (int, float)) or isinstance(weight, bool):
            raise ModelError(f"checkpoint '{path}': weight for '{token}' in {key} "
                             "is not a number")
        cleaned[str(token).casefold()] = float(weight)
    return cleaned


def load_model(path: str | None) -> EchoModel | LinearModel:
    """Load the checkpoint at ``path``; no path means test-mode echo."""
    if path is None:
        return EchoModel()
    try:
        with open(path, encoding="utf-8") as handle:
            payload = json.load(handle)
    except OSError as err:
        raise ModelError(f"cannot read checkpoint '{path}': {err}") from None
    except json.JSONDecodeError as err:
        raise ModelError(f"checkpoint '{path}' is not valid JSON: {err}") from None
    if not isinstance(payload, dict):
        raise ModelError(f"checkpoint '{path}' must be a JSON object")
    name = payload.get("name", "linear")
    if not isinstance(name, str) or not name:
        raise ModelError(f"checkpoint '{path}': name must be a non-empty string")
    intercept = payload.get("intercept", 0.0)
    if not isinstance(intercept, (int, float)) or isinstance(intercept, bool):
        raise ModelError(f"checkpoint '{path}': intercept must be a number")
    return LinearModel(
        name=name,
        intercept=float(intercept),
        token_weights=_weight_table(payload, "token_weights", path),
        column_weights=_weight_table(payload, "column_weights", path),
    )
