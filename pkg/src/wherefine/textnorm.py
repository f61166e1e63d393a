"""Shared text helpers: word splitting, normalization, numeric parsing."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

# A word is either a digit run that may carry internal '.', ',', ':' or '-'
# (decimals, dates, clock times, grouped thousands stay whole) or a plain
# alphanumeric run. Everything else separates.
_WORD_RE = re.compile(r"\d[\d.,:\-]*\d|\w+", re.UNICODE)

# Grouped thousands such as 1,234,567.5; plain float() rejects the commas.
_GROUPED_RE = re.compile(r"[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?")

# Date/time-shaped digit runs: 2006-06-21, 21:00, 1:2:3 ...
_DATEISH_RE = re.compile(r"\d+(?:[-:]\d+)+")


@dataclass(frozen=True)
class Word:
    """One positional word with its character span in the source string."""

    surface: str
    start: int
    end: int

    @property
    def key(self) -> str:
        return self.surface.casefold()


def split_words(text: str) -> list[Word]:
    """Split *text* into positional words, dropping punctuation separators."""
    return [Word(m.group(), m.start(), m.end()) for m in _WORD_RE.finditer(text)]


def normalize(text: str) -> str:
    """Trim, case-fold and collapse internal whitespace."""
    return " ".join(str(text).casefold().split())


def parse_number(value: object) -> float | None:
    """Parse a cell or condition value as a finite float, else None."""
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value) if math.isfinite(float(value)) else None
    text = str(value).strip()
    if not text:
        return None
    try:
        number = float(text)
    except ValueError:
        if _GROUPED_RE.fullmatch(text):
            number = float(text.replace(",", ""))
        else:
            return None
    return number if math.isfinite(number) else None


def numeric_like(surface: str) -> bool:
    """True for parseable numbers and date/time-shaped digit runs."""
    return parse_number(surface) is not None or _DATEISH_RE.fullmatch(surface.strip()) is not None
