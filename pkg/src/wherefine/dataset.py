"""Table and example ingestion for line-delimited WikiSQL-style files,
plus a column-name augmentation that erodes lexical shortcuts from
questions while leaving the gold query untouched."""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field

from .engine import CanonicalQuery, QueryFormatError, query_from_record
from .textnorm import Word, parse_number, split_words

TEXT = "text"
REAL = "real"


class DatasetError(Exception):
    """Malformed input file or record."""


def _is_scalar(value: object) -> bool:
    return isinstance(value, (str, int, float)) and not isinstance(value, bool)


@dataclass
class Table:
    """One table: column names, column types ('text' or 'real') and rows.

    Cells keep the JSON scalar they were loaded with; cell_text and
    cell_number expose the string and parsed-numeric views. A real-typed
    cell whose text does not parse is kept but flagged dirty (number None).
    """

    id: str
    header: list[str]
    types: list[str]
    rows: list[list]
    _text: list[list[str]] = field(init=False, repr=False)
    _numbers: list[list[float | None]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.header) != len(self.types):
            raise DatasetError(f"table '{self.id}': header and types lengths differ")
        if not self.header:
            raise DatasetError(f"table '{self.id}': needs at least one column")
        for t in self.types:
            if t not in (TEXT, REAL):
                raise DatasetError(f"table '{self.id}': unknown column type {t!r}")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.header):
                raise DatasetError(f"table '{self.id}': row {i} has {len(row)} cells, "
                                   f"expected {len(self.header)}")
            for value in row:
                if not _is_scalar(value):
                    raise DatasetError(f"table '{self.id}': row {i} holds a non-scalar cell")
        self._text = [[str(value) for value in row] for row in self.rows]
        self._numbers = [
            [parse_number(value) if self.types[col] == REAL else None
             for col, value in enumerate(row)]
            for row in self.rows
        ]

    @property
    def arity(self) -> int:
        return len(self.header)

    @property
    def row_count(self) -> int:
        return len(self.rows)

    def is_real(self, col: int) -> bool:
        return self.types[col] == REAL

    def cell_text(self, row: int, col: int) -> str:
        return self._text[row][col]

    def cell_number(self, row: int, col: int) -> float | None:
        return self._numbers[row][col]

    def column_values(self, col: int) -> list[str]:
        """Distinct cell texts of one column, in first-appearance order."""
        seen: dict[str, None] = {}
        for row in range(self.row_count):
            seen.setdefault(self._text[row][col], None)
        return list(seen)

    def to_record(self) -> dict:
        return {"id": self.id, "header": list(self.header),
                "types": list(self.types), "rows": [list(r) for r in self.rows]}


class TableStore:
    """Tables keyed by id, preserving file order."""

    def __init__(self, tables: list[Table] | None = None):
        self._tables: dict[str, Table] = {}
        for table in tables or []:
            self.add(table)

    def add(self, table: Table) -> None:
        if table.id in self._tables:
            raise DatasetError(f"duplicate table id '{table.id}'")
        self._tables[table.id] = table

    def __getitem__(self, table_id: str) -> Table:
        try:
            return self._tables[table_id]
        except KeyError:
            raise DatasetError(f"unknown table id '{table_id}'") from None

    def __contains__(self, table_id: str) -> bool:
        return table_id in self._tables

    def __len__(self) -> int:
        return len(self._tables)

    def __iter__(self):
        return iter(self._tables.values())

    def ids(self) -> list[str]:
        return list(self._tables)


@dataclass
class Example:
    """One natural-language question with its gold canonical query."""

    question: str
    table_id: str
    gold: CanonicalQuery

    def to_record(self) -> dict:
        return {"question": self.question, "table_id": self.table_id,
                "sql": self.gold.to_record()}


def _iter_jsonl(path: str):
    try:
        handle = open(path, encoding="utf-8")
    except OSError as err:
        raise DatasetError(f"cannot read {path}: {err}") from None
    with handle:
        for lineno, line in enumerate(handle, 1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as err:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({err.msg})") from None


def load_tables(path: str) -> TableStore:
    """Load a line-delimited table file into a TableStore."""
    store = TableStore()
    for lineno, record in _iter_jsonl(path):
        if not isinstance(record, dict):
            raise DatasetError(f"{path}:{lineno}: expected a table object")
        try:
            table = Table(id=str(record["id"]), header=list(record["header"]),
                          types=list(record["types"]), rows=[list(r) for r in record["rows"]])
        except KeyError as missing:
            raise DatasetError(f"{path}:{lineno}: missing field {missing}") from None
        except (TypeError, DatasetError) as err:
            raise DatasetError(f"{path}:{lineno}: {err}") from None
        try:
            store.add(table)
        except DatasetError as err:
            raise DatasetError(f"{path}:{lineno}: {err}") from None
    return store


def load_examples(path: str, store: TableStore) -> list[Example]:
    """Load question/gold-query examples, validating each against its table."""
    examples: list[Example] = []
    for lineno, record in _iter_jsonl(path):
        if not isinstance(record, dict):
            raise DatasetError(f"{path}:{lineno}: expected an example object")
        question = record.get("question")
        table_id = record.get("table_id")
        if not isinstance(question, str) or not question.strip():
            raise DatasetError(f"{path}:{lineno}: question must be a non-empty string")
        if not isinstance(table_id, str) or table_id not in store:
            raise DatasetError(f"{path}:{lineno}: unknown table id {table_id!r}")
        table = store[table_id]
        try:
            gold = query_from_record(record.get("sql"), context="sql")
        except QueryFormatError as err:
            raise DatasetError(f"{path}:{lineno}: {err}") from None
        if not 0 <= gold.sel < table.arity:
            raise DatasetError(f"{path}:{lineno}: sel {gold.sel} out of range "
                               f"for table '{table_id}'")
        for i, cond in enumerate(gold.conds):
            if not 0 <= cond.col < table.arity:
                raise DatasetError(f"{path}:{lineno}: condition {i} column {cond.col} "
                                   f"out of range for table '{table_id}'")
        examples.append(Example(question=question, table_id=table_id, gold=gold))
    return examples


def _name_spans(question_words: list[Word], name: str) -> list[tuple[int, int]]:
    """Word intervals where *name* appears verbatim (case-insensitive,
    whole word sequence). Matches never overlap; leftmost wins."""
    keys = [w.key for w in split_words(name)]
    if not keys:
        return []
    q_keys = [w.key for w in question_words]
    spans: list[tuple[int, int]] = []
    i = 0
    while i + len(keys) <= len(q_keys):
        if q_keys[i:i + len(keys)] == keys:
            spans.append((i, i + len(keys)))
            i += len(keys)
        else:
            i += 1
    return spans


def erosion_augment(example: Example, store: TableStore, seed: int) -> Example:
    """Erode column-name shortcuts from the question, keeping the gold query.

    Verbatim mentions of the select column's name are removed. Each verbatim
    mention of a WHERE column's name is independently replaced, with
    probability one half under the seeded generator, by a column name drawn
    from a different table. A question without any mention is returned as is.
    """
    table = store[example.table_id]
    words = split_words(example.question)

    removals = _name_spans(words, table.header[example.gold.sel])
    claimed = set()
    for start, end in removals:
        claimed.update(range(start, end))

    cond_cols: list[int] = []
    for cond in example.gold.conds:
        if cond.col not in cond_cols and cond.col != example.gold.sel:
            cond_cols.append(cond.col)
    replace_sites: list[tuple[int, int, int]] = []
    for col in cond_cols:
        for start, end in _name_spans(words, table.header[col]):
            if any(i in claimed for i in range(start, end)):
                continue
            claimed.update(range(start, end))
            replace_sites.append((start, end, col))
    replace_sites.sort()

    if not removals and not replace_sites:
        return example

    rng = random.Random(seed)
    other_ids = [tid for tid in store.ids() if tid != example.table_id]
    edits: list[tuple[int, int, str]] = [
        (words[start].start, words[end - 1].end, "") for start, end in removals
    ]
    for start, end, _col in replace_sites:
        if rng.random() >= 0.5:
            continue
        if not other_ids:
            raise DatasetError("augmentation needs at least one other table to draw names from")
        donor = store[rng.choice(other_ids)]
        replacement = donor.header[rng.randrange(donor.arity)]
        edits.append((words[start].start, words[end - 1].end, replacement))

    question = example.question
    for char_start, char_end, replacement in sorted(edits, reverse=True):
        question = question[:char_start] + replacement + question[char_end:]
    question = re.sub(r"\s+", " ", question)
    question = re.sub(r"\s+([?.!,;:])", r"\1", question).strip()
    return Example(question=question, table_id=example.table_id, gold=example.gold)
