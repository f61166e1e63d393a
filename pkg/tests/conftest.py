"""Shared fixtures: case tables, the fixture scorer, and an in-process CLI
runner whose capture does not depend on pytest's own."""

from __future__ import annotations

import contextlib
import io
from pathlib import Path

import pytest

from wherefine.cli import main
from wherefine.dataset import load_tables
from wherefine.scorer import MockScorer

FIXTURES = Path(__file__).parent / "fixtures"

CASE_TABLES = FIXTURES / "case_tables.jsonl"
CASE_SCORER = FIXTURES / "case_scorer.json"
CASE_CANDIDATES = FIXTURES / "case_candidates.jsonl"
METRIC_GOLD = FIXTURES / "metric_gold.jsonl"
METRIC_PRED = FIXTURES / "metric_pred.jsonl"
EROSION_EXAMPLES = FIXTURES / "erosion_examples.jsonl"


@pytest.fixture(scope="session")
def store():
    return load_tables(str(CASE_TABLES))


@pytest.fixture(scope="session")
def mock_scorer():
    return MockScorer.from_file(str(CASE_SCORER))


def run_cli(argv) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main([str(a) for a in argv])
    return code, out.getvalue(), err.getvalue()
