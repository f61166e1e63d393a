"""Execution-guided, surrogate-explained refinement of WHERE conditions
for canonical single-table SQL queries."""

from .dataset import (DatasetError, Example, Table, TableStore,
                      erosion_augment, load_examples, load_tables)
from .engine import (Agg, CanonicalQuery, Condition, Op, QueryFormatError,
                     ResultSet, RuleViolationError, Violation, ViolationKind,
                     execute, execution_equal, is_empty, logical_form_equal,
                     query_from_record, render_query, validate_syntax)
from .explain import (ExplainConfig, ExplainError, Explanation, Perturbation,
                      SpanStat, Token, TokenizedText, enumerate_perturbations,
                      explain, explain_spans, fit_surrogate, kernel_weight,
                      sample_perturbations, tokenize)
from .metrics import (EvalReport, ExampleScore, MetricsError, evaluate,
                      render_report, report_from_record)
from .refine import (CandidateTriple, FusionConfig, RefineConfig, RefineError,
                     RefinementOutcome, Rule, TraceStep, Verdict,
                     fuse_candidates, generate_value_candidates,
                     locate_value_span, refine_text_condition,
                     refine_where_clause, verify_numeric_condition)
from .scorer import (FallbackScorer, LexicalScorer, MockCase, MockScorer,
                     RemoteScorer, ScorerError, ScoringTarget, TransportError,
                     lexical_score, target_for)

__version__ = "0.1.0"
