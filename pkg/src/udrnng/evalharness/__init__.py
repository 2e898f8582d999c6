"""Evaluation: agreement minimal pairs, bracket F1, corpus statistics, synthetic suites."""
from udrnng.evalharness.brackets import F1Result, Span, YieldMismatch, bracket_f1, extract_spans
from udrnng.evalharness.pairs import (CATEGORIES, MinimalPair, PairScore, SuiteReport, format_pairs,
                                      parse_pairs, read_pairs, score_pairs, score_pairs_batched)
from udrnng.evalharness.stats import CorpusStats, corpus_stats, gen_runs, tree_depth
from udrnng.evalharness.suite import (AgreementSuite, GrammarConfig, SuiteError,
                                      generate_agreement_suite)

__all__ = [
    "CATEGORIES", "AgreementSuite", "CorpusStats", "F1Result", "GrammarConfig", "MinimalPair",
    "PairScore", "Span", "SuiteError", "SuiteReport", "YieldMismatch", "bracket_f1",
    "corpus_stats", "extract_spans", "format_pairs", "gen_runs", "generate_agreement_suite",
    "parse_pairs", "read_pairs", "score_pairs", "score_pairs_batched", "tree_depth",
]
