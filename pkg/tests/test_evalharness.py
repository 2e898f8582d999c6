import math
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_projective
from udrnng.convert import convert, from_bracket
from udrnng.evalharness import (CATEGORIES, MinimalPair, Span, SuiteError, YieldMismatch, bracket_f1,
                                corpus_stats, extract_spans, format_pairs, gen_runs,
                                generate_agreement_suite, parse_pairs, score_pairs,
                                score_pairs_batched, tree_depth)
from udrnng.evalharness.suite import AgreementGrammar, GrammarConfig
from udrnng.oracle import parse_actions, tree_to_actions

STRUCTURES = ("flat", "left_first", "right_first")


# --- spans and F1 ---------------------------------------------------------------
def spans_by_recursion(node, start=0):
    """Independent span enumeration: returns (width, list of (label, start, end))."""
    if node.is_leaf:
        return 1, []
    width, out = 0, []
    for c in node.children:
        w, sub = spans_by_recursion(c, start + width)
        width += w
        out += sub
    if width >= 2:
        out.append((node.label, start, start + width))
    return width, out


def test_flat_dep_spans(give_box):
    got = extract_spans(convert(give_box, "flat", "DEP"))
    assert got == Counter({Span("root", 0, 6): 1, Span("nsubj", 0, 2): 1, Span("obj", 4, 6): 1})


def test_left_first_x_spans(give_box):
    got = extract_spans(convert(give_box, "left_first", "X"))
    want = [(0, 6), (0, 2), (2, 6), (2, 4), (4, 6)]
    assert got == Counter(Span("X", s, e) for s, e in want)


def test_single_word_tree_has_no_spans():
    assert not extract_spans(from_bracket("(root (root hi))"))


def test_unary_chain_counts_multiplicity():
    t = from_bracket("(A (B (x a) (y b)))")
    assert extract_spans(t) == Counter({Span("A", 0, 2): 1, Span("B", 0, 2): 1})
    u = bracket_f1([t], [t], labeled=False)
    assert (u.matched, u.n_gold) == (2, 2)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.sampled_from(STRUCTURES),
       st.sampled_from(["X", "POS", "DEP"]))
def test_span_count_matches_recursion(seed, n, structure, labeling):
    t = convert(random_projective(random.Random(seed), n), structure, labeling)
    _, ref = spans_by_recursion(t.root)
    assert extract_spans(t) == Counter(Span(*s) for s in ref)


def test_cross_conversion_f1_is_three_quarters(give_box):
    r = bracket_f1([convert(give_box, "flat", "DEP")], [convert(give_box, "left_first", "DEP")])
    assert (r.matched, r.n_predicted, r.n_gold) == (3, 3, 5)
    assert r.f1 == 0.75
    assert not r.labeled


@pytest.mark.parametrize("structure", STRUCTURES)
@pytest.mark.parametrize("labeling", ["X", "POS", "DEP"])
def test_gold_vs_gold(give_box, structure, labeling):
    t = convert(give_box, structure, labeling)
    for labeled in (False, True):
        r = bracket_f1([t], [t], labeled=labeled)
        assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)


def test_labeled_mode_compares_labels(give_box):
    a, b = convert(give_box, "flat", "DEP"), convert(give_box, "flat", "X")
    assert bracket_f1([a], [b], labeled=False).f1 == 1.0
    assert bracket_f1([a], [b], labeled=True).f1 == 0.0


def test_degenerate_f1():
    t = from_bracket("(X (X a))")
    r = bracket_f1([t, t], [t, t])
    assert r.f1 == 0.0 and r.degenerate


def test_yield_mismatch_names_index():
    a, b = from_bracket("(X (X a) (X b))"), from_bracket("(X (X a) (X c))")
    with pytest.raises(YieldMismatch) as e:
        bracket_f1([a, a], [a, b])
    assert e.value.index == 1


def test_length_mismatch():
    with pytest.raises(ValueError):
        bracket_f1([], [from_bracket("(X (X a))")])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_f1_swap_exchanges_precision_and_recall(seed, n):
    s = random_projective(random.Random(seed), n)
    a, b = convert(s, "flat", "DEP"), convert(s, "right_first", "DEP")
    ab, ba = bracket_f1([a], [b]), bracket_f1([b], [a])
    assert (ab.precision, ab.recall, ab.f1) == (ba.recall, ba.precision, ba.f1)


# --- pair scoring ---------------------------------------------------------------
PAIRS = [
    MinimalPair("the pilot laughs", "the pilot laugh", "Simple"),
    MinimalPair("the pilots laugh", "the pilots laughs", "Simple"),
    MinimalPair("the pilot that the guards love laughs", "the pilot that the guards love laugh",
                "Across obj rel."),
]


def test_identical_members_rejected():
    with pytest.raises(ValueError):
        MinimalPair("a b", "a b", "Simple")


def test_oracle_scorer_is_perfect():
    good = {p.grammatical for p in PAIRS}
    rep = score_pairs(lambda s: 1.0 if s in good else 0.0, PAIRS)
    assert all(acc == 1.0 for _, acc in rep.by_category().values())


def test_ties_count_as_wrong():
    # favors the longer string; both members have the same length in characters here
    pair = MinimalPair("the dog runs", "the dog rune", "Simple")
    rep = score_pairs(lambda s: float(len(s)), [pair])
    assert rep.accuracy("Simple") == 0.0


def test_double_minus_inf_is_wrong():
    rep = score_pairs(lambda s: -math.inf, PAIRS[:1])
    assert rep.accuracy("Simple") == 0.0


def test_overall_is_unweighted_over_categories():
    good = {PAIRS[0].grammatical, PAIRS[2].grammatical}
    rep = score_pairs(lambda s: 1.0 if s in good else 0.0, PAIRS)
    # Simple 0.5, Across obj rel. 1.0 -> 0.75, not the pooled 2/3
    assert rep.overall == 0.75


def test_missing_categories_warn(caplog):
    rep = score_pairs(lambda s: 0.0, PAIRS)
    rep.overall
    assert "no pairs for categories" in caplog.text


@settings(max_examples=50, deadline=None)
# integer scores: the transforms below stay strictly monotone after float rounding
@given(st.lists(st.integers(-50, 0).map(float), min_size=6, max_size=6), st.sampled_from(
    [math.exp, lambda x: 3 * x - 7, lambda x: x ** 3]))
def test_monotone_transform_invariance(values, f):
    table = dict(zip([s for p in PAIRS for s in (p.grammatical, p.ungrammatical)], values))
    a = score_pairs(table.__getitem__, PAIRS)
    b = score_pairs(lambda s: f(table[s]), PAIRS)
    assert [s.correct for s in a.scores] == [s.correct for s in b.scores]


def test_batched_matches_single():
    scorer = lambda s: -float(len(s.split()[-1]))  # noqa: E731
    a = score_pairs(scorer, PAIRS)
    b = score_pairs_batched(lambda ss: [scorer(s) for s in ss], PAIRS)
    assert a.to_csv() == b.to_csv()


def test_csv_layout():
    rep = score_pairs(lambda s: 1.0 if s == PAIRS[0].grammatical else 0.0, PAIRS[:2])
    assert rep.to_csv().splitlines() == ["category,n,accuracy", "Simple,2,0.5", "average,2,0.5"]


def test_pair_file_round_trip():
    assert parse_pairs(format_pairs(PAIRS)) == PAIRS


def test_pair_file_rejects_bad_rows():
    with pytest.raises(ValueError, match="line 2"):
        parse_pairs("Simple\ta\tb\nSimple\tonly two\n")


# --- statistics -------------------------------------------------------------------
def test_flat_x_stats(give_box):
    s = corpus_stats([convert(give_box, "flat", "X")])
    assert (s.n_nt, s.n_gen, s.n_reduce, s.max_gen_run) == (9, 6, 9, 1)


def test_flat_x_collapsed_stats(give_box):
    s = corpus_stats([convert(give_box, "flat", "X", collapse=True)])
    assert (s.n_nt, s.n_gen, s.n_reduce, s.max_gen_run) == (3, 6, 3, 2)


def test_right_first_depth(give_box):
    assert tree_depth(convert(give_box, "right_first", "X")) == 4


def test_stats_accept_derivations(give_box):
    t = convert(give_box, "left_first", "POS")
    assert corpus_stats([t]) == corpus_stats([tree_to_actions(t)])


def test_gen_runs():
    assert gen_runs(parse_actions("NT(X) GEN(a) GEN(b) REDUCE GEN(c)")) == [2, 1]


def test_empty_corpus_stats():
    s = corpus_stats([])
    assert s.n_sentences == 0 and s.mean_gen_run == 0.0


# --- suite generation -------------------------------------------------------------
def test_suite_is_deterministic():
    a = generate_agreement_suite(n_train=200, n_pairs=70, seed=4)
    b = generate_agreement_suite(n_train=200, n_pairs=70, seed=4)
    assert a.pairs == b.pairs
    assert [s.forms for s in a.train] == [s.forms for s in b.train]


def test_suite_has_no_leaks_and_balanced_categories():
    suite = generate_agreement_suite(n_train=500, n_pairs=140, seed=2)
    train = {" ".join(s.forms) for s in suite.train}
    assert not train & {s for p in suite.pairs for s in (p.grammatical, p.ungrammatical)}
    assert Counter(p.category for p in suite.pairs) == Counter({c: 20 for c in CATEGORIES})
    assert len(set(suite.pairs)) == len(suite.pairs)


def test_members_differ_in_one_token():
    for p in generate_agreement_suite(n_train=10, n_pairs=70, seed=3).pairs:
        g, u = p.grammatical.split(), p.ungrammatical.split()
        assert len(g) == len(u)
        assert sum(x != y for x, y in zip(g, u)) == 1


def test_zero_pairs():
    suite = generate_agreement_suite(n_train=20, n_pairs=0)
    assert suite.pairs == [] and len(suite.train) == 20


def test_across_obj_rel_shape():
    g = AgreementGrammar(GrammarConfig(), random.Random(0))
    pair = g.pair("Across obj rel.")
    words = pair.grammatical.split()
    assert words[2] == "that" and words[3] == "the" and len(words) == 7


def test_training_trees_are_projective_and_convert():
    from udrnng.conllu import is_projective
    for s in generate_agreement_suite(n_train=300, n_pairs=0, seed=5).train:
        assert is_projective(s)
        convert(s, "flat", "DEP")


def test_pair_trees_yield_pair_sentences():
    g = AgreementGrammar(GrammarConfig(), random.Random(1))
    for cat in CATEGORIES:
        pair, good, bad = g.pair_with_trees(cat)
        assert " ".join(good.forms) == pair.grammatical
        assert " ".join(bad.forms) == pair.ungrammatical


def test_tiny_lexicon_raises():
    cfg = GrammarConfig(nouns=(("cat", "cats"),), intransitive=(("runs", "run"),),
                        transitive=(("sees", "see"),), prepositions=("near",))
    with pytest.raises(SuiteError):
        generate_agreement_suite(cfg, n_train=10, n_pairs=70, max_tries=20)


def test_default_training_mix_holds_out_subject_object_rcs():
    suite = generate_agreement_suite(n_train=2000, n_pairs=0, seed=6)
    fronted = 0
    for s in suite.train:
        heads, rels = s.heads, [t.deprel for t in s.tokens]
        for i, (form, rel) in enumerate(zip(s.forms, rels)):
            if form == "that" and rel == "obj":
                # relativizer as object: the RC's verb must hang off an object noun
                verb = heads[i] - 1
                assert rels[heads[verb] - 1] == "obj"
        fronted += s.tokens[0].upos == "ADP"
    assert fronted > 0
