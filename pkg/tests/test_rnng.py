import math
import random

import pytest
import torch
from hypothesis import given, settings, strategies as st

from rnng_helpers import (enumerate_derivations, naive_scores, stack_top_from_scratch, tiny_model,
                          uniform_log_marginal)
from udrnng.oracle import (GEN, NT, REDUCE, Action, DerivationState, Limits, allowed_actions,
                           parse_actions)
from udrnng.rnng.beam import perplexity, rnng_perplexity, word_sync_beam_search
from udrnng.rnng.model import ActionVocab, OutOfVocabulary, RnngConfig, build_model
from udrnng.rnng.train import derivation_log_probs, fit, score_derivation

LONG = parse_actions("NT(S) NT(X) GEN(a) REDUCE GEN(b) NT(X) GEN(a) GEN(b) REDUCE REDUCE")


def _random_derivation(rng, labels, tokens, max_len=6):
    n = rng.randint(1, max_len)
    words = [rng.choice(tokens) for _ in range(n)]
    st = DerivationState(sentence_length=n)
    out = []
    lim = Limits(6, 3)
    while not st.complete:
        m = allowed_actions(st, lim)
        kinds = [k for k, ok in ((NT, m.nt), (GEN, m.gen), (REDUCE, m.reduce)) if ok]
        k = rng.choice(kinds)
        a = Action(NT, rng.choice(labels)) if k == NT else Action(GEN, words[st.tokens_emitted]) \
            if k == GEN else Action(REDUCE)
        out.append(a)
        st = st.apply(a)
    return out


def test_masked_softmax_example():
    m = tiny_model(["X"], [])  # columns: REDUCE, NT(X), <unk>
    with torch.no_grad():
        m.scorer.weight.zero_()
        m.scorer.bias.fill_(1.0)
    mask = torch.tensor([[False, True, True]])
    p = m.masked_log_probs(torch.zeros(1, m.cfg.hidden_dim, dtype=torch.float64), mask).exp()
    assert p.tolist() == [[0.0, 0.5, 0.5]]
    with pytest.raises(ValueError):
        m.masked_log_probs(torch.zeros(1, m.cfg.hidden_dim, dtype=torch.float64),
                           torch.zeros(1, 3, dtype=torch.bool))


def test_initial_state_only_nt():
    m = tiny_model(["A", "B"], ["x", "y"], dtype="float32")
    st = DerivationState(sentence_length=2)
    with torch.no_grad():
        p = m.action_log_probs([m.empty_stack()], [allowed_actions(st)])[0].exp()
    nt_cols = [m.vocab.column(Action(NT, x)) for x in ("A", "B")]
    assert abs(float(p[nt_cols].sum()) - 1) < 1e-6
    assert float(p.sum() - p[nt_cols].sum()) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_distributions_normalized(seed):
    rng = random.Random(seed)
    m = tiny_model(["A", "B"], ["x", "y", "z"], dtype="float32")
    d = _random_derivation(rng, ["A", "B"], ["x", "y", "z"])
    state = DerivationState(sentence_length=sum(a.kind == GEN for a in d))
    node = m.empty_stack()
    lim = m.cfg.limits
    with torch.no_grad():
        for a in d:
            p = m.action_log_probs([node], [allowed_actions(state, lim)])[0].exp()
            assert abs(float(p.sum()) - 1) <= 1e-6
            node = m.apply([node], [a])[0]
            state = state.apply(a)


def _loss(m, ders):
    return -sum(lp.sum() for lp in derivation_log_probs(m, ders))


@pytest.mark.parametrize("ders", [
    [parse_actions("NT(X) GEN(a) REDUCE")],
    [LONG, parse_actions("NT(X) GEN(b) REDUCE")],
])
def test_gradients_match_finite_differences(ders):
    torch.manual_seed(0)
    m = tiny_model(["S", "X"], ["a", "b"], num_layers=2)
    m.zero_grad()
    _loss(m, ders).backward()
    # central differences in float64: a step near cbrt(machine eps) balances
    # truncation against roundoff, which dominates small blocks at 1e-6
    eps = 1e-5
    for name, p in m.named_parameters():
        # autograd leaves .grad unset for blocks the derivation never touches
        g = p.grad.clone() if p.grad is not None else torch.zeros_like(p)
        num = torch.zeros_like(p)
        flat, nflat = p.data.view(-1), num.view(-1)
        for i in range(flat.numel()):
            old = float(flat[i])
            with torch.no_grad():
                flat[i] = old + eps
                up = float(_loss(m, ders))
                flat[i] = old - eps
                down = float(_loss(m, ders))
                flat[i] = old
            nflat[i] = (up - down) / (2 * eps)
        scale = max(float(num.norm()), float(g.norm()))
        if scale < 1e-10:
            continue  # block unused by this derivation (e.g. composition on a one-word tree)
        assert float((g - num).norm()) / scale < 1e-4, name


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_incremental_stack_matches_recompute(seed):
    rng = random.Random(seed)
    m = tiny_model(["A", "B"], ["x", "y"], num_layers=2)
    d = _random_derivation(rng, ["A", "B"], ["x", "y"])
    with torch.no_grad():
        node = m.empty_stack()
        for a in d:
            node = m.apply([node], [a])[0]
            assert float((stack_top_from_scratch(m, node.vectors()) - node.top).abs().max()) <= 1e-9
        naive = naive_scores(m, d)
        fast = derivation_log_probs(m, [d])[0]
    assert float((naive - fast).abs().max()) <= 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_batched_scoring_matches_single(seed):
    rng = random.Random(seed)
    m = tiny_model(["A", "B"], ["x", "y"])
    ders = [_random_derivation(rng, ["A", "B"], ["x", "y"]) for _ in range(5)]
    with torch.no_grad():
        batch = derivation_log_probs(m, ders)
        for d, lp in zip(ders, batch):
            assert float((derivation_log_probs(m, [d])[0] - lp).abs().max()) <= 1e-12


def test_score_derivation_properties():
    m = tiny_model(["S", "X"], ["a", "b"])
    s = score_derivation(m, LONG)
    steps = naive_scores(m, LONG)
    assert abs(s - float(steps.sum().detach())) < 1e-12
    assert 0 < math.exp(s) <= 1
    swapped = parse_actions("NT(S) NT(X) GEN(a) GEN(b) REDUCE NT(X) GEN(a) REDUCE GEN(b) REDUCE")
    assert abs(score_derivation(m, swapped) - s) > 1e-6
    with pytest.raises(ValueError):
        score_derivation(m, parse_actions("NT(S) REDUCE"))


def test_apply_reduce_shrinks_stack():
    m = tiny_model(["S", "NP"], ["The", "pilot"])
    node = m.empty_stack()
    for a in parse_actions("NT(S) NT(NP) GEN(The) GEN(pilot)"):
        node = m.apply([node], [a])[0]
    assert len(node.vectors()) == 4
    reduced = m.apply([node], [Action(REDUCE)])[0]
    assert len(reduced.vectors()) == 2
    assert reduced.parent.is_open and not reduced.is_open


def test_oov_named():
    m = tiny_model(["X"], ["a"])
    with pytest.raises(OutOfVocabulary, match="'zzz'"):
        m.vocab.column(Action(GEN, "zzz"))


def test_training_deterministic_and_degenerate_corpus():
    ders = [parse_actions("NT(X) GEN(a) REDUCE")]
    cfg = RnngConfig(embedding_dim=8, hidden_dim=8, epochs=1, min_updates=150, lr=1e-2)
    m1, log1 = fit(ders, cfg)
    m2, log2 = fit(ders, cfg)
    assert log1.to_csv() == log2.to_csv()
    for (n, a), (_, b) in zip(m1.state_dict().items(), m2.state_dict().items()):
        assert torch.equal(a, b), n
    assert math.exp(score_derivation(m1, ders[0])) > 0.99
    assert log1.to_csv().startswith("epoch,train_nll,valid_nll\n1,")
    nll = [r[1] for r in log1.rows]
    assert all(b <= a for a, b in zip(nll, nll[1:]))


def test_training_rejects_oov():
    m = build_model(ActionVocab(["X"], ["a"]), RnngConfig(embedding_dim=4, hidden_dim=4))
    from udrnng.rnng.train import train
    with pytest.raises(OutOfVocabulary, match="'b'"):
        train(m, [parse_actions("NT(X) GEN(b) REDUCE")])


def test_config_validation():
    with pytest.raises(ValueError):
        RnngConfig(hidden_dim=0)
    with pytest.raises(ValueError):
        RnngConfig(dtype="float16")


# --- beam search ----------------------------------------------------------------
def _exact(m, words, limits, labels):
    ders = enumerate_derivations(words, limits, labels)
    with torch.no_grad():
        s = torch.stack([lp.sum() for lp in derivation_log_probs(m, ders)])
    return float(torch.logsumexp(s, 0))


@pytest.mark.parametrize("words", [["a"], ["a", "b"], ["b", "a", "a"]])
def test_pruned_beam_is_lower_bound(words):
    lim = Limits(3, 3)
    m = tiny_model(["A", "B"], ["a", "b"], max_open_nts=3, max_consecutive_nts=3)
    exact = _exact(m, words, lim, ["A", "B"])
    big = word_sync_beam_search(m, [[w] for w in words], k=5000, k_w=5000, k_s=0, limits=lim)
    assert abs(big.log_marginal - exact) <= 1e-9 * abs(exact)
    for k in (1, 3, 10):
        r = word_sync_beam_search(m, [[w] for w in words], k=k, k_w=k, k_s=0, limits=lim)
        assert r.log_marginal <= exact + 1e-12
        r = word_sync_beam_search(m, [[w] for w in words], k=k, k_w=1, k_s=1, limits=lim)
        assert r.log_marginal <= exact + 1e-12


def test_beam_subword_pieces_stay_together():
    m = tiny_model(["X"], ["lo@@", "w", "a"])
    r = word_sync_beam_search(m, [["lo@@", "w"], ["a"]], k=20, k_w=5)
    for h in r.beam:
        acts = h.actions()
        i = acts.index(Action(GEN, "lo@@"))
        assert acts[i + 1] == Action(GEN, "w")


def test_beam_exhaustion_is_flagged():
    m = tiny_model(["X"], ["a"])
    r = word_sync_beam_search(m, [["a"]], limits=Limits(max_open_nts=0))
    assert r.exhausted and r.log_marginal == -math.inf and r.best is None


def test_beam_argument_checks():
    m = tiny_model(["X"], ["a"])
    with pytest.raises(ValueError):
        word_sync_beam_search(m, [["a"]], k=5, k_w=10)
    with pytest.raises(ValueError):
        word_sync_beam_search(m, [])


def test_uniform_model_perplexity_matches_analytic():
    lim = Limits(3, 3)
    m = tiny_model(["X"], ["a", "b"], max_open_nts=3, max_consecutive_nts=3)
    with torch.no_grad():
        m.scorer.weight.zero_()
        m.scorer.bias.zero_()
    rng = random.Random(3)
    sents = [[[rng.choice("ab")] for _ in range(rng.randint(1, 4))] for _ in range(10)]
    # beam wide enough to keep every derivation, so the marginal is exact
    res = rnng_perplexity(m, sents, k=5000, k_w=5000, k_s=0)
    exact = [uniform_log_marginal(len(s), 1, m.vocab.n_tokens, lim) for s in sents]
    analytic = math.exp(-sum(exact) / sum(len(s) for s in sents))
    assert abs(res.perplexity - analytic) <= 1e-6 * analytic
    # the DP itself agrees with brute-force enumeration
    for s in sents[:4]:
        assert abs(_exact(m, [w[0] for w in s], lim, ["X"]) - uniform_log_marginal(len(s), 1, 3, lim)) < 1e-9


def test_perplexity_excludes_failures():
    r = perplexity([math.log(0.5), -math.inf, math.log(0.25)], [1, 3, 2])
    assert r.n_failed == 1 and r.n_words == 3
    assert abs(r.perplexity - math.exp(-(math.log(0.5) + math.log(0.25)) / 3)) < 1e-12
