"""Word-synchronous beam search, sentence marginals and perplexity."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import torch

from udrnng.convert import ConstTree
from udrnng.oracle import (GEN, NT, REDUCE_ACTION, Action, ActionMask, DerivationState, Limits,
                           actions_to_tree, allowed_actions)
from udrnng.rnng.model import RnngModel, StackNode

logger = logging.getLogger(__name__)


class Hypothesis:
    __slots__ = ("state", "node", "score", "prev", "action", "_mask")

    def __init__(self, state: DerivationState, node: StackNode, score: float,
                 prev: "Hypothesis | None" = None, action: Action | None = None):
        self.state = state
        self.node = node
        self.score = score
        self.prev = prev
        self.action = action
        self._mask = None

    def mask(self, limits: Limits) -> ActionMask:
        # limits are fixed for a whole search, so caching per hypothesis is safe
        if self._mask is None:
            self._mask = allowed_actions(self.state, limits)
        return self._mask

    def actions(self) -> list[Action]:
        out, h = [], self
        while h.action is not None:
            out.append(h.action)
            h = h.prev
        return out[::-1]


@dataclass
class BeamResult:
    log_marginal: float
    beam: list[Hypothesis]
    exhausted: bool = False

    @property
    def best(self) -> Hypothesis | None:
        return max(self.beam, key=lambda h: h.score) if self.beam else None


def _advance(model: RnngModel, hyps: Sequence[Hypothesis], actions: Sequence[Action],
             scores: Sequence[float]) -> list[Hypothesis]:
    nodes = model.apply([h.node for h in hyps], actions, unk=True)
    return [Hypothesis(h.state.apply(a), n, s, h, a)
            for h, a, n, s in zip(hyps, actions, nodes, scores)]


def _log_probs(model: RnngModel, hyps: Sequence[Hypothesis], limits: Limits) -> torch.Tensor:
    masks = [h.mask(limits) for h in hyps]
    return model.action_log_probs([h.node for h in hyps], masks).double()


def _top(scores: Sequence[float], k: int) -> list[int]:
    """Indices of the k best scores; ties keep earlier indices first."""
    return sorted(range(len(scores)), key=lambda i: -scores[i])[:k]


def word_sync_beam_search(model: RnngModel, words: Sequence[Sequence[str]], k: int = 100,
                          k_w: int = 10, k_s: int = 1, limits: Limits | None = None) -> BeamResult:
    """Approximate log p(x) for a sentence given as subword pieces grouped by word.

    GEN is forced to the observed piece.  For each word, hypotheses expand
    through structural actions; the best ``k`` successors survive each round
    plus up to ``k_s`` fast-tracked GEN successors that missed the cut.  A
    word ends when no structural hypothesis is left or ``k`` hypotheses have
    generated it; the word beam is then pruned to ``k_w``.
    """
    if not (k >= k_w >= 1 and k_s >= 0):
        raise ValueError("need k >= k_w >= 1 and k_s >= 0")
    limits = limits or model.cfg.limits
    vocab = model.vocab
    n_struct = 1 + vocab.n_nt  # REDUCE + NT columns
    width = n_struct + 1       # ... plus the forced GEN
    n_pieces = sum(len(w) for w in words)
    if n_pieces == 0:
        raise ValueError("empty sentence")
    init = Hypothesis(DerivationState(sentence_length=n_pieces), model.empty_stack(), 0.0)
    beam = [init]
    with torch.no_grad():
        for pieces in words:
            first = Action(GEN, pieces[0])
            gen_col = vocab.column(first, unk=True)
            current, finished = beam, []
            while current and len(finished) < k:
                # a hypothesis with no legal move is a dead end, not an error
                current = [h for h in current if h.mask(limits).any()]
                if not current:
                    break
                logp = _log_probs(model, current, limits)
                base = torch.tensor([h.score for h in current], dtype=torch.float64).unsqueeze(1)
                cand = torch.cat([logp[:, :n_struct], logp[:, gen_col:gen_col + 1]], 1) + base
                flat = cand.flatten()
                n_live = int(torch.isfinite(flat).sum())
                if n_live == 0:
                    break
                # stable sort keeps the earliest index first among exact ties
                order = torch.sort(flat, descending=True, stable=True).indices
                chosen = order[:min(k, n_live)].tolist()
                if k_s:
                    gen_scores = cand[:, -1].clone()
                    taken = [i // width for i in chosen if i % width == n_struct]
                    if taken:
                        gen_scores[torch.tensor(taken)] = -math.inf
                    live = int(torch.isfinite(gen_scores).sum())
                    if live:
                        fast = torch.sort(gen_scores, descending=True, stable=True).indices[:min(k_s, live)]
                        chosen.extend((fast * width + n_struct).tolist())
                vals = flat[torch.tensor(chosen)].tolist()
                src, acts = [], []
                for i in chosen:
                    r, c = divmod(i, width)
                    src.append(current[r])
                    if c == 0:
                        acts.append(REDUCE_ACTION)
                    elif c < n_struct:
                        acts.append(Action(NT, vocab.nt_labels[c - 1]))
                    else:
                        acts.append(first)
                succ = _advance(model, src, acts, vals)
                current = [h for h in succ if h.action.kind != GEN]
                finished.extend(h for h in succ if h.action.kind == GEN)
            for piece in pieces[1:]:
                if not finished:
                    break
                a = Action(GEN, piece)
                col = vocab.column(a, unk=True)
                logp = _log_probs(model, finished, limits)[:, col].tolist()
                finished = _advance(model, finished, [a] * len(finished),
                                    [h.score + g for h, g in zip(finished, logp)])
            finished = [h for h in finished if h.score > -math.inf]
            if not finished:
                logger.warning("beam exhausted")
                return BeamResult(-math.inf, [], exhausted=True)
            beam = [finished[i] for i in _top([h.score for h in finished], k_w)]
        # close every open constituent; REDUCE is the only legal move now
        while True:
            todo = [h for h in beam if not h.state.complete]
            if not todo:
                break
            logp = _log_probs(model, todo, limits)[:, 0].tolist()
            done = _advance(model, todo, [REDUCE_ACTION] * len(todo),
                            [h.score + g for h, g in zip(todo, logp)])
            beam = [h for h in beam if h.state.complete] + done
    beam = [h for h in beam if h.score > -math.inf]
    if not beam:
        return BeamResult(-math.inf, [], exhausted=True)
    scores = torch.tensor([h.score for h in beam], dtype=torch.float64)
    return BeamResult(float(torch.logsumexp(scores, 0)), beam)


def sentence_log_prob(model: RnngModel, words: Sequence[Sequence[str]], k: int = 100,
                      k_w: int = 10, k_s: int = 1) -> float:
    return word_sync_beam_search(model, words, k, k_w, k_s).log_marginal


def parse(model: RnngModel, words: Sequence[Sequence[str]], k: int = 100, k_w: int = 10,
          k_s: int = 1) -> ConstTree | None:
    """Highest-scoring derivation in the final beam, as a tree over pieces."""
    res = word_sync_beam_search(model, words, k, k_w, k_s)
    return None if res.best is None else actions_to_tree(res.best.actions())


@dataclass
class PerplexityResult:
    perplexity: float
    total_log_prob: float
    n_words: int
    n_sentences: int
    n_failed: int


def perplexity(log_probs: Sequence[float], word_counts: Sequence[int]) -> PerplexityResult:
    """Word-level perplexity; sentences scored -inf are excluded and counted."""
    total, words, failed = 0.0, 0, 0
    for lp, n in zip(log_probs, word_counts):
        if lp == -math.inf:
            failed += 1
            continue
        total += lp
        words += n
    if failed:
        logger.warning("%d sentences had no surviving hypothesis and were excluded", failed)
    ppl = math.exp(-total / words) if words else math.inf
    return PerplexityResult(ppl, total, words, len(log_probs) - failed, failed)


def rnng_perplexity(model: RnngModel, sentences: Sequence[Sequence[Sequence[str]]], k: int = 100,
                    k_w: int = 10, k_s: int = 1) -> PerplexityResult:
    lps = [sentence_log_prob(model, s, k, k_w, k_s) for s in sentences]
    return perplexity(lps, [len(s) for s in sentences])
