"""Left-to-right LSTM language model over subword pieces (the sequential baseline)."""
from __future__ import annotations

import logging
import random
from typing import Sequence

import torch
from torch import nn
import torch.nn.functional as F

from udrnng.rnng.model import UNK, OutOfVocabulary, RnngConfig
from udrnng.rnng.train import TrainLog, epochs_for

logger = logging.getLogger(__name__)

BOS, EOS = "<s>", "</s>"


class TokenVocab:
    def __init__(self, tokens: Sequence[str]):
        specials = [UNK, BOS, EOS]
        self.tokens = specials + [t for t in tokens if t not in specials]
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def from_corpus(cls, corpus: Sequence[Sequence[str]]) -> "TokenVocab":
        return cls(sorted({p for s in corpus for p in s}))

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, tok: str, unk: bool = False) -> int:
        i = self.index.get(tok)
        if i is None:
            if not unk:
                raise OutOfVocabulary(f"token {tok!r}")
            return 0
        return i


class LstmLM(nn.Module):
    def __init__(self, vocab: TokenVocab, cfg: RnngConfig):
        super().__init__()
        self.vocab = vocab
        self.cfg = cfg
        self.emb = nn.Embedding(len(vocab), cfg.embedding_dim)
        self.rnn = nn.LSTM(cfg.embedding_dim, cfg.hidden_dim, num_layers=cfg.num_layers,
                           batch_first=True)
        self.out = nn.Linear(cfg.hidden_dim, len(vocab))
        self.to(cfg.torch_dtype)

    def _encode(self, sents: Sequence[Sequence[str]], unk: bool):
        bos, eos = self.vocab.id(BOS), self.vocab.id(EOS)
        seqs = [[bos] + [self.vocab.id(p, unk) for p in s] + [eos] for s in sents]
        width = max(len(s) for s in seqs)
        ids = torch.full((len(seqs), width), eos, dtype=torch.long)
        for i, s in enumerate(seqs):
            ids[i, :len(s)] = torch.tensor(s)
        lengths = torch.tensor([len(s) - 1 for s in seqs])
        return ids, lengths

    def token_log_probs(self, sents: Sequence[Sequence[str]], unk: bool = False) -> torch.Tensor:
        """[batch, steps] log-probabilities of each next piece (and EOS); padding is 0."""
        ids, lengths = self._encode(sents, unk)
        h, _ = self.rnn(self.emb(ids[:, :-1]))
        logp = F.log_softmax(self.out(h), dim=-1)
        picked = logp.gather(2, ids[:, 1:].unsqueeze(2)).squeeze(2)
        valid = torch.arange(ids.shape[1] - 1).unsqueeze(0) < lengths.unsqueeze(1)
        return picked.masked_fill(~valid, 0.0)

    def next_distribution(self, prefix: Sequence[str]) -> torch.Tensor:
        ids, _ = self._encode([list(prefix)], unk=True)
        h, _ = self.rnn(self.emb(ids[:, :-1]))
        return F.softmax(self.out(h[0, -1]), dim=-1)


def build_baseline(vocab: TokenVocab, cfg: RnngConfig) -> LstmLM:
    state = torch.random.get_rng_state()
    torch.manual_seed(cfg.seed)
    try:
        return LstmLM(vocab, cfg)
    finally:
        torch.random.set_rng_state(state)


def train_baseline(model: LstmLM, corpus: Sequence[Sequence[str]],
                   valid: Sequence[Sequence[str]] | None = None) -> TrainLog:
    cfg = model.cfg
    if not corpus:
        raise ValueError("empty training corpus")
    for s in corpus:
        for p in s:
            model.vocab.id(p)
    rng = random.Random(cfg.seed)
    torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    order = list(range(len(corpus)))
    log = TrainLog()
    for epoch in range(1, epochs_for(cfg, len(corpus)) + 1):
        model.train()
        rng.shuffle(order)
        total, count = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            lp = model.token_log_probs([corpus[j] for j in order[i:i + cfg.batch_size]])
            n = sum(len(corpus[j]) + 1 for j in order[i:i + cfg.batch_size])
            loss = -lp.sum() / n
            opt.zero_grad()
            loss.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            total += float(loss.detach()) * n
            count += n
        model.eval()
        valid_nll = baseline_nll(model, valid) if valid else float("nan")
        log.rows.append((epoch, total / count, valid_nll))
        logger.info("epoch %d train_nll=%.4f valid_nll=%.4f", epoch, total / count, valid_nll)
    model.eval()
    return log


def fit_baseline(corpus: Sequence[Sequence[str]], cfg: RnngConfig,
                 valid: Sequence[Sequence[str]] | None = None) -> tuple[LstmLM, TrainLog]:
    model = build_baseline(TokenVocab.from_corpus(corpus), cfg)
    return model, train_baseline(model, corpus, valid)


def baseline_nll(model: LstmLM, corpus: Sequence[Sequence[str]], batch_size: int = 64) -> float:
    """Mean per-token NLL (EOS counted as a token)."""
    total, n = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(corpus), batch_size):
            chunk = corpus[i:i + batch_size]
            total -= float(model.token_log_probs(chunk, unk=True).sum())
            n += sum(len(s) + 1 for s in chunk)
    return total / max(n, 1)


def baseline_log_prob(model: LstmLM, pieces: Sequence[str]) -> float:
    """log p(x): sum of piece log-probabilities plus end of sentence."""
    with torch.no_grad():
        return float(model.token_log_probs([list(pieces)], unk=True).sum())


def baseline_log_probs(model: LstmLM, sents: Sequence[Sequence[str]], batch_size: int = 64) -> list[float]:
    out: list[float] = []
    with torch.no_grad():
        for i in range(0, len(sents), batch_size):
            out.extend(model.token_log_probs(sents[i:i + batch_size], unk=True).sum(1).tolist())
    return out
