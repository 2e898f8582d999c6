"""Teacher-forced scoring and training of the RNNG."""
from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

import torch

from udrnng.oracle import GEN, NT, REDUCE, Action, DerivationError, DerivationState, allowed_actions, is_legal
from udrnng.rnng.model import ActionVocab, RnngConfig, RnngModel, build_model

logger = logging.getLogger(__name__)


def _schedule(d: Sequence[Action], limits):
    """Replay ``d`` symbolically: write position and reduce span per step, plus masks."""
    st = DerivationState(sentence_length=sum(a.kind == GEN for a in d))
    depth, open_pos = 0, []
    pos, span, masks = [], [], []
    max_depth = 0
    for t, a in enumerate(d):
        if not is_legal(st, a, limits):
            raise DerivationError(f"illegal {a.kind}", t)
        masks.append(allowed_actions(st, limits))
        st = st.apply(a)
        if a.kind == REDUCE:
            p = open_pos.pop()
            span.append(depth - p)  # NT vector plus its children
            depth = p + 1
        else:
            p = depth
            if a.kind == NT:
                open_pos.append(p)
            span.append(0)
            depth += 1
        pos.append(p)
        max_depth = max(max_depth, depth)
    if d and not st.complete:
        raise DerivationError("incomplete derivation", len(d))
    return pos, span, masks, max_depth


def derivation_log_probs(model: RnngModel, derivations: Sequence[Sequence[Action]],
                         unk: bool = False) -> list[torch.Tensor]:
    """Per-step gold-action log-probabilities for each derivation.

    Derivations advance in lockstep.  The stacks live in dense buffers
    (state after j pushes at row j), updated out of place so autograd sees a
    handful of batched ops per step instead of one per stack element.
    """
    limits = model.cfg.limits
    vocab = model.vocab
    B = len(derivations)
    lengths = [len(d) for d in derivations]
    T = max(lengths, default=0)
    if T == 0:
        return [torch.zeros(0) for _ in range(B)]
    scheds = [_schedule(d, limits) for d in derivations]
    D = max(s[3] for s in scheds)
    L, H, E = model.cfg.num_layers, model.cfg.hidden_dim, model.cfg.embedding_dim
    dtype = model.scorer.weight.dtype

    kinds = [[2] * B for _ in range(T)]      # 0 reduce, 1 nt, 2 gen (also padding)
    ids = [[0] * B for _ in range(T)]
    pos = [[0] * B for _ in range(T)]
    gold = [[0] * B for _ in range(T)]
    mask_kind = [[(False, False, True)] * B for _ in range(T)]
    spans = [[0] * B for _ in range(T)]
    for b, d in enumerate(derivations):
        p, sp, ms, _ = scheds[b]
        for t, a in enumerate(d):
            col = vocab.column(a, unk)
            gold[t][b] = col
            pos[t][b] = p[t]
            spans[t][b] = sp[t]
            m = ms[t]
            mask_kind[t][b] = (m.reduce, m.nt, m.gen)
            if a.kind == NT:
                kinds[t][b], ids[t][b] = 1, col - 1
            elif a.kind == GEN:
                ids[t][b] = col - 1 - vocab.n_nt
            else:
                kinds[t][b] = 0
    is_nt = torch.tensor(kinds).eq(1).unsqueeze(2)
    ids_t = torch.tensor(ids)
    pos_t = torch.tensor(pos)
    nt_ids = ids_t.clamp(max=model.nt_emb.num_embeddings - 1)

    Hs = torch.zeros(B, D + 1, L, H, dtype=dtype)
    Cs = torch.zeros(B, D + 1, L, H, dtype=dtype)
    Vs = torch.zeros(B, D, E, dtype=dtype)
    rows = torch.arange(B)
    tops = [torch.zeros(B, H, dtype=dtype)]
    for t in range(T):
        x = torch.where(is_nt[t], model.nt_emb(nt_ids[t]), model.tok_emb(ids_t[t]))
        red = [b for b in range(B) if kinds[t][b] == 0]
        if red:
            r_idx = torch.tensor(red)
            lens = torch.tensor([spans[t][b] for b in red])
            offs = torch.arange(int(lens.max()))
            gather_pos = (pos_t[t, r_idx].unsqueeze(1) + offs).clamp(max=D - 1)
            composed = model.compose_padded(Vs[r_idx.unsqueeze(1), gather_pos], lens)
            x = x.index_put((r_idx,), composed)
        p = pos_t[t]
        h_prev, c_prev = Hs[rows, p], Cs[rows, p]
        inp = x
        hs, cs = [], []
        for i, cell in enumerate(model.cells):
            h, c = cell(inp, (h_prev[:, i], c_prev[:, i]))
            hs.append(h)
            cs.append(c)
            inp = h
        tops.append(inp)
        if t == T - 1:
            break
        Hs = Hs.index_put((rows, p + 1), torch.stack(hs, 1))
        Cs = Cs.index_put((rows, p + 1), torch.stack(cs, 1))
        Vs = Vs.index_put((rows, p), x)
    gold = torch.tensor(gold)
    mask_kind = torch.tensor(mask_kind)
    top_t = torch.stack(tops[:T])                       # [T, B, H]
    mask = mask_kind[:, :, model.col_kind]              # [T, B, A]
    logp = model.masked_log_probs(top_t, mask)
    picked = logp.gather(2, gold.unsqueeze(2)).squeeze(2)
    return [picked[:lengths[b], b] for b in range(B)]


def score_derivation(model: RnngModel, actions: Sequence[Action], unk: bool = False) -> float:
    """log p(x, y) of one complete derivation."""
    with torch.no_grad():
        return float(derivation_log_probs(model, [actions], unk)[0].sum())


@dataclass
class TrainLog:
    rows: list[tuple[int, float, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,train_nll,valid_nll"]
        for e, tr, va in self.rows:
            lines.append(f"{e},{tr!r},{va!r}")
        return "\n".join(lines) + "\n"


def check_vocab(vocab: ActionVocab, derivations: Sequence[Sequence[Action]]) -> None:
    for d in derivations:
        for a in d:
            vocab.column(a)  # raises OutOfVocabulary naming the token


def epochs_for(cfg: RnngConfig, n_items: int) -> int:
    batches = max(1, math.ceil(n_items / cfg.batch_size))
    return max(cfg.epochs, math.ceil(cfg.min_updates / batches))


def mean_nll(model: RnngModel, derivations: Sequence[Sequence[Action]], batch_size: int = 64) -> float:
    total, n = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(derivations), batch_size):
            for lp in derivation_log_probs(model, derivations[i:i + batch_size]):
                total -= float(lp.sum())
                n += lp.numel()
    return total / max(n, 1)


def train(model: RnngModel, derivations: Sequence[Sequence[Action]],
          valid: Sequence[Sequence[Action]] | None = None) -> TrainLog:
    """Adam on mean per-action NLL of the gold derivations."""
    cfg = model.cfg
    if not derivations:
        raise ValueError("no training derivations")
    check_vocab(model.vocab, derivations)
    rng = random.Random(cfg.seed)
    torch.manual_seed(cfg.seed)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    log = TrainLog()
    order = list(range(len(derivations)))
    n_epochs = epochs_for(cfg, len(derivations))
    for epoch in range(1, n_epochs + 1):
        model.train()
        rng.shuffle(order)
        total, count = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            batch = [derivations[j] for j in order[i:i + cfg.batch_size]]
            lps = derivation_log_probs(model, batch)
            n_act = sum(lp.numel() for lp in lps)
            loss = -torch.cat(lps).sum() / n_act
            opt.zero_grad()
            loss.backward()
            if cfg.grad_clip > 0:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            total += float(loss.detach()) * n_act
            count += n_act
        model.eval()
        valid_nll = mean_nll(model, valid) if valid else float("nan")
        log.rows.append((epoch, total / count, valid_nll))
        logger.info("epoch %d train_nll=%.4f valid_nll=%.4f", epoch, total / count, valid_nll)
    model.eval()
    return log


def fit(derivations: Sequence[Sequence[Action]], cfg: RnngConfig,
        valid: Sequence[Sequence[Action]] | None = None,
        vocab: ActionVocab | None = None) -> tuple[RnngModel, TrainLog]:
    vocab = vocab or ActionVocab.from_derivations(derivations)
    model = build_model(vocab, cfg)
    return model, train(model, derivations, valid)
