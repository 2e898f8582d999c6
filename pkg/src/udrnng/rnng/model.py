"""Stack-only RNNG: a stack LSTM over the partial tree with a composition function.

A partial tree is a persistent linked stack of :class:`StackNode`.  Each node
caches the stack-LSTM state obtained after pushing its vector, so pushing is a
single cell step from the parent's state and popping is just following
``parent`` pointers.  Hypotheses in a beam share their common prefix.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import torch
from torch import nn
from torch.nn.utils.rnn import pad_sequence

from udrnng.oracle import GEN, NT, REDUCE, Action, ActionMask, Limits

UNK = "<unk>"


@dataclass
class RnngConfig:
    embedding_dim: int = 64
    hidden_dim: int = 128
    num_layers: int = 1
    lr: float = 3e-3
    epochs: int = 10
    batch_size: int = 16
    # tiny corpora get at least this many optimizer steps; see train()
    min_updates: int = 300
    grad_clip: float = 5.0
    seed: int = 1
    max_open_nts: int = 100
    max_consecutive_nts: int = 10
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("embedding_dim", "hidden_dim", "num_layers", "epochs", "batch_size"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {self.dtype!r}")

    @property
    def limits(self) -> Limits:
        return Limits(self.max_open_nts, self.max_consecutive_nts)

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32

    def to_dict(self) -> dict:
        return asdict(self)


class OutOfVocabulary(KeyError):
    def __str__(self):
        return f"out-of-vocabulary {self.args[0]}"


@dataclass
class ActionVocab:
    """Flat action space: REDUCE, then every NT label, then every token."""

    nt_labels: list[str]
    tokens: list[str]
    nt_index: dict[str, int] = field(init=False, repr=False)
    tok_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if UNK not in self.tokens:
            self.tokens = [UNK] + [t for t in self.tokens]
        self.nt_index = {x: i for i, x in enumerate(self.nt_labels)}
        self.tok_index = {x: i for i, x in enumerate(self.tokens)}

    @classmethod
    def from_derivations(cls, derivations: Sequence[Sequence[Action]]) -> "ActionVocab":
        labels, toks = set(), set()
        for d in derivations:
            for a in d:
                if a.kind == NT:
                    labels.add(a.payload)
                elif a.kind == GEN:
                    toks.add(a.payload)
        toks.discard(UNK)
        return cls(sorted(labels), [UNK] + sorted(toks))

    @property
    def n_nt(self) -> int:
        return len(self.nt_labels)

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    @property
    def size(self) -> int:
        return 1 + self.n_nt + self.n_tokens

    def token_id(self, tok: str, unk: bool = False) -> int:
        i = self.tok_index.get(tok)
        if i is None:
            if not unk:
                raise OutOfVocabulary(f"token {tok!r}")
            return 0
        return i

    def nt_id(self, label: str) -> int:
        i = self.nt_index.get(label)
        if i is None:
            raise OutOfVocabulary(f"nonterminal {label!r}")
        return i

    def column(self, a: Action, unk: bool = False) -> int:
        """Column of ``a`` in the flat action distribution."""
        if a.kind == REDUCE:
            return 0
        if a.kind == NT:
            return 1 + self.nt_id(a.payload)
        return 1 + self.n_nt + self.token_id(a.payload, unk)

    def to_dict(self) -> dict:
        return {"nt_labels": list(self.nt_labels), "tokens": list(self.tokens)}


class _Block:
    """States of one batched push; nodes refer to a row instead of owning tensors."""

    __slots__ = ("h", "c", "top", "vec")

    def __init__(self, h, c, top, vec):
        self.h = h          # [B, layers, hidden] state after pushing vec
        self.c = c
        self.top = top      # [B, hidden] last-layer h, what the action scorer reads
        self.vec = vec      # [B, emb] pushed vectors (None for the empty-stack sentinel)


class StackNode:
    __slots__ = ("block", "row", "parent", "is_open")

    def __init__(self, block: _Block, row: int, parent: "StackNode | None", is_open: bool):
        self.block = block
        self.row = row
        self.parent = parent
        self.is_open = is_open

    @property
    def h(self):
        return self.block.h[self.row]

    @property
    def c(self):
        return self.block.c[self.row]

    @property
    def top(self):
        return self.block.top[self.row]

    @property
    def vec(self):
        return None if self.block.vec is None else self.block.vec[self.row]

    def vectors(self) -> list:
        """Pushed vectors from bottom to top."""
        out, node = [], self
        while node.parent is not None:
            out.append(node.vec)
            node = node.parent
        return out[::-1]


def _gather(nodes: Sequence[StackNode], attr: str) -> torch.Tensor:
    """Stack ``attr`` of every node's row, reading each block with one index op."""
    groups: dict[int, tuple[_Block, list[int], list[int]]] = {}
    for i, n in enumerate(nodes):
        g = groups.get(id(n.block))
        if g is None:
            g = groups[id(n.block)] = (n.block, [], [])
        g[1].append(i)
        g[2].append(n.row)
    parts, order = [], []
    for block, pos, rows in groups.values():
        t = getattr(block, attr)
        if len(rows) == t.shape[0] and rows == list(range(len(rows))):
            parts.append(t)
        else:
            parts.append(t[torch.tensor(rows)])
        order.extend(pos)
    if len(parts) == 1:
        return parts[0]
    out = torch.cat(parts)
    inv = torch.empty(len(order), dtype=torch.long)
    inv[torch.tensor(order)] = torch.arange(len(order))
    return out[inv]


class RnngModel(nn.Module):
    def __init__(self, vocab: ActionVocab, cfg: RnngConfig):
        super().__init__()
        self.vocab = vocab
        self.cfg = cfg
        E, H = cfg.embedding_dim, cfg.hidden_dim
        self.nt_emb = nn.Embedding(max(vocab.n_nt, 1), E)
        self.tok_emb = nn.Embedding(vocab.n_tokens, E)
        self.cells = nn.ModuleList(
            [nn.LSTMCell(E if i == 0 else H, H) for i in range(cfg.num_layers)])
        # bidirectional composition as two unidirectional LSTMs so padded
        # batches stay on the fused kernel; see compose_padded
        self.comp_fwd = nn.LSTM(E, E, batch_first=True)
        self.comp_bwd = nn.LSTM(E, E, batch_first=True)
        self.comp_proj = nn.Linear(2 * E, E)
        self.scorer = nn.Linear(H, vocab.size)
        self.to(cfg.torch_dtype)
        # column -> kind (0 reduce, 1 nt, 2 gen) for expanding kind masks
        kinds = torch.tensor([0] + [1] * vocab.n_nt + [2] * vocab.n_tokens)
        self.register_buffer("col_kind", kinds, persistent=False)

    # --- stack operations -------------------------------------------------
    def empty_stack(self) -> StackNode:
        p = self.scorer.weight
        L, H = self.cfg.num_layers, self.cfg.hidden_dim
        zeros = torch.zeros(1, L, H, dtype=p.dtype)
        return StackNode(_Block(zeros, zeros, zeros[:, -1], None), 0, None, False)

    def _push(self, nodes: Sequence[StackNode], vecs: torch.Tensor, is_open: bool) -> list[StackNode]:
        h_prev = _gather(nodes, "h")
        c_prev = _gather(nodes, "c")
        x = vecs
        hs, cs = [], []
        for i, cell in enumerate(self.cells):
            h, c = cell(x, (h_prev[:, i], c_prev[:, i]))
            hs.append(h)
            cs.append(c)
            x = h
        block = _Block(torch.stack(hs, 1), torch.stack(cs, 1), x, vecs)
        return [StackNode(block, b, nodes[b], is_open) for b in range(len(nodes))]

    def push_nt(self, nodes: Sequence[StackNode], label_ids: Sequence[int]) -> list[StackNode]:
        ids = torch.tensor(label_ids, dtype=torch.long)
        return self._push(nodes, self.nt_emb(ids), True)

    def push_gen(self, nodes: Sequence[StackNode], token_ids: Sequence[int]) -> list[StackNode]:
        ids = torch.tensor(token_ids, dtype=torch.long)
        return self._push(nodes, self.tok_emb(ids), False)

    def compose_padded(self, seqs: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        """Closed-constituent vectors.

        ``seqs`` is [R, m, emb], each row ``[nt_vec, child_1 .. child_k]``
        left-aligned and padded to m; ``lengths`` holds k + 1 per row.
        """
        R, m = seqs.shape[0], seqs.shape[1]
        steps = torch.arange(m)
        last = (lengths - 1).unsqueeze(1)
        # reverse the valid prefix of every row, keep padding in place
        rev = torch.where(steps < lengths.unsqueeze(1), last - steps, steps)
        rows = torch.arange(R)
        fwd, _ = self.comp_fwd(seqs)
        bwd, _ = self.comp_bwd(seqs[rows.unsqueeze(1), rev])
        end = lengths - 1
        both = torch.cat([fwd[rows, end], bwd[rows, end]], dim=-1)
        return torch.tanh(self.comp_proj(both))

    def compose(self, seqs: Sequence[Sequence[torch.Tensor]]) -> torch.Tensor:
        lengths = torch.tensor([len(s) for s in seqs])
        padded = pad_sequence([torch.stack(list(s)) for s in seqs], batch_first=True)
        return self.compose_padded(padded, lengths)

    def push_reduce(self, nodes: Sequence[StackNode]) -> list[StackNode]:
        seqs, bases = [], []
        for node in nodes:
            kids = []
            while not node.is_open:
                if node.parent is None:
                    raise ValueError("REDUCE with no open nonterminal on the stack")
                kids.append(node.vec)
                node = node.parent
            if not kids:
                raise ValueError("REDUCE with empty constituent")
            seqs.append([node.vec] + kids[::-1])
            bases.append(node.parent)
        return self._push(bases, self.compose(seqs), False)

    def apply(self, nodes: Sequence[StackNode], actions: Sequence[Action], unk: bool = False) -> list[StackNode]:
        """Apply one action per node, batching by action kind."""
        out: list[StackNode | None] = [None] * len(nodes)
        groups: dict[str, list[int]] = {NT: [], GEN: [], REDUCE: []}
        for i, a in enumerate(actions):
            groups[a.kind].append(i)
        v = self.vocab
        if groups[NT]:
            idx = groups[NT]
            new = self.push_nt([nodes[i] for i in idx], [v.nt_id(actions[i].payload) for i in idx])
            for i, n in zip(idx, new):
                out[i] = n
        if groups[GEN]:
            idx = groups[GEN]
            new = self.push_gen([nodes[i] for i in idx],
                                [v.token_id(actions[i].payload, unk) for i in idx])
            for i, n in zip(idx, new):
                out[i] = n
        if groups[REDUCE]:
            idx = groups[REDUCE]
            new = self.push_reduce([nodes[i] for i in idx])
            for i, n in zip(idx, new):
                out[i] = n
        return out

    # --- action distribution ---------------------------------------------
    def full_mask(self, masks: Sequence[ActionMask]) -> torch.Tensor:
        kind = torch.tensor([[m.reduce, m.nt, m.gen] for m in masks], dtype=torch.bool)
        return kind[:, self.col_kind]

    def logits(self, tops: torch.Tensor) -> torch.Tensor:
        return self.scorer(tops)

    def masked_log_probs(self, tops: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        if not bool(mask.any(dim=-1).all()):
            raise ValueError("every action is masked in some state")
        logits = self.logits(tops).masked_fill(~mask, float("-inf"))
        return torch.log_softmax(logits, dim=-1)

    def action_log_probs(self, nodes: Sequence[StackNode], masks: Sequence[ActionMask]) -> torch.Tensor:
        return self.masked_log_probs(_gather(nodes, "top"), self.full_mask(masks))


def build_model(vocab: ActionVocab, cfg: RnngConfig) -> RnngModel:
    """Seeded construction, so equal configs give equal initial parameters."""
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(cfg.seed)
    try:
        model = RnngModel(vocab, cfg)
    finally:
        torch.random.set_rng_state(gen_state)
    return model
