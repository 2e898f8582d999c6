"""Span extraction and bracket precision/recall/F1."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from udrnng.convert import ConstNode, ConstTree


class Span(NamedTuple):
    label: str
    start: int
    end: int  # exclusive


class YieldMismatch(ValueError):
    def __init__(self, index: int):
        super().__init__(f"predicted and gold yields differ at sentence {index}")
        self.index = index


def extract_spans(tree: ConstTree | ConstNode) -> Counter:
    """Multiset of labeled spans of width >= 2; unary chains count once per node."""
    root = tree.root if isinstance(tree, ConstTree) else tree
    spans: Counter = Counter()

    def walk(node: ConstNode, start: int) -> int:
        if node.is_leaf:
            return start + 1
        end = start
        for c in node.children:
            end = walk(c, end)
        if end - start >= 2:
            spans[Span(node.label, start, end)] += 1
        return end

    walk(root, 0)
    return spans


@dataclass(frozen=True)
class F1Result:
    precision: float
    recall: float
    f1: float
    matched: int
    n_predicted: int
    n_gold: int
    labeled: bool

    @property
    def degenerate(self) -> bool:
        """No spans on either side, so F1 is 0 by convention."""
        return self.n_predicted == 0 and self.n_gold == 0


def _unlabel(c: Counter) -> Counter:
    out: Counter = Counter()
    for s, n in c.items():
        out[Span("", s.start, s.end)] += n
    return out


def bracket_f1(predicted: Sequence[ConstTree], gold: Sequence[ConstTree], labeled: bool = False) -> F1Result:
    """Corpus-level micro-averaged bracket scores."""
    if len(predicted) != len(gold):
        raise ValueError(f"{len(predicted)} predicted trees but {len(gold)} gold trees")
    matched = n_pred = n_gold = 0
    for i, (p, g) in enumerate(zip(predicted, gold)):
        if p.leaves() != g.leaves():
            raise YieldMismatch(i)
        sp, sg = extract_spans(p), extract_spans(g)
        if not labeled:
            sp, sg = _unlabel(sp), _unlabel(sg)
        matched += sum((sp & sg).values())
        n_pred += sum(sp.values())
        n_gold += sum(sg.values())
    prec = matched / n_pred if n_pred else 0.0
    rec = matched / n_gold if n_gold else 0.0
    # 2PR/(P+R) written over counts, so exact ratios stay exact in floating point
    f1 = 2 * matched / (n_pred + n_gold) if matched else 0.0
    return F1Result(prec, rec, f1, matched, n_pred, n_gold, labeled)
