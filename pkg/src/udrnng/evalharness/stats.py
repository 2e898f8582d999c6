"""Corpus statistics over derivations: depth, branching, action mix, GEN runs."""
from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

from udrnng.convert import ConstNode, ConstTree
from udrnng.oracle import GEN, NT, REDUCE, Action, actions_to_tree, tree_to_actions


def tree_depth(tree: ConstTree | ConstNode) -> int:
    """Nesting depth counting only non-wrapper internal nodes."""
    root = tree.root if isinstance(tree, ConstTree) else tree
    best = 0
    stack = [(root, 0)]
    while stack:
        node, d = stack.pop()
        if node.is_leaf:
            continue
        if not node.is_wrapper:
            d += 1
        best = max(best, d)
        stack.extend((c, d) for c in node.children)
    return best


def gen_runs(actions: Sequence[Action]) -> list[int]:
    runs, cur = [], 0
    for a in actions:
        if a.kind == GEN:
            cur += 1
        elif cur:
            runs.append(cur)
            cur = 0
    if cur:
        runs.append(cur)
    return runs


@dataclass
class CorpusStats:
    n_sentences: int
    mean_depth: float
    max_depth: int
    mean_branching: float
    n_nt: int
    n_gen: int
    n_reduce: int
    mean_gen_run: float
    max_gen_run: int
    nt_gen_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self) -> str:
        d = self.to_dict()
        return "stat,value\n" + "".join(f"{k},{v!r}\n" for k, v in d.items())


def _as_derivation(item) -> list[Action]:
    if isinstance(item, (ConstTree, ConstNode)):
        return tree_to_actions(item)
    return list(item)


def corpus_stats(items: Iterable[ConstTree | Sequence[Action]]) -> CorpusStats:
    """Statistics over trees or derivations (mixed input is fine)."""
    depths: list[int] = []
    branching: list[int] = []
    hist: Counter = Counter()
    runs: list[int] = []
    for item in items:
        d = _as_derivation(item)
        tree = item if isinstance(item, ConstTree) else actions_to_tree(d)
        depths.append(tree_depth(tree))
        branching.extend(len(n.children) for n in tree.root.internal_nodes() if not n.is_wrapper)
        hist.update(a.kind for a in d)
        runs.extend(gen_runs(d))
    n = len(depths)
    return CorpusStats(
        n_sentences=n,
        mean_depth=sum(depths) / n if n else 0.0,
        max_depth=max(depths, default=0),
        mean_branching=sum(branching) / len(branching) if branching else 0.0,
        n_nt=hist[NT],
        n_gen=hist[GEN],
        n_reduce=hist[REDUCE],
        mean_gen_run=sum(runs) / len(runs) if runs else 0.0,
        max_gen_run=max(runs, default=0),
        nt_gen_ratio=hist[NT] / hist[GEN] if hist[GEN] else 0.0,
    )
