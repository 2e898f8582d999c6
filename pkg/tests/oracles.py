"""Independent reference implementations used only by the tests."""
from __future__ import annotations

import itertools


def descendants(heads: list[int], h: int) -> set[int]:
    out = set()
    for d in range(1, len(heads) + 1):
        x = d
        seen = set()
        while x != 0 and x not in seen:
            seen.add(x)
            x = heads[x - 1]
            if x == h:
                out.add(d)
                break
    return out


def projective_by_descendants(heads: list[int]) -> bool:
    """Every token strictly inside an arc descends from the arc's head (root arc from 0)."""
    for d in range(1, len(heads) + 1):
        h = heads[d - 1]
        lo, hi = min(h, d), max(h, d)
        under = descendants(heads, h) if h else set(range(1, len(heads) + 1))
        if any(k not in under for k in range(lo + 1, hi)):
            return False
    return True


def projective_by_crossing(heads: list[int]) -> bool:
    arcs = [(min(h, d), max(h, d)) for d, h in enumerate(heads, 1)]
    for (a, b), (c, d) in itertools.combinations(arcs, 2):
        if a < c < b < d or c < a < d < b:
            return False
    return True
