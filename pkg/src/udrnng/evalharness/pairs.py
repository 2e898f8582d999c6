"""Minimal-pair agreement scoring."""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

logger = logging.getLogger(__name__)

CATEGORIES = (
    "Simple",
    "VP coord (short)",
    "VP coord (long)",
    "Across subj rel.",
    "Within obj rel.",
    "Across obj rel.",
    "Across prep.",
)


@dataclass(frozen=True)
class MinimalPair:
    grammatical: str
    ungrammatical: str
    category: str

    def __post_init__(self):
        if self.grammatical == self.ungrammatical:
            raise ValueError(f"pair members are identical: {self.grammatical!r}")


@dataclass
class PairScore:
    pair: MinimalPair
    logp_grammatical: float
    logp_ungrammatical: float

    @property
    def correct(self) -> bool:
        # strict: ties (including both -inf) are wrong
        return self.logp_grammatical > self.logp_ungrammatical


@dataclass
class SuiteReport:
    scores: list[PairScore] = field(default_factory=list)
    categories: tuple[str, ...] = CATEGORIES

    def by_category(self) -> "OrderedDict[str, tuple[int, float]]":
        """category -> (n, accuracy); known categories first, then any custom tags."""
        counts: dict[str, list[int]] = {}
        for s in self.scores:
            c = counts.setdefault(s.pair.category, [0, 0])
            c[0] += 1
            c[1] += s.correct
        order = [c for c in self.categories if c in counts]
        order += sorted(c for c in counts if c not in self.categories)
        return OrderedDict((c, (counts[c][0], counts[c][1] / counts[c][0])) for c in order)

    def accuracy(self, category: str) -> float | None:
        row = self.by_category().get(category)
        return None if row is None else row[1]

    @property
    def overall(self) -> float:
        """Unweighted mean over non-empty categories."""
        rows = self.by_category()
        missing = [c for c in self.categories if c not in rows]
        if missing:
            logger.warning("no pairs for categories: %s", ", ".join(missing))
        if not rows:
            return math.nan
        return sum(acc for _, acc in rows.values()) / len(rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["category", "n", "accuracy"])
        for cat, (n, acc) in self.by_category().items():
            w.writerow([cat, n, repr(acc)])
        w.writerow(["average", len(self.scores), repr(self.overall)])
        return buf.getvalue()

    def to_table(self) -> str:
        rows = self.by_category()
        width = max([len("category")] + [len(c) for c in rows])
        lines = [f"{'category':<{width}}  {'n':>5}  accuracy"]
        for cat, (n, acc) in rows.items():
            lines.append(f"{cat:<{width}}  {n:>5}  {acc:.3f}")
        lines.append(f"{'average':<{width}}  {len(self.scores):>5}  {self.overall:.3f}")
        return "\n".join(lines)


def score_pairs(scorer: Callable[[str], float], pairs: Iterable[MinimalPair]) -> SuiteReport:
    """Ask ``scorer`` for log p of both members of every pair."""
    report = SuiteReport()
    for p in pairs:
        report.scores.append(PairScore(p, scorer(p.grammatical), scorer(p.ungrammatical)))
    return report


def score_pairs_batched(scorer: Callable[[Sequence[str]], Sequence[float]],
                        pairs: Sequence[MinimalPair]) -> SuiteReport:
    """Same as score_pairs for scorers that take a list of sentences."""
    sents = [s for p in pairs for s in (p.grammatical, p.ungrammatical)]
    lps = list(scorer(sents))
    if len(lps) != len(sents):
        raise ValueError("scorer returned the wrong number of scores")
    return SuiteReport([PairScore(p, lps[2 * i], lps[2 * i + 1]) for i, p in enumerate(pairs)])


def format_pairs(pairs: Iterable[MinimalPair]) -> str:
    return "".join(f"{p.category}\t{p.grammatical}\t{p.ungrammatical}\n" for p in pairs)


def parse_pairs(text: str) -> list[MinimalPair]:
    out = []
    for n, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise ValueError(f"line {n}: expected 3 tab-separated columns, got {len(cols)}")
        out.append(MinimalPair(cols[1], cols[2], cols[0]))
    return out


def read_pairs(path: str | Path) -> list[MinimalPair]:
    return parse_pairs(Path(path).read_text(encoding="utf-8"))
