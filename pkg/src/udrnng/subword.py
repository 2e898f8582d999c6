"""Word-internal byte-pair encoding.

Pieces are plain strings; on output every non-final piece of a word carries
the continuation marker (``@@`` by default), so ``decode`` only has to strip
one marker per non-final piece.
"""
from __future__ import annotations

import heapq
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, TextIO

MODEL_MAGIC = "#udrnng-bpe"


class BpeError(ValueError):
    pass


@dataclass
class BpeModel:
    merges: list[tuple[str, str]]
    alphabet: list[str]
    vocab_size: int
    marker: str = "@@"
    ranks: dict[tuple[str, str], int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._encode = lru_cache(maxsize=1 << 16)(self._encode_uncached)

    @property
    def vocab(self) -> set[str]:
        return set(self.alphabet) | {a + b for a, b in self.merges}

    def is_known(self, piece: str) -> bool:
        return piece.removesuffix(self.marker) in self.vocab

    def _encode_uncached(self, word: str) -> tuple[str, ...]:
        symbols = list(word)
        while len(symbols) > 1:
            best, best_rank = -1, len(self.ranks)
            for i in range(len(symbols) - 1):
                rank = self.ranks.get((symbols[i], symbols[i + 1]))
                if rank is not None and rank < best_rank:
                    best, best_rank = i, rank
            if best < 0:
                break
            a, b = self.merges[best_rank]
            merged: list[str] = []
            i = 0
            while i < len(symbols):
                if i < len(symbols) - 1 and symbols[i] == a and symbols[i + 1] == b:
                    merged.append(a + b)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        return tuple(s + self.marker for s in symbols[:-1]) + tuple(symbols[-1:])

    def encode_word(self, word: str) -> list[str]:
        return list(self._encode(word))

    def encode_sentence(self, words: Sequence[str]) -> list[list[str]]:
        return [self.encode_word(w) for w in words]

    def decode(self, pieces: Sequence[str]) -> str:
        return decode(pieces, self.marker)

    # --- persistence -----------------------------------------------------
    def dumps(self) -> str:
        lines = [f"{MODEL_MAGIC} version=1 vocab_size={self.vocab_size} marker={self.marker}",
                 "#alphabet " + " ".join(self.alphabet)]
        lines += [f"{a} {b}" for a, b in self.merges]
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "BpeModel":
        lines = text.splitlines()
        if not lines or not lines[0].startswith(MODEL_MAGIC):
            raise BpeError("not a BPE model file (bad header)")
        header = dict(kv.split("=", 1) for kv in lines[0].split()[1:])
        if len(lines) < 2 or not lines[1].startswith("#alphabet"):
            raise BpeError("BPE model file lacks an alphabet line")
        alphabet = lines[1].split()[1:]
        merges = []
        for ln, line in enumerate(lines[2:], start=3):
            parts = line.split(" ")
            if len(parts) != 2:
                raise BpeError(f"line {ln}: expected a merge pair")
            merges.append((parts[0], parts[1]))
        return cls(merges, alphabet, int(header["vocab_size"]), header.get("marker", "@@"))

    @classmethod
    def load(cls, path) -> "BpeModel":
        with open(path, encoding="utf-8") as f:
            return cls.loads(f.read())


def decode(pieces: Sequence[str], marker: str = "@@") -> str:
    out = [p.removesuffix(marker) for p in pieces[:-1]]
    out.extend(pieces[-1:])
    return "".join(out)


def train_bpe(corpus: Iterable[str], vocab_size: int, marker: str = "@@") -> BpeModel:
    """Greedy merge learning over word types.

    The most frequent adjacent pair is merged first; ties go to the
    lexicographically smallest pair.  Stops at ``vocab_size`` symbols or when
    no pair is left.
    """
    freqs = Counter(w for w in corpus if w)
    if not freqs:
        raise BpeError("empty corpus")
    alphabet = sorted({ch for w in freqs for ch in w})
    if vocab_size < len(alphabet):
        raise BpeError(f"vocab_size {vocab_size} is smaller than the alphabet ({len(alphabet)})")

    words = [list(w) for w in freqs]
    counts = list(freqs.values())
    pair_count: Counter = Counter()
    where: dict[tuple[str, str], set[int]] = defaultdict(set)
    for wi, syms in enumerate(words):
        for p in zip(syms, syms[1:]):
            pair_count[p] += counts[wi]
            where[p].add(wi)
    heap = [(-c, p) for p, c in pair_count.items()]
    heapq.heapify(heap)

    merges: list[tuple[str, str]] = []
    n_symbols = len(alphabet)
    known = set(alphabet)
    while n_symbols < vocab_size and heap:
        negc, pair = heapq.heappop(heap)
        if pair_count.get(pair, 0) != -negc or negc == 0:
            continue  # stale entry
        merges.append(pair)
        new = pair[0] + pair[1]
        if new not in known:
            known.add(new)
            n_symbols += 1
        a, b = pair
        touched: set[tuple[str, str]] = set()
        for wi in sorted(where.pop(pair, ())):
            syms, c = words[wi], counts[wi]
            for p in zip(syms, syms[1:]):
                pair_count[p] -= c
                touched.add(p)
            merged: list[str] = []
            i = 0
            while i < len(syms):
                if i < len(syms) - 1 and syms[i] == a and syms[i + 1] == b:
                    merged.append(new)
                    i += 2
                else:
                    merged.append(syms[i])
                    i += 1
            words[wi] = merged
            for p in zip(merged, merged[1:]):
                pair_count[p] += c
                where[p].add(wi)
                touched.add(p)
        for p in touched:
            c = pair_count[p]
            if c > 0:
                heapq.heappush(heap, (-c, p))
            else:
                pair_count.pop(p, None)
    return BpeModel(merges, alphabet, vocab_size, marker)


def read_words(stream: TextIO) -> Iterable[str]:
    for line in stream:
        yield from line.split()
