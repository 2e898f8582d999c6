"""CoNLL-U reading, validation and projectivity filtering."""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, TextIO

logger = logging.getLogger(__name__)


class ConlluParseError(ValueError):
    """A line of CoNLL-U input could not be parsed."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class ConlluValidationError(ValueError):
    """A sentence parsed fine but is not a well-formed dependency tree."""

    def __init__(self, message: str, source_id: str | None):
        super().__init__(f"sentence {source_id or '<unnamed>'}: {message}")
        self.source_id = source_id


@dataclass(frozen=True)
class Token:
    id: int
    form: str
    upos: str
    head: int
    deprel: str


@dataclass(frozen=True)
class DepSentence:
    tokens: tuple[Token, ...]
    source_id: str | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    @property
    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]

    @property
    def root(self) -> int:
        """1-based id of the sentence head."""
        return next(t.id for t in self.tokens if t.head == 0)

    def dependents(self) -> list[list[int]]:
        """Dependents (1-based ids, surface order) indexed by head id; index 0 is the virtual root."""
        deps: list[list[int]] = [[] for _ in range(len(self.tokens) + 1)]
        for t in self.tokens:
            deps[t.head].append(t.id)
        return deps

    @classmethod
    def from_lists(cls, forms, heads, upos=None, deprels=None, source_id=None) -> "DepSentence":
        n = len(forms)
        upos = upos or ["_"] * n
        deprels = deprels or ["_"] * n
        toks = tuple(
            Token(i + 1, forms[i], upos[i], heads[i], deprels[i]) for i in range(n)
        )
        sent = cls(toks, source_id)
        validate(sent)
        return sent


def validate(sent: DepSentence) -> None:
    """Raise ConlluValidationError unless ``sent`` is a single-rooted tree over ids 1..n."""
    sid = sent.source_id
    n = len(sent.tokens)
    if n == 0:
        raise ConlluValidationError("empty sentence", sid)
    for i, t in enumerate(sent.tokens, start=1):
        if t.id != i:
            raise ConlluValidationError(f"token ids not consecutive at {t.id}", sid)
        if not t.form:
            raise ConlluValidationError(f"empty form at token {t.id}", sid)
        if t.head < 0 or t.head > n:
            raise ConlluValidationError(f"head {t.head} of token {t.id} out of range", sid)
        if t.head == t.id:
            raise ConlluValidationError(f"token {t.id} is its own head", sid)
    roots = [t.id for t in sent.tokens if t.head == 0]
    if len(roots) != 1:
        raise ConlluValidationError(f"expected exactly one root, found {len(roots)}", sid)
    heads = [0] + [t.head for t in sent.tokens]
    # every token must reach 0 within n steps, otherwise there is a cycle
    for start in range(1, n + 1):
        node, steps = start, 0
        while node != 0:
            node = heads[node]
            steps += 1
            if steps > n:
                raise ConlluValidationError(f"cycle through token {start}", sid)


def _blocks(stream: TextIO | str) -> Iterator[tuple[int, list[tuple[int, str]]]]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    block: list[tuple[int, str]] = []
    start = 1
    for line_no, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if block:
                yield start, block
            block = []
            start = line_no + 1
            continue
        if not block:
            start = line_no
        block.append((line_no, line))
    if block:
        yield start, block


def _parse_block(block: list[tuple[int, str]]) -> DepSentence:
    source_id = None
    toks: list[Token] = []
    for line_no, line in block:
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("sent_id") and "=" in body:
                source_id = body.split("=", 1)[1].strip()
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(f"expected 10 tab-separated columns, got {len(cols)}", line_no)
        tid = cols[0]
        if "-" in tid or "." in tid:
            continue  # multiword token range or empty node
        try:
            id_ = int(tid)
        except ValueError:
            raise ConlluParseError(f"non-integer id {tid!r}", line_no) from None
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(f"non-integer head {cols[6]!r}", line_no) from None
        toks.append(Token(id_, cols[1], cols[3], head, cols[7]))
    sent = DepSentence(tuple(toks), source_id)
    validate(sent)
    return sent


def parse_conllu(stream: TextIO | str) -> list[DepSentence]:
    """Parse CoNLL-U text into sentences.

    Raises ConlluParseError for malformed lines and ConlluValidationError for
    sentences that are not single-rooted trees.
    """
    out = []
    for _, block in _blocks(stream):
        if all(line.startswith("#") for _, line in block):
            continue
        out.append(_parse_block(block))
    return out


def parse_conllu_lenient(stream: TextIO | str) -> tuple[list[DepSentence], int]:
    """Like parse_conllu but skips (and counts) sentences failing validation.

    Malformed lines still raise: they indicate a broken file, not a bad tree.
    """
    out, skipped = [], 0
    for _, block in _blocks(stream):
        if all(line.startswith("#") for _, line in block):
            continue
        try:
            out.append(_parse_block(block))
        except ConlluValidationError as exc:
            logger.warning("skipping invalid sentence: %s", exc)
            skipped += 1
    return out, skipped


def iter_arcs(sent: DepSentence) -> Iterator[tuple[int, int]]:
    for t in sent.tokens:
        yield t.head, t.id


def is_projective(sent: DepSentence) -> bool:
    """True iff every subtree covers a contiguous span (the virtual root sits at position 0)."""
    n = len(sent.tokens)
    heads = [0] + [t.head for t in sent.tokens]
    lo = list(range(n + 1))
    hi = list(range(n + 1))
    size = [1] * (n + 1)
    # children before parents: order tokens by depth, deepest first
    depth = [0] * (n + 1)
    for i in range(1, n + 1):
        d, node = 0, i
        while node != 0:
            node = heads[node]
            d += 1
        depth[i] = d
    for i in sorted(range(1, n + 1), key=lambda j: -depth[j]):
        h = heads[i]
        lo[h] = min(lo[h], lo[i])
        hi[h] = max(hi[h], hi[i])
        size[h] += size[i]
    return all(hi[i] - lo[i] + 1 == size[i] for i in range(n + 1))


def filter_projective(sentences: Iterable[DepSentence]) -> tuple[list[DepSentence], int]:
    kept, dropped = [], 0
    for s in sentences:
        if is_projective(s):
            kept.append(s)
        else:
            dropped += 1
    return kept, dropped


def strip_deprel_subtypes(sent: DepSentence) -> DepSentence:
    toks = tuple(replace(t, deprel=t.deprel.split(":", 1)[0]) for t in sent.tokens)
    return DepSentence(toks, sent.source_id)


def drop_punct(sent: DepSentence) -> DepSentence | None:
    """Remove tokens with deprel ``punct``.

    Returns None when a punct token has dependents (nothing is reattached) or
    when nothing would remain.
    """
    punct = {t.id for t in sent.tokens if t.deprel == "punct"}
    if not punct:
        return sent
    if any(t.head in punct for t in sent.tokens):
        return None
    kept = [t for t in sent.tokens if t.id not in punct]
    if not kept:
        return None
    new_id = {0: 0}
    for i, t in enumerate(kept, start=1):
        new_id[t.id] = i
    toks = tuple(replace(t, id=new_id[t.id], head=new_id[t.head]) for t in kept)
    return DepSentence(toks, sent.source_id)


def mirror(sent: DepSentence) -> DepSentence:
    """Reverse token order, remapping heads (0 stays 0)."""
    n = len(sent.tokens)
    toks = tuple(
        replace(t, id=n + 1 - t.id, head=0 if t.head == 0 else n + 1 - t.head)
        for t in reversed(sent.tokens)
    )
    return DepSentence(toks, sent.source_id)


def format_conllu(sentences: Iterable[DepSentence]) -> str:
    """Serialize to 10-column CoNLL-U; unretained columns are written as ``_``."""
    parts = []
    for s in sentences:
        lines = []
        if s.source_id is not None:
            lines.append(f"# sent_id = {s.source_id}")
        lines.append("# text = " + " ".join(s.forms))
        for t in s.tokens:
            lines.append(
                f"{t.id}\t{t.form}\t_\t{t.upos}\t_\t_\t{t.head}\t{t.deprel}\t_\t_"
            )
        parts.append("\n".join(lines) + "\n\n")
    return "".join(parts)
