"""Dependency-to-constituency conversion and bracketed tree I/O.

Three structural conversions (flat, left-first, right-first) build an
unlabeled skeleton in which every node remembers the word it was introduced
for; one of three labelings (X, POS, DEP) then names the nodes.  Every word
keeps its own unary wrapper node unless wrappers are collapsed afterwards.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator

from udrnng.conllu import DepSentence, is_projective

STRUCTURES = ("flat", "left_first", "right_first")
LABELINGS = ("X", "POS", "DEP")

# CLI spellings
STRUCTURE_ALIASES = {"flat": "flat", "left": "left_first", "left_first": "left_first",
                     "right": "right_first", "right_first": "right_first"}
LABELING_ALIASES = {"x": "X", "pos": "POS", "dep": "DEP"}


class ConversionError(ValueError):
    pass


class BracketParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset


@dataclass
class ConstNode:
    """Internal node (``label`` + ``children``) or leaf (``word``)."""

    label: str | None = None
    children: list["ConstNode"] = field(default_factory=list)
    word: str | None = None
    head: int | None = field(default=None, compare=False)  # 0-based index of NT_w's word

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    @property
    def is_wrapper(self) -> bool:
        return len(self.children) == 1 and self.children[0].is_leaf

    def leaves(self) -> Iterator[str]:
        if self.is_leaf:
            yield self.word
            return
        stack = [self]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node.word
            else:
                stack.extend(reversed(node.children))

    def internal_nodes(self) -> Iterator["ConstNode"]:
        stack = [self]
        while stack:
            node = stack.pop()
            if not node.is_leaf:
                yield node
                stack.extend(reversed(node.children))


@dataclass
class ConstTree:
    root: ConstNode
    structure: str | None = field(default=None, compare=False)
    labeling: str | None = field(default=None, compare=False)

    def leaves(self) -> list[str]:
        return list(self.root.leaves())

    def __str__(self) -> str:
        return to_bracket(self)


def _leaf(word: str) -> ConstNode:
    return ConstNode(word=word)


def _wrapper(sent: DepSentence, i: int) -> ConstNode:
    return ConstNode(children=[_leaf(sent.tokens[i].form)], head=i)


def convert_structure(sent: DepSentence, structure: str) -> ConstTree:
    """Build the unlabeled skeleton for ``sent`` (nodes carry ``head`` only)."""
    structure = STRUCTURE_ALIASES.get(structure, structure)
    if structure not in STRUCTURES:
        raise ConversionError(f"unknown structure {structure!r}")
    if len(sent.tokens) == 0:
        raise ConversionError("empty sentence")
    if not is_projective(sent):
        raise ConversionError(f"sentence {sent.source_id or ''} is non-projective")

    n = len(sent.tokens)
    left: list[list[int]] = [[] for _ in range(n)]
    right: list[list[int]] = [[] for _ in range(n)]
    root = -1
    for t in sent.tokens:  # surface order, so both lists end up sorted
        d = t.id - 1
        if t.head == 0:
            root = d
        elif t.id < t.head:
            left[t.head - 1].append(d)
        else:
            right[t.head - 1].append(d)

    def flat(w: int) -> ConstNode:
        if not left[w] and not right[w]:
            return _wrapper(sent, w)
        kids = [flat(d) for d in left[w]] + [_wrapper(sent, w)] + [flat(d) for d in right[w]]
        return ConstNode(children=kids, head=w)

    # l: first unconsumed left dependent; r: one past the last unconsumed right dependent
    def left_first(w: int, l: int, r: int) -> ConstNode:
        if l < len(left[w]):
            d = left[w][l]
            kids = [left_first(d, 0, len(right[d])), left_first(w, l + 1, r)]
        elif r > 0:
            d = right[w][r - 1]
            kids = [left_first(w, l, r - 1), left_first(d, 0, len(right[d]))]
        else:
            return _wrapper(sent, w)
        return ConstNode(children=kids, head=w)

    def right_first(w: int, l: int, r: int) -> ConstNode:
        if r > 0:
            d = right[w][r - 1]
            kids = [right_first(w, l, r - 1), right_first(d, 0, len(right[d]))]
        elif l < len(left[w]):
            d = left[w][l]
            kids = [right_first(d, 0, len(right[d])), right_first(w, l + 1, r)]
        else:
            return _wrapper(sent, w)
        return ConstNode(children=kids, head=w)

    if structure == "flat":
        node = flat(root)
    elif structure == "left_first":
        node = left_first(root, 0, len(right[root]))
    else:
        node = right_first(root, 0, len(right[root]))
    return ConstTree(node, structure=structure)


def _label_for(sent: DepSentence, i: int, labeling: str) -> str:
    if labeling == "X":
        return "X"
    tok = sent.tokens[i]
    if labeling == "POS":
        return tok.upos + "P"
    return tok.deprel


def label_tree(tree: ConstTree, sent: DepSentence, labeling: str) -> ConstTree:
    labeling = LABELING_ALIASES.get(labeling, labeling)
    if labeling not in LABELINGS:
        raise ConversionError(f"unknown labeling {labeling!r}")
    n = len(sent.tokens)
    for node in tree.root.internal_nodes():
        if node.head is None or not 0 <= node.head < n:
            raise ConversionError(f"node head index {node.head} out of range for {n} tokens")
        node.label = _label_for(sent, node.head, labeling)
    tree.labeling = labeling
    return tree


def convert(sent: DepSentence, structure: str, labeling: str, collapse: bool = False) -> ConstTree:
    tree = label_tree(convert_structure(sent, structure), sent, labeling)
    return collapse_wrappers(tree) if collapse else tree


def collapse_wrappers(tree: ConstTree) -> ConstTree:
    """Attach words directly to their grandparent; a root wrapper is kept."""

    def rebuild(node: ConstNode) -> ConstNode:
        if node.is_leaf:
            return _leaf(node.word)
        kids = [c.children[0] if c.is_wrapper else c for c in node.children]
        kids = [_leaf(c.word) if c.is_leaf else rebuild(c) for c in kids]
        return ConstNode(node.label, kids, head=node.head)

    return ConstTree(rebuild(tree.root), tree.structure, tree.labeling)


def mirror_tree(tree: ConstTree) -> ConstTree:
    def rev(node: ConstNode) -> ConstNode:
        if node.is_leaf:
            return _leaf(node.word)
        return ConstNode(node.label, [rev(c) for c in reversed(node.children)], head=node.head)

    return ConstTree(rev(tree.root), tree.structure, tree.labeling)


def _escape(s: str) -> str:
    return s.replace("(", "-LRB-").replace(")", "-RRB-")


def _unescape(s: str) -> str:
    return s.replace("-LRB-", "(").replace("-RRB-", ")")


def to_bracket(tree: ConstTree | ConstNode) -> str:
    node = tree.root if isinstance(tree, ConstTree) else tree
    out: list[str] = []

    def walk(nd: ConstNode) -> None:
        if nd.is_leaf:
            out.append(_escape(nd.word))
            return
        out.append("(" + _escape(nd.label if nd.label is not None else "_"))
        for c in nd.children:
            out.append(" ")
            walk(c)
        out.append(")")

    walk(node)
    return "".join(out)


_TOKEN = re.compile(r"\(|\)|[^\s()]+")


def from_bracket(text: str) -> ConstTree:
    toks = [(m.group(), m.start()) for m in _TOKEN.finditer(text)]
    if not toks:
        raise BracketParseError("empty bracket text", 0)
    pos = 0

    def parse() -> ConstNode:
        nonlocal pos
        tok, off = toks[pos]
        if tok != "(":
            raise BracketParseError(f"expected '(' but found {tok!r}", off)
        pos += 1
        if pos >= len(toks) or toks[pos][0] in "()":
            at = toks[pos][1] if pos < len(toks) else len(text)
            raise BracketParseError("missing label", at)
        label = _unescape(toks[pos][0])
        pos += 1
        kids = []
        while True:
            if pos >= len(toks):
                raise BracketParseError("unbalanced brackets: missing ')'", len(text))
            tok, off = toks[pos]
            if tok == ")":
                pos += 1
                break
            if tok == "(":
                kids.append(parse())
            else:
                kids.append(_leaf(_unescape(tok)))
                pos += 1
        if not kids:
            raise BracketParseError(f"constituent {label!r} has no children", off)
        return ConstNode(label, kids)

    root = parse()
    if pos != len(toks):
        raise BracketParseError(f"trailing input {toks[pos][0]!r}", toks[pos][1])
    return ConstTree(root)
