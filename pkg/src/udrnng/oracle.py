"""Top-down generative actions: tree <-> derivation, and action legality."""
from __future__ import annotations

from typing import Iterable, NamedTuple, Sequence

from udrnng.convert import ConstNode, ConstTree
from udrnng.subword import BpeModel

NT, GEN, REDUCE = "NT", "GEN", "REDUCE"


class DerivationError(ValueError):
    def __init__(self, message: str, index: int):
        super().__init__(f"{message} at index {index}")
        self.index = index


class Action(NamedTuple):
    kind: str
    payload: str | None = None

    def __str__(self) -> str:
        return REDUCE if self.kind == REDUCE else f"{self.kind}({self.payload})"

    @classmethod
    def parse(cls, text: str) -> "Action":
        if text == REDUCE:
            return REDUCE_ACTION
        for kind in (NT, GEN):
            if text.startswith(kind + "(") and text.endswith(")") and len(text) > len(kind) + 2:
                return cls(kind, text[len(kind) + 1:-1])
        raise ValueError(f"cannot parse action {text!r}")


REDUCE_ACTION = Action(REDUCE)


def nt(label: str) -> Action:
    return Action(NT, label)


def gen(token: str) -> Action:
    return Action(GEN, token)


def format_actions(actions: Iterable[Action]) -> str:
    return " ".join(map(str, actions))


def parse_actions(line: str) -> list[Action]:
    return [Action.parse(t) for t in line.split()]


def tree_to_actions(tree: ConstTree | ConstNode, enc: BpeModel | None = None) -> list[Action]:
    """Pre-order traversal: NT on entry, GEN per leaf (or leaf piece), REDUCE on exit."""
    root = tree.root if isinstance(tree, ConstTree) else tree
    out: list[Action] = []
    stack: list[tuple[ConstNode, bool]] = [(root, False)]
    while stack:
        node, leaving = stack.pop()
        if leaving:
            out.append(REDUCE_ACTION)
        elif node.is_leaf:
            pieces = enc.encode_word(node.word) if enc is not None else [node.word]
            out.extend(Action(GEN, p) for p in pieces)
        else:
            out.append(Action(NT, node.label))
            stack.append((node, True))
            stack.extend((c, False) for c in reversed(node.children))
    return out


def actions_to_tree(actions: Sequence[Action]) -> ConstTree:
    """Inverse of tree_to_actions (without subword splitting)."""
    stack: list[ConstNode] = []
    open_idx: list[int] = []  # positions in ``stack`` of open nonterminals
    done = False
    for i, a in enumerate(actions):
        if done:
            raise DerivationError("action after the derivation completed", i)
        if a.kind == NT:
            if stack and not open_idx:
                raise DerivationError("NT outside any open constituent", i)
            open_idx.append(len(stack))
            stack.append(ConstNode(label=a.payload))
        elif a.kind == GEN:
            if not open_idx:
                raise DerivationError("GEN with no open constituent", i)
            stack.append(ConstNode(word=a.payload))
        elif a.kind == REDUCE:
            if not open_idx:
                raise DerivationError("REDUCE with no open constituent", i)
            start = open_idx.pop()
            kids = stack[start + 1:]
            if not kids:
                raise DerivationError("REDUCE with empty constituent", i)
            del stack[start + 1:]
            stack[start].children = kids
            done = not open_idx
        else:
            raise DerivationError(f"unknown action kind {a.kind!r}", i)
    if open_idx:
        raise DerivationError("derivation ends with open constituents", len(actions))
    if not stack:
        raise DerivationError("empty derivation", 0)
    return ConstTree(stack[0])


class Limits(NamedTuple):
    max_open_nts: int = 100
    max_consecutive_nts: int = 10


class ActionMask(NamedTuple):
    nt: bool
    gen: bool
    reduce: bool

    def any(self) -> bool:
        return self.nt or self.gen or self.reduce


class DerivationState(NamedTuple):
    """Bookkeeping for a partial derivation.

    ``open_children`` holds the child count of every open nonterminal, bottom
    to top.  ``sentence_length`` (in GEN tokens) is known when scoring a given
    sentence and None when generating freely.  ``in_word`` is set after a
    non-final subword piece: the next action must continue the word.
    """

    # a NamedTuple rather than a frozen dataclass: beam search builds millions of these
    stack_depth: int = 0
    open_children: tuple[int, ...] = ()
    tokens_emitted: int = 0
    consecutive_nt_run: int = 0
    sentence_length: int | None = None
    in_word: bool = False

    @property
    def open_nt_count(self) -> int:
        return len(self.open_children)

    @property
    def children_of_top_open_nt(self) -> int:
        return self.open_children[-1] if self.open_children else 0

    @property
    def all_consumed(self) -> bool:
        return self.sentence_length is None or self.tokens_emitted >= self.sentence_length

    @property
    def complete(self) -> bool:
        return self.stack_depth == 1 and not self.open_children

    def apply(self, action: Action, marker: str = "@@") -> "DerivationState":
        kind = action.kind
        if kind == NT:
            kids = self.open_children
            if kids:
                kids = kids[:-1] + (kids[-1] + 1,)
            return DerivationState(self.stack_depth + 1, kids + (0,), self.tokens_emitted,
                                   self.consecutive_nt_run + 1, self.sentence_length, False)
        if kind == GEN:
            kids = self.open_children[:-1] + (self.open_children[-1] + 1,)
            in_word = bool(marker) and action.payload.endswith(marker)
            return DerivationState(self.stack_depth + 1, kids, self.tokens_emitted + 1, 0,
                                   self.sentence_length, in_word)
        # REDUCE: the closed constituent replaces its NT and children; the
        # parent already counted it when the NT was opened
        m = self.open_children[-1]
        return DerivationState(self.stack_depth - m, self.open_children[:-1], self.tokens_emitted,
                               0, self.sentence_length, False)


def allowed_actions(st: DerivationState, limits: Limits = Limits()) -> ActionMask:
    if st.complete:
        return ActionMask(False, False, False)
    if st.in_word:
        return ActionMask(False, not st.all_consumed or st.sentence_length is None, False)
    nt_ok = (st.open_nt_count < limits.max_open_nts
             and st.consecutive_nt_run < limits.max_consecutive_nts
             and (st.sentence_length is None or st.tokens_emitted < st.sentence_length)
             and (st.stack_depth == 0 or st.open_nt_count >= 1))
    gen_ok = st.open_nt_count >= 1 and (
        st.sentence_length is None or st.tokens_emitted < st.sentence_length)
    reduce_ok = (st.open_nt_count >= 1 and st.children_of_top_open_nt >= 1
                 and (st.open_nt_count > 1 or st.all_consumed))
    return ActionMask(nt_ok, gen_ok, reduce_ok)


def is_legal(st: DerivationState, action: Action, limits: Limits = Limits()) -> bool:
    mask = allowed_actions(st, limits)
    return {NT: mask.nt, GEN: mask.gen, REDUCE: mask.reduce}[action.kind]


def check_derivation(actions: Sequence[Action], limits: Limits = Limits(),
                     sentence_length: int | None = None, marker: str = "@@") -> DerivationState:
    """Replay ``actions`` through allowed_actions; raise DerivationError at the first illegal one."""
    st = DerivationState(sentence_length=sentence_length)
    for i, a in enumerate(actions):
        if not is_legal(st, a, limits):
            raise DerivationError(f"illegal {a.kind}", i)
        st = st.apply(a, marker)
    if not st.complete:
        raise DerivationError("incomplete derivation", len(actions))
    return st


def count_tokens(actions: Iterable[Action]) -> int:
    return sum(1 for a in actions if a.kind == GEN)
