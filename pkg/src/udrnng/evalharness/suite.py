"""Template grammar for synthetic subject-verb agreement suites.

Every sentence is built together with its dependency analysis, so the
training corpus can go straight into conversion without a parser.  Test
pairs flip the number of exactly one focus verb.

The default training mix avoids giving linear heuristics a free ride: a
fronted PP sometimes puts another noun first, and object relatives appear
only on objects, never on subjects.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from udrnng.conllu import DepSentence
from udrnng.evalharness.pairs import CATEGORIES, MinimalPair

SG, PL = 0, 1


@dataclass(frozen=True)
class GrammarConfig:
    nouns: tuple[tuple[str, str], ...] = (
        ("pilot", "pilots"), ("guard", "guards"), ("surgeon", "surgeons"),
        ("author", "authors"), ("farmer", "farmers"), ("senator", "senators"),
        ("teacher", "teachers"), ("dancer", "dancers"), ("minister", "ministers"),
        ("officer", "officers"),
    )
    intransitive: tuple[tuple[str, str], ...] = (
        ("laughs", "laugh"), ("smiles", "smile"), ("swims", "swim"),
        ("sleeps", "sleep"), ("waits", "wait"), ("shouts", "shout"),
    )
    transitive: tuple[tuple[str, str], ...] = (
        ("loves", "love"), ("likes", "like"), ("admires", "admire"),
        ("hates", "hate"), ("greets", "greet"), ("knows", "know"),
    )
    determiner: str = "the"
    relativizer: str = "that"
    prepositions: tuple[str, ...] = ("near", "behind")
    conjunction: str = "and"
    # training-corpus mix of subject shapes: plain, with PP, subject RC, object RC.
    # Object RCs on subjects are held out by default, so "Across obj rel." pairs
    # test whether RC structure learned on objects transfers to subjects.
    subject_weights: tuple[float, float, float, float] = (0.76, 0.12, 0.12, 0.0)
    # predicate shapes: intransitive, transitive, then each followed by "and" + intransitive
    predicate_weights: tuple[float, float, float, float] = (0.45, 0.3, 0.1, 0.15)
    object_pp_rate: float = 0.2
    # object NPs of transitive verbs can carry an object relative clause
    object_rc_rate: float = 0.2
    # sentence-initial PP adjunct, so the first noun is not always the subject
    fronted_pp_rate: float = 0.3


class SuiteError(ValueError):
    pass


class _Builder:
    """Accumulates tokens; heads are 1-based and patched once known."""

    def __init__(self):
        self.forms: list[str] = []
        self.upos: list[str] = []
        self.heads: list[int] = []
        self.deprels: list[str] = []

    def add(self, form: str, upos: str, head: int = 0, deprel: str = "_") -> int:
        self.forms.append(form)
        self.upos.append(upos)
        self.heads.append(head)
        self.deprels.append(deprel)
        return len(self.forms)

    def attach(self, dep: int, head: int, deprel: str) -> None:
        self.heads[dep - 1] = head
        self.deprels[dep - 1] = deprel

    def sentence(self, source_id: str | None = None) -> DepSentence:
        return DepSentence.from_lists(self.forms, self.heads, self.upos, self.deprels, source_id)


class AgreementGrammar:
    def __init__(self, cfg: GrammarConfig, rng: random.Random):
        self.cfg = cfg
        self.rng = rng

    def num(self) -> int:
        return self.rng.randrange(2)

    def noun(self, n: int) -> str:
        return self.rng.choice(self.cfg.nouns)[n]

    def verb(self, table, n: int) -> str:
        return self.rng.choice(table)[n]

    def np(self, b: _Builder, n: int) -> int:
        d = b.add(self.cfg.determiner, "DET")
        h = b.add(self.noun(n), "NOUN")
        b.attach(d, h, "det")
        return h

    def pp(self, b: _Builder, head: int) -> None:
        p = b.add(self.rng.choice(self.cfg.prepositions), "ADP")
        n = self.np(b, self.num())
        b.attach(p, n, "case")
        b.attach(n, head, "nmod")

    def subject_rc(self, b: _Builder, head: int, n: int) -> None:
        rel = b.add(self.cfg.relativizer, "PRON")
        v = b.add(self.verb(self.cfg.transitive, n), "VERB")
        b.attach(rel, v, "nsubj")
        b.attach(v, head, "acl:relcl")
        b.attach(self.np(b, self.num()), v, "obj")

    def object_rc(self, b: _Builder, head: int, inner: int | None = None) -> int:
        """``that the N2 Vt``; returns the embedded verb's position."""
        rel = b.add(self.cfg.relativizer, "PRON")
        inner = self.num() if inner is None else inner
        subj = self.np(b, inner)
        v = b.add(self.verb(self.cfg.transitive, inner), "VERB")
        b.attach(rel, v, "obj")
        b.attach(subj, v, "nsubj")
        b.attach(v, head, "acl:relcl")
        return v

    def intransitive(self, b: _Builder, n: int) -> int:
        return b.add(self.verb(self.cfg.intransitive, n), "VERB")

    def coordinate(self, b: _Builder, first: int, n: int) -> int:
        cc = b.add(self.cfg.conjunction, "CCONJ")
        v2 = self.intransitive(b, n)
        b.attach(cc, v2, "cc")
        b.attach(v2, first, "conj")
        return v2

    # --- training sentences --------------------------------------------------
    def training_sentence(self) -> DepSentence:
        cfg, rng = self.cfg, self.rng
        b = _Builder()
        fronted = None
        if rng.random() < cfg.fronted_pp_rate:
            p = b.add(rng.choice(cfg.prepositions), "ADP")
            fronted = self.np(b, self.num())
            b.attach(p, fronted, "case")
        n = self.num()
        subj = self.np(b, n)
        shape = rng.choices(range(4), weights=cfg.subject_weights)[0]
        if shape == 1:
            self.pp(b, subj)
        elif shape == 2:
            self.subject_rc(b, subj, n)
        elif shape == 3:
            self.object_rc(b, subj)
        pred = rng.choices(range(4), weights=cfg.predicate_weights)[0]
        if pred in (1, 3):
            v = b.add(self.verb(cfg.transitive, n), "VERB")
            obj = self.np(b, self.num())
            b.attach(obj, v, "obj")
            r = rng.random()
            if r < cfg.object_pp_rate:
                self.pp(b, obj)
            elif r < cfg.object_pp_rate + cfg.object_rc_rate:
                self.object_rc(b, obj)
        else:
            v = self.intransitive(b, n)
        if pred >= 2:
            self.coordinate(b, v, n)
        b.attach(subj, v, "nsubj")
        if fronted is not None:
            b.attach(fronted, v, "obl")
        b.attach(v, 0, "root")
        return b.sentence()

    # --- test pairs -----------------------------------------------------------
    def pair(self, category: str) -> MinimalPair:
        """One grammatical sentence and its twin with the focus verb's number flipped."""
        return self.pair_with_trees(category)[0]

    def pair_with_trees(self, category: str) -> tuple[MinimalPair, DepSentence, DepSentence]:
        """A pair plus dependency analyses of both members (they share heads and labels)."""
        cfg = self.cfg
        b = _Builder()
        n = self.num()
        subj = self.np(b, n)
        focus_n = n
        if category == "Simple":
            v = focus = self.intransitive(b, n)
        elif category == "VP coord (short)":
            v = self.intransitive(b, n)
            focus = self.coordinate(b, v, n)
        elif category == "VP coord (long)":
            v = b.add(self.verb(cfg.transitive, n), "VERB")
            obj = self.np(b, self.num())
            b.attach(obj, v, "obj")
            self.pp(b, obj)
            focus = self.coordinate(b, v, n)
        elif category == "Across subj rel.":
            self.subject_rc(b, subj, n)
            v = focus = self.intransitive(b, n)
        elif category in ("Within obj rel.", "Across obj rel."):
            inner = self.num()
            emb = self.object_rc(b, subj, inner)
            v = self.intransitive(b, n)
            if category == "Within obj rel.":
                focus, focus_n = emb, inner
            else:
                focus = v
        elif category == "Across prep.":
            self.pp(b, subj)
            v = focus = self.intransitive(b, n)
        else:
            raise SuiteError(f"unknown category {category!r}")
        b.attach(subj, v, "nsubj")
        b.attach(v, 0, "root")
        good_tree = b.sentence()
        b.forms[focus - 1] = _flip(cfg, b.forms[focus - 1], focus_n)
        bad_tree = b.sentence()
        pair = MinimalPair(" ".join(good_tree.forms), " ".join(bad_tree.forms), category)
        return pair, good_tree, bad_tree


def _flip(cfg: GrammarConfig, form: str, n: int) -> str:
    for table in (cfg.intransitive, cfg.transitive):
        for forms in table:
            if forms[n] == form:
                return forms[1 - n]
    raise SuiteError(f"{form!r} is not a verb form of number {n}")


@dataclass
class AgreementSuite:
    train: list[DepSentence] = field(default_factory=list)
    pairs: list[MinimalPair] = field(default_factory=list)


def generate_agreement_suite(cfg: GrammarConfig | None = None, n_train: int = 5000,
                             n_pairs: int = 700, seed: int = 1,
                             max_tries: int = 100) -> AgreementSuite:
    """Training corpus plus ``n_pairs`` minimal pairs spread evenly over the categories.

    Pairs are distinct, and neither member of any pair appears in the
    training corpus.  Raises SuiteError when the lexicon is too small to
    meet that within ``max_tries`` draws per item.
    """
    cfg = cfg or GrammarConfig()
    if n_train <= 0 or n_pairs < 0:
        raise SuiteError("need n_train > 0 and n_pairs >= 0")
    rng = random.Random(seed)
    g = AgreementGrammar(cfg, rng)
    pairs: list[MinimalPair] = []
    held: set[str] = set()
    per_cat = [n_pairs // len(CATEGORIES) + (i < n_pairs % len(CATEGORIES))
               for i in range(len(CATEGORIES))]
    for cat, count in zip(CATEGORIES, per_cat):
        for _ in range(count):
            for _ in range(max_tries):
                p = g.pair(cat)
                if p.grammatical not in held:
                    break
            else:
                raise SuiteError(f"lexicon too small for {count} distinct {cat!r} pairs")
            held.update((p.grammatical, p.ungrammatical))
            pairs.append(p)
    train: list[DepSentence] = []
    for i in range(n_train):
        for _ in range(max_tries):
            s = g.training_sentence()
            if " ".join(s.forms) not in held:
                break
        else:
            raise SuiteError("lexicon too small to keep test pairs out of the training corpus")
        train.append(DepSentence(s.tokens, f"train-{i + 1}"))
    return AgreementSuite(train, pairs)
