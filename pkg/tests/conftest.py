import random
from pathlib import Path

import pytest
import torch

from udrnng.conllu import DepSentence, parse_conllu

torch.set_num_threads(1)

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def give_box() -> DepSentence:
    return parse_conllu((DATA / "give_box.conllu").read_text())[0]


def golden(structure: str, labeling: str) -> str:
    return (DATA / "golden" / f"{structure}_{labeling.lower()}.txt").read_text().strip()


def random_projective(rng: random.Random, n: int) -> DepSentence:
    """Random projective tree: each head takes a contiguous span split into dependents."""
    heads = [0] * n

    def build(lo: int, hi: int, parent: int) -> None:
        # choose a head inside [lo, hi), then recurse on the spans either side
        h = rng.randrange(lo, hi)
        heads[h] = parent
        for a, b in (_cuts(lo, h), _cuts(h + 1, hi)):
            for s, e in zip(a, b):
                build(s, e, h + 1)

    def _cuts(lo: int, hi: int):
        if lo >= hi:
            return [], []
        points = sorted(rng.sample(range(lo + 1, hi), rng.randint(0, hi - lo - 1)))
        starts = [lo] + points
        ends = points + [hi]
        return starts, ends

    build(0, n, 0)
    upos = [rng.choice(["NOUN", "VERB", "DET", "ADP"]) for _ in range(n)]
    deprels = [rng.choice(["nsubj", "obj", "det", "nmod:poss", "case"]) for _ in range(n)]
    for i, h in enumerate(heads):
        if h == 0:
            deprels[i] = "root"
    forms = [rng.choice(["a", "b", "c(", "dd", "e)", "ff"]) for _ in range(n)]
    return DepSentence.from_lists(forms, heads, upos, deprels)


def random_heads(rng: random.Random, n: int) -> list[int]:
    """Uniform random tree (not necessarily projective) via random attachment order."""
    order = list(range(1, n + 1))
    rng.shuffle(order)
    heads = [0] * n
    for k, tok in enumerate(order[1:], 1):
        heads[tok - 1] = rng.choice(order[:k])
    return heads


# --- acceptance summary: one PASS/FAIL line per criterion ---------------------------
_ACCEPTANCE: dict[str, str] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_a"):
        return
    crit = name.split("_")[1].upper()
    if report.when == "call" or report.outcome != "passed":
        prev = _ACCEPTANCE.get(crit)
        if prev != "FAIL":
            _ACCEPTANCE[crit] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_ACCEPTANCE, key=lambda c: int(c[1:])):
        terminalreporter.write_line(f"{crit}: {_ACCEPTANCE[crit]}")
