"""Pipeline configuration and glue shared by the CLI and the experiment scripts."""
from __future__ import annotations

import dataclasses
import hashlib
import os
import tempfile
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Iterable, Sequence

from udrnng import __version__
from udrnng.conllu import DepSentence, drop_punct, filter_projective, strip_deprel_subtypes
from udrnng.convert import ConstTree, convert
from udrnng.oracle import GEN, Action, tree_to_actions
from udrnng.rnng.model import RnngConfig
from udrnng.subword import BpeModel

CONFIG_ENV = "UDRNNG_CONFIG"


@dataclass
class PipelineConfig:
    structure: str = "flat"
    labeling: str = "DEP"
    collapse_wrappers: bool = False
    drop_punct: bool = False
    strip_deprel_subtypes: bool = False
    bpe_vocab_size: int = 2000
    beam_k: int = 100
    beam_kw: int = 10
    beam_ks: int = 1
    n_train: int = 0
    n_valid: int = 0
    n_test: int = 0
    seed: int = 1
    jobs: int = 1
    labeled_f1: bool = False
    rnng: RnngConfig = field(default_factory=RnngConfig)

    def __post_init__(self):
        # one seed drives every stochastic component
        self.rnng = dataclasses.replace(self.rnng, seed=self.seed)

    def to_items(self) -> list[tuple[str, str]]:
        items = [(f.name, getattr(self, f.name)) for f in fields(self) if f.name != "rnng"]
        items += [(k, v) for k, v in self.rnng.to_dict().items() if k != "seed"]
        return sorted((k, _render(v)) for k, v in items)

    def dumps(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.to_items())

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()[:16]

    def header(self) -> str:
        return f"# udrnng {__version__} seed={self.seed} config_hash={self.hash}"


def _render(v) -> str:
    return str(v).lower() if isinstance(v, bool) else str(v)


def _coerce(name: str, raw: str, typ):
    if typ in (bool, "bool"):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if typ in (int, "int"):
        return int(raw)
    if typ in (float, "float"):
        return float(raw)
    return raw.strip()


_PIPE_FIELDS = {f.name: f.type for f in fields(PipelineConfig) if f.name != "rnng"}
_RNNG_FIELDS = {f.name: f.type for f in fields(RnngConfig) if f.name != "seed"}


def parse_config_text(text: str) -> dict[str, str]:
    """``key=value`` lines; ``#`` starts a comment; blank lines are ignored."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def build_config(file_values: dict[str, str] | None = None,
                 overrides: dict[str, object] | None = None) -> PipelineConfig:
    """Defaults, then config-file values, then explicit overrides (None means unset)."""
    pipe: dict[str, object] = {}
    rnng: dict[str, object] = {}
    merged: dict[str, object] = dict(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    for k, v in merged.items():
        if k in _PIPE_FIELDS:
            pipe[k] = _coerce(k, v, _PIPE_FIELDS[k]) if isinstance(v, str) else v
        elif k in _RNNG_FIELDS:
            rnng[k] = _coerce(k, v, _RNNG_FIELDS[k]) if isinstance(v, str) else v
        else:
            raise ValueError(f"unknown config key {k!r}")
    return PipelineConfig(**pipe, rnng=RnngConfig(**rnng))


def load_config(path: str | Path | None = None, overrides: dict[str, object] | None = None) -> PipelineConfig:
    path = path or os.environ.get(CONFIG_ENV)
    values = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        values = parse_config_text(p.read_text(encoding="utf-8"))
    return build_config(values, overrides)


def write_atomic(path: str | Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --- conversion glue ---------------------------------------------------------
@dataclass
class ConversionReport:
    kept: int = 0
    dropped: int = 0
    skipped_punct: int = 0

    @property
    def rate(self) -> float:
        total = self.kept + self.dropped
        return self.dropped / total if total else 0.0

    def line(self) -> str:
        return f"kept={self.kept} dropped={self.dropped} rate={self.rate:.3f}"


def prepare(sentences: Iterable[DepSentence], cfg: PipelineConfig) -> tuple[list[DepSentence], ConversionReport]:
    """Optional punctuation/subtype clean-up, then the projectivity filter."""
    report = ConversionReport()
    cleaned = []
    for s in sentences:
        if cfg.strip_deprel_subtypes:
            s = strip_deprel_subtypes(s)
        if cfg.drop_punct:
            s = drop_punct(s)
            if s is None:
                report.skipped_punct += 1
                continue
        cleaned.append(s)
    kept, report.dropped = filter_projective(cleaned)
    report.kept = len(kept)
    return kept, report


def convert_corpus(sentences: Iterable[DepSentence], cfg: PipelineConfig) -> tuple[list[ConstTree], ConversionReport]:
    kept, report = prepare(sentences, cfg)
    trees = [convert(s, cfg.structure, cfg.labeling, collapse=cfg.collapse_wrappers) for s in kept]
    return trees, report


def derivations(trees: Iterable[ConstTree], bpe: BpeModel | None = None) -> list[list[Action]]:
    return [tree_to_actions(t, bpe) for t in trees]


def pieces_of(derivation: Sequence[Action]) -> list[str]:
    return [a.payload for a in derivation if a.kind == GEN]


def segment(words: Sequence[str], bpe: BpeModel | None) -> list[list[str]]:
    """Subword pieces grouped by word (one piece per word without a model)."""
    return [bpe.encode_word(w) for w in words] if bpe is not None else [[w] for w in words]


def sentence_scorer(model, bpe: BpeModel | None, cfg: PipelineConfig) -> Callable[[str], float]:
    """log p(sentence) under an RNNG (beam marginal) or the LSTM baseline."""
    from udrnng.rnng.baseline import LstmLM, baseline_log_prob
    from udrnng.rnng.beam import sentence_log_prob

    if isinstance(model, LstmLM):
        return lambda s: baseline_log_prob(model, [p for w in segment(s.split(), bpe) for p in w])
    return lambda s: sentence_log_prob(model, segment(s.split(), bpe), cfg.beam_k, cfg.beam_kw, cfg.beam_ks)
