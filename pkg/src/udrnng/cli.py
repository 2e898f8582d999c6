"""Command-line front end: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import logging
import random
import sys
from pathlib import Path
from typing import Sequence

from udrnng.conllu import ConlluParseError, format_conllu, parse_conllu, parse_conllu_lenient
from udrnng.convert import LABELING_ALIASES, STRUCTURE_ALIASES, from_bracket, to_bracket
from udrnng.oracle import format_actions, parse_actions
from udrnng.pipeline import (PipelineConfig, convert_corpus, derivations, load_config, pieces_of,
                             sentence_scorer, write_atomic)

logger = logging.getLogger("udrnng")


class UsageError(Exception):
    pass


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"cannot read {path}")
    return p.read_text(encoding="utf-8")


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def _diag(**kv) -> None:
    print(" ".join(f"{k}={v}" for k, v in kv.items()), file=sys.stderr)


def _lines(text: str) -> list[str]:
    return [ln for ln in text.splitlines() if ln.strip()]


def _load_bpe(path: str | None):
    if not path:
        return None
    from udrnng.subword import BpeModel

    if not Path(path).is_file():
        raise UsageError(f"BPE model not found: {path}")
    return BpeModel.load(path)


def _load_model(path: str):
    from udrnng.rnng.checkpoint import load_checkpoint

    return load_checkpoint(path)


# --- commands ----------------------------------------------------------------
def cmd_convert(args, cfg: PipelineConfig) -> int:
    sents, skipped = parse_conllu_lenient(_read(args.input))
    trees, report = convert_corpus(sents, cfg)
    _write(args.output, "".join(to_bracket(t) + "\n" for t in trees))
    print(report.line(), file=sys.stderr)
    _diag(invalid_skipped=skipped, punct_skipped=report.skipped_punct)
    return 0


def cmd_split(args, cfg: PipelineConfig) -> int:
    sents = parse_conllu(_read(args.input))
    sizes = (cfg.n_train, cfg.n_valid, cfg.n_test)
    if sum(sizes) > len(sents):
        raise UsageError(f"requested {sum(sizes)} sentences but the corpus has {len(sents)}")
    order = list(range(len(sents)))
    random.Random(cfg.seed).shuffle(order)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    start = 0
    for name, n in zip(("train", "valid", "test"), sizes):
        part = [sents[i] for i in order[start:start + n]]
        start += n
        write_atomic(out / f"{name}.conllu", format_conllu(part))
    _diag(train=sizes[0], valid=sizes[1], test=sizes[2], unused=len(sents) - sum(sizes))
    return 0


def _words_from(text: str) -> list[list[str]]:
    """Sentences as word lists, from CoNLL-U or one-sentence-per-line text."""
    if any(ln.split("\t")[0].isdigit() and ln.count("\t") == 9 for ln in text.splitlines()[:50]):
        return [s.forms for s in parse_conllu(text)]
    return [ln.split() for ln in _lines(text)]


def cmd_bpe_train(args, cfg: PipelineConfig) -> int:
    from udrnng.subword import train_bpe

    words = [w for s in _words_from(_read(args.input)) for w in s]
    model = train_bpe(words, cfg.bpe_vocab_size)
    write_atomic(args.output, model.dumps())
    _diag(merges=len(model.merges), vocab=len(model.vocab))
    return 0


def cmd_bpe_apply(args, cfg: PipelineConfig) -> int:
    bpe = _load_bpe(args.model)
    out = [" ".join(p for w in s for p in bpe.encode_word(w)) for s in _words_from(_read(args.input))]
    _write(args.output, "".join(ln + "\n" for ln in out))
    return 0


def cmd_oracle(args, cfg: PipelineConfig) -> int:
    bpe = _load_bpe(args.bpe)
    trees = [from_bracket(ln) for ln in _lines(_read(args.input))]
    _write(args.output, "".join(format_actions(d) + "\n" for d in derivations(trees, bpe)))
    return 0


def _read_derivations(path: str):
    return [parse_actions(ln) for ln in _lines(_read(path))]


def cmd_train(args, cfg: PipelineConfig) -> int:
    from udrnng.rnng.checkpoint import save_checkpoint

    train_d = _read_derivations(args.input)
    valid_d = _read_derivations(args.valid) if args.valid else None
    if not train_d:
        raise UsageError("no training derivations")
    if args.arch == "rnng":
        from udrnng.rnng.model import ActionVocab
        from udrnng.rnng.train import fit

        vocab = ActionVocab.from_derivations(train_d + (valid_d or []))
        model, log = fit(train_d, cfg.rnng, valid_d, vocab)
    else:
        from udrnng.rnng.baseline import TokenVocab, build_baseline, train_baseline

        corpus = [pieces_of(d) for d in train_d]
        valid = [pieces_of(d) for d in valid_d] if valid_d else None
        model = build_baseline(TokenVocab.from_corpus(corpus + (valid or [])), cfg.rnng)
        log = train_baseline(model, corpus, valid)
    save_checkpoint(model, args.model)
    if args.log:
        write_atomic(args.log, log.to_csv())
    last = log.rows[-1]
    _diag(epochs=last[0], train_nll=f"{last[1]:.6f}", valid_nll=f"{last[2]:.6f}")
    return 0


def cmd_ppl(args, cfg: PipelineConfig) -> int:
    from udrnng.rnng.beam import perplexity

    model = _load_model(args.model)
    bpe = _load_bpe(args.bpe)
    sents = _words_from(_read(args.input))
    score = sentence_scorer(model, bpe, cfg)
    lps = [score(" ".join(s)) for s in sents]
    res = perplexity(lps, [len(s) for s in sents])
    csv = ("sentences,words,failed,total_log_prob,perplexity\n"
           f"{res.n_sentences},{res.n_words},{res.n_failed},{res.total_log_prob!r},{res.perplexity!r}\n")
    if args.output:
        write_atomic(args.output, csv)
    print(f"ppl={res.perplexity:.4f} sentences={res.n_sentences} words={res.n_words} failed={res.n_failed}")
    return 0


def cmd_score_pairs(args, cfg: PipelineConfig) -> int:
    from udrnng.evalharness import read_pairs, score_pairs

    if not Path(args.pairs).is_file():
        raise UsageError(f"cannot read {args.pairs}")
    pairs = read_pairs(args.pairs)
    if args.scorer == "oracle":
        # test mode: +1 for every grammatical member, so accuracy is 1.0 by construction
        good = {p.grammatical for p in pairs}
        scorer = lambda s: 1.0 if s in good else 0.0  # noqa: E731
    else:
        if not args.model:
            raise UsageError("--model is required unless --scorer oracle")
        scorer = sentence_scorer(_load_model(args.model), _load_bpe(args.bpe), cfg)
    report = score_pairs(scorer, pairs)
    if args.output:
        write_atomic(args.output, report.to_csv())
    print(report.to_table())
    return 0


def cmd_f1(args, cfg: PipelineConfig) -> int:
    from udrnng.evalharness import bracket_f1

    pred = [from_bracket(ln) for ln in _lines(_read(args.pred))]
    gold = [from_bracket(ln) for ln in _lines(_read(args.gold))]
    labeled = args.labeled or cfg.labeled_f1
    r = bracket_f1(pred, gold, labeled)
    csv = ("mode,precision,recall,f1,matched,predicted,gold,degenerate\n"
           f"{'labeled' if labeled else 'unlabeled'},{r.precision!r},{r.recall!r},{r.f1!r},"
           f"{r.matched},{r.n_predicted},{r.n_gold},{str(r.degenerate).lower()}\n")
    if args.output:
        write_atomic(args.output, csv)
    print(f"{'labeled' if labeled else 'unlabeled'} P={r.precision:.4f} R={r.recall:.4f} F1={r.f1:.4f}"
          + (" (degenerate: no spans)" if r.degenerate else ""))
    return 0


def cmd_stats(args, cfg: PipelineConfig) -> int:
    from udrnng.evalharness import corpus_stats

    lines = _lines(_read(args.input))
    if lines and lines[0].lstrip().startswith("("):
        items = [from_bracket(ln) for ln in lines]
    else:
        items = [parse_actions(ln) for ln in lines]
    csv = corpus_stats(items).to_csv()
    _write(args.output, csv)
    return 0


def cmd_gen_suite(args, cfg: PipelineConfig) -> int:
    from udrnng.evalharness import format_pairs, generate_agreement_suite

    suite = generate_agreement_suite(n_train=args.n_train, n_pairs=args.n_pairs, seed=cfg.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "train.conllu", format_conllu(suite.train))
    write_atomic(out / "pairs.tsv", format_pairs(suite.pairs))
    _diag(train=len(suite.train), pairs=len(suite.pairs))
    return 0


# --- argument parsing ----------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="udrnng", description=__doc__)
    p.add_argument("--config", help="key=value config file (default: $UDRNNG_CONFIG)")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, help="worker count (only 1 is deterministic and supported)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(fn=fn)
        return sp

    sp = add("convert", cmd_convert, "CoNLL-U to bracketed constituency trees")
    sp.add_argument("input")
    sp.add_argument("-o", "--output")
    sp.add_argument("--structure", choices=sorted(STRUCTURE_ALIASES))
    sp.add_argument("--label", dest="labeling", type=str.lower, choices=sorted(LABELING_ALIASES))
    sp.add_argument("--collapse-wrappers", action="store_const", const=True)
    sp.add_argument("--drop-punct", action="store_const", const=True)
    sp.add_argument("--strip-deprel-subtypes", action="store_const", const=True)

    sp = add("split", cmd_split, "random train/valid/test split of a CoNLL-U file")
    sp.add_argument("input")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--train", dest="n_train", type=int)
    sp.add_argument("--valid", dest="n_valid", type=int)
    sp.add_argument("--test", dest="n_test", type=int)

    sp = add("bpe-train", cmd_bpe_train, "learn BPE merges from CoNLL-U or plain text")
    sp.add_argument("input")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--vocab-size", dest="bpe_vocab_size", type=int)

    sp = add("bpe-apply", cmd_bpe_apply, "segment text into subword pieces")
    sp.add_argument("input")
    sp.add_argument("--model", required=True)
    sp.add_argument("-o", "--output")

    sp = add("oracle", cmd_oracle, "bracketed trees to action sequences")
    sp.add_argument("input")
    sp.add_argument("--bpe")
    sp.add_argument("-o", "--output")

    sp = add("train", cmd_train, "train an RNNG or the LSTM baseline on action sequences")
    sp.add_argument("input")
    sp.add_argument("--arch", choices=("rnng", "lstm"), default="rnng")
    sp.add_argument("--valid")
    sp.add_argument("--model", required=True, help="checkpoint path to write")
    sp.add_argument("--log", help="per-epoch loss CSV")
    for name, typ in (("embedding-dim", int), ("hidden-dim", int), ("num-layers", int), ("lr", float),
                      ("epochs", int), ("batch-size", int), ("min-updates", int)):
        sp.add_argument(f"--{name}", dest=name.replace("-", "_"), type=typ)

    sp = add("ppl", cmd_ppl, "word-level perplexity of a trained model")
    sp.add_argument("input", help="sentences, one per line, or CoNLL-U")
    sp.add_argument("--model", required=True)
    sp.add_argument("--bpe")
    sp.add_argument("-o", "--output", help="CSV report")
    _beam_flags(sp)

    sp = add("score-pairs", cmd_score_pairs, "minimal-pair agreement accuracy")
    sp.add_argument("pairs")
    sp.add_argument("--model")
    sp.add_argument("--bpe")
    sp.add_argument("--scorer", choices=("model", "oracle"), default="model")
    sp.add_argument("-o", "--output", help="CSV report")
    _beam_flags(sp)

    sp = add("f1", cmd_f1, "bracket precision/recall/F1")
    sp.add_argument("pred")
    sp.add_argument("gold")
    sp.add_argument("--labeled", action="store_true")
    sp.add_argument("-o", "--output", help="CSV report")

    sp = add("stats", cmd_stats, "corpus statistics over trees or action sequences")
    sp.add_argument("input")
    sp.add_argument("-o", "--output")

    sp = add("gen-suite", cmd_gen_suite, "generate a synthetic agreement corpus and test pairs")
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--n-train", type=int, default=5000)
    sp.add_argument("--n-pairs", type=int, default=700)
    return p


def _beam_flags(sp) -> None:
    sp.add_argument("--beam", dest="beam_k", type=int)
    sp.add_argument("--word-beam", dest="beam_kw", type=int)
    sp.add_argument("--fast-track", dest="beam_ks", type=int)


_OVERRIDES = ("seed", "jobs", "structure", "labeling", "collapse_wrappers", "drop_punct",
              "strip_deprel_subtypes", "n_train", "n_valid", "n_test", "bpe_vocab_size", "embedding_dim",
              "hidden_dim", "num_layers", "lr", "epochs", "batch_size", "min_updates", "beam_k",
              "beam_kw", "beam_ks")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    overrides = {k: getattr(args, k) for k in _OVERRIDES if hasattr(args, k)}
    if args.command == "gen-suite":
        # these are the suite sizes, not split sizes
        overrides.pop("n_train", None)
    if overrides.get("structure"):
        overrides["structure"] = STRUCTURE_ALIASES[overrides["structure"]]
    if overrides.get("labeling"):
        overrides["labeling"] = LABELING_ALIASES[overrides["labeling"]]
    try:
        cfg = load_config(args.config, overrides)
        if cfg.jobs != 1:
            raise UsageError("only --jobs 1 is supported")
    except (ValueError, FileNotFoundError, UsageError) as e:
        parser.error(str(e))
    import torch

    torch.set_num_threads(1)
    print(cfg.header(), file=sys.stderr)
    try:
        return args.fn(args, cfg)
    except UsageError as e:
        parser.error(str(e))
    except (ConlluParseError, ValueError, KeyError, RuntimeError, OSError) as e:
        print(f"udrnng {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
