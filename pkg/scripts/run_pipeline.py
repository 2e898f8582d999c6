"""Run every CLI stage in order on one CoNLL-U file.

convert -> bpe-train -> oracle -> train (RNNG and LSTM) -> ppl -> stats, writing
everything under ``--out``.  Without ``--conllu`` a synthetic agreement corpus is
generated first and its minimal pairs are scored as well.

Example:
    python3 scripts/run_pipeline.py --out runs/demo --config my.cfg
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from udrnng.cli import main as cli


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--conllu", type=Path, help="treebank; default: generate a suite")
    ap.add_argument("--config", type=Path, help="key=value config shared by all stages")
    ap.add_argument("--train", type=int, default=400)
    ap.add_argument("--valid", type=int, default=50)
    ap.add_argument("--test", type=int, default=50)
    args = ap.parse_args()
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    base = ["--config", str(args.config)] if args.config else []

    def run(*argv) -> None:
        argv = base + [str(a) for a in argv]
        print("udrnng", " ".join(argv), file=sys.stderr)
        if cli(argv) != 0:
            raise SystemExit(f"stage failed: {argv}")

    corpus, pairs = args.conllu, None
    if corpus is None:
        n = args.train + args.valid + args.test
        run("gen-suite", "--out-dir", out / "suite", "--n-train", n, "--n-pairs", 70)
        corpus, pairs = out / "suite" / "train.conllu", out / "suite" / "pairs.tsv"
    run("split", corpus, "--out-dir", out / "split", "--train", args.train, "--valid", args.valid,
        "--test", args.test)
    for part in ("train", "valid", "test"):
        run("convert", out / "split" / f"{part}.conllu", "-o", out / f"{part}.trees")
    run("bpe-train", out / "split" / "train.conllu", "-o", out / "bpe.model")
    for part in ("train", "valid"):
        run("oracle", out / f"{part}.trees", "--bpe", out / "bpe.model", "-o", out / f"{part}.actions")
    for arch in ("rnng", "lstm"):
        run("train", out / "train.actions", "--valid", out / "valid.actions", "--arch", arch,
            "--model", out / f"{arch}.pt", "--log", out / f"{arch}_log.csv")
        run("ppl", out / "split" / "test.conllu", "--model", out / f"{arch}.pt", "--bpe", out / "bpe.model",
            "-o", out / f"{arch}_ppl.csv")
        if pairs is not None:
            run("score-pairs", pairs, "--model", out / f"{arch}.pt", "--bpe", out / "bpe.model",
                "-o", out / f"{arch}_pairs.csv")
    run("stats", out / "train.trees", "-o", out / "stats.csv")
    return 0


if __name__ == "__main__":
    sys.exit(main())
