"""Train an RNNG and the LSTM baseline on a generated agreement suite and compare them.

Example:
    python3 scripts/agreement_experiment.py --structure flat --labeling DEP --collapse-wrappers \
        --out results/flat_dep
"""
from __future__ import annotations

import argparse
import logging
import time
from pathlib import Path

import torch

from udrnng.convert import convert
from udrnng.evalharness import generate_agreement_suite, score_pairs, score_pairs_batched
from udrnng.oracle import tree_to_actions
from udrnng.pipeline import write_atomic
from udrnng.rnng.baseline import baseline_log_probs, fit_baseline
from udrnng.rnng.beam import sentence_log_prob
from udrnng.rnng.model import RnngConfig
from udrnng.rnng.train import fit
from udrnng.subword import train_bpe


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--structure", default="flat", choices=("flat", "left_first", "right_first"))
    ap.add_argument("--labeling", default="DEP", choices=("X", "POS", "DEP"))
    ap.add_argument("--collapse-wrappers", action="store_true")
    ap.add_argument("--n-train", type=int, default=5000)
    ap.add_argument("--n-pairs", type=int, default=700)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--bpe-vocab-size", type=int, default=2000)
    ap.add_argument("--epochs", type=int, default=8)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--beam", type=int, default=100)
    ap.add_argument("--word-beam", type=int, default=10)
    ap.add_argument("--out", type=Path, help="directory for the two CSV reports")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    torch.set_num_threads(1)

    t0 = time.perf_counter()
    suite = generate_agreement_suite(n_train=args.n_train, n_pairs=args.n_pairs, seed=args.seed)
    bpe = train_bpe([w for s in suite.train for w in s.forms], args.bpe_vocab_size)
    ders = [tree_to_actions(convert(s, args.structure, args.labeling, collapse=args.collapse_wrappers), bpe)
            for s in suite.train]
    cfg = RnngConfig(epochs=args.epochs, batch_size=args.batch_size, seed=args.seed)
    rnng, _ = fit(ders, cfg)
    lm, _ = fit_baseline([[p for w in s.forms for p in bpe.encode_word(w)] for s in suite.train], cfg)

    def pieces(s):
        return [bpe.encode_word(w) for w in s.split()]

    rnng_rep = score_pairs(lambda s: sentence_log_prob(rnng, pieces(s), args.beam, args.word_beam, 1),
                           suite.pairs)
    lm_rep = score_pairs_batched(
        lambda ss: baseline_log_probs(lm, [[p for w in pieces(s) for p in w] for s in ss]), suite.pairs)
    name = f"{args.structure}-{args.labeling}" + ("-collapsed" if args.collapse_wrappers else "")
    print(f"RNNG ({name})\n{rnng_rep.to_table()}\n\nLSTM\n{lm_rep.to_table()}")
    print(f"\nelapsed {time.perf_counter() - t0:.0f}s")
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_atomic(args.out / "rnng_pairs.csv", rnng_rep.to_csv())
        write_atomic(args.out / "lstm_pairs.csv", lm_rep.to_csv())


if __name__ == "__main__":
    main()
