"""Convergence probe for the desk-scale run: sweeps learning rates and
prints val metrics per epoch.  Not part of the test suite."""

import argparse
import time

import numpy as np

from tpgn.corpus import build_split, default_grammar, feature_size
from tpgn.evaluation import evaluate_split, training_examples
from tpgn.model import TpgnConfig, TpgnParams
from tpgn.train import CorpusStats, TrainConfig, train_epoch


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lr", type=float, default=0.5)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--batch", type=int, default=1)
    ap.add_argument("--train-n", type=int, default=2000)
    ap.add_argument("--val-n", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--eval-every", type=int, default=2)
    args = ap.parse_args()

    g = default_grammar()
    cfg = TpgnConfig(d=6, V=len(g.vocab), d_v=feature_size(g), T_max=16)
    params = TpgnParams.init_random(cfg, seed=args.seed)
    train = build_split("train", 0, args.train_n)
    val = build_split("val", 2000, 2000 + args.val_n)
    stats = CorpusStats.from_features(train.features)
    ex = training_examples(train, stats.v_bar, g)
    tc = TrainConfig(learning_rate=args.lr, epochs=1, batch_size=args.batch,
                     seed=args.seed, clip=5.0)
    rng = np.random.default_rng(args.seed)
    t_start = time.time()
    for epoch in range(1, args.epochs + 1):
        t0 = time.time()
        _, mean_loss = train_epoch(params, ex, tc, rng=rng)
        line = f"ep {epoch:3d} loss {mean_loss:.4f} ({time.time()-t0:.1f}s)"
        if epoch % args.eval_every == 0 or epoch == args.epochs:
            m = evaluate_split(params, val, stats.v_bar, g)
            line += (f"  val spice {m['spice_lite']:.3f} "
                     f"b4 {m['bleu_4']:.3f} sb4 {m['bleu_4_sentence_mean']:.3f}")
        line += f"  total {time.time()-t_start:.0f}s"
        print(line, flush=True)


if __name__ == "__main__":
    main()
