"""Adaptive CF against the constant-alpha variant on a suite with look-alike distractors.

Both variants see the same training pairs and the same evaluation sequences.

    python scripts/constant_alpha_comparison.py --distractors 2
"""

import argparse
from concurrent.futures import ProcessPoolExecutor

from cfnet import experiments


def run_variant(job):
    constant_alpha, args = job
    run = experiments.TrainingRun(seed=args.seed, pairs=args.pairs, k_out=args.k_out,
                                  epochs=args.epochs, distractors=args.distractors,
                                  constant_alpha=constant_alpha)
    outcome = experiments.train(run)
    suite = experiments.evaluate(outcome.model, experiments.SuiteConfig(distractors=args.distractors))
    return outcome.losses, suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pairs", type=int, default=200)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--k-out", type=int, default=8)
    ap.add_argument("--distractors", type=int, default=2)
    args = ap.parse_args()

    with ProcessPoolExecutor(max_workers=2) as pool:
        results = list(pool.map(run_variant, [(False, args), (True, args)]))
    for name, (losses, suite) in zip(("adaptive CF", "constant alpha"), results):
        per_seq = " ".join(f"{a:.3f}" for a in suite.aucs)
        print(f"{name:15s} loss {losses[0]:.4f} -> {losses[-1]:.4f}  "
              f"mean AUC {suite.mean_auc:.4f}  per sequence [{per_seq}]")


if __name__ == "__main__":
    main()
