"""Command-line interface: ``cfnet <command> [options]``.

Every source of randomness is an explicit ``--seed``; outputs are written
atomically and depend only on the flags.
"""

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import evaluation, hpsearch, io, net, oracle, spectral, synthetic, tracker
from .errors import CFNetError


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


# ---------------------------------------------------------------- commands


def cmd_gradcheck(args):
    worst_x = worst_y = 0.0
    for trial in range(args.trials):
        rep = oracle.gradcheck_cf(args.m, args.k, args.lam, args.seed + trial)
        worst_x = max(worst_x, rep.max_rel_err_x)
        worst_y = max(worst_y, rep.max_rel_err_y)
        print(f"seed={args.seed + trial} max_rel_err_x={rep.max_rel_err_x:.3e} "
              f"max_rel_err_y={rep.max_rel_err_y:.3e}")
    worst = max(worst_x, worst_y)
    ok = worst <= args.tol
    print(f"max_rel_err={worst:.3e} tol={args.tol:g} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def selftest_checks():
    """(name, passed, detail) for the quick oracle / identity suite."""
    from . import cf

    results = []
    worst = 0.0
    for m in (4, 8, 16):
        for k in (1, 3):
            for seed in range(3):
                rng = np.random.default_rng(seed)
                x = rng.standard_normal((k, m, m))
                cfg = cf.CFConfig.default(m, lam=0.01)
                w, _ = cf.cf_forward(x, cfg)
                worst = max(worst, float(np.abs(w - oracle.direct_cf(x, cfg.response, 0.01)).max()))
    results.append(("forward oracle equivalence", worst <= 1e-9, f"max_abs={worst:.2e}"))

    rep = oracle.gradcheck_cf(4, 2, 0.1, 0)
    results.append(("backward gradcheck", rep.max_rel_err <= 1e-4, f"max_rel={rep.max_rel_err:.2e}"))

    worst = 0.0
    rng = np.random.default_rng(0)
    for m in (4, 8, 16):
        a, b = rng.standard_normal((2, m, m))
        lhs = float(np.sum(a * b))
        rhs = spectral.inner(spectral.dft2(a), spectral.dft2(b)).real / m**2
        worst = max(worst, abs(lhs - rhs) / (1 + abs(lhs)))
    results.append(("Parseval", worst <= 1e-10, f"rel={worst:.2e}"))

    worst = 0.0
    for _ in range(20):
        ov = rng.uniform(0, 1, 50)
        _, auc = evaluation.success_curve(ov)
        worst = max(worst, abs(auc - ov.mean()))
    results.append(("AUC vs mean overlap", worst <= 0.01, f"max_diff={worst:.4f}"))
    return results


def cmd_selftest(args):
    ok = True
    for name, passed, detail in selftest_checks():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return 0 if ok else 1


def cmd_synth(args):
    seq = synthetic.make_sequence(args.seed, args.frames, frame_size=args.frame_size,
                                  obj_size=args.object, motion=args.motion, speed=args.speed,
                                  distractors=args.distractors)
    io.write_sequence(args.out, seq.frames, seq.rects)
    print(f"wrote {args.frames} frames to {args.out}")
    return 0


def cmd_train(args):
    seqs = [io.load_sequence(d) for d in io.find_sequences(args.data)]
    model = net.build_model(args.seed, m=args.m, k_out=args.k_out, kernel_size=args.kernel,
                            lam=args.lam, constant_alpha=args.constant_alpha,
                            learn_y=args.learn_y)
    rng = np.random.default_rng(args.seed)
    pairs = synthetic.sample_pairs(seqs, args.pairs, synthetic.PairGeometry.for_model(model),
                                   rng, max_gap=args.max_gap)
    if args.constant_alpha:
        model = net.init_constant_alpha(model, pairs)

    def log(epoch, loss):
        if args.verbose:
            print(f"epoch {epoch} loss {loss:.6f}", file=sys.stderr)

    result = net.sgd_train(pairs, model, epochs=args.epochs, batch_size=args.batch_size,
                           lr=args.lr, seed=args.seed, clip=args.clip, log=log)
    io.atomic_write(args.out, net.dumps_checkpoint(result.model))
    loss_path = Path(args.out).parent / "loss.csv"
    rows = ["epoch,loss"] + [f"{i},{l!r}" for i, l in enumerate(result.losses, start=1)]
    io.atomic_write(loss_path, "\n".join(rows) + "\n")
    print(f"trained {args.epochs} epochs on {len(pairs)} pairs; "
          f"loss {result.losses[0]:.4f} -> {result.losses[-1]:.4f}")
    return 0


TRACKER_FLAGS = ("scale_step", "scale_penalty", "scale_lr", "win_weight", "template_lr",
                 "search_area_factor", "num_scales")


def tracker_config(args):
    """Built-in defaults, overridden by --config file, overridden by flags."""
    values = {}
    if args.config:
        file_values = io.read_config(args.config)
        unknown = set(file_values) - {f.name for f in fields(tracker.TrackerConfig)}
        if unknown:
            raise ValueError(f"unknown keys in {args.config}: {sorted(unknown)}")
        values.update(file_values)
    for name in TRACKER_FLAGS:
        v = getattr(args, name)
        if v is not None:
            values[name] = v
    return tracker.TrackerConfig(**values)


def load_model(path):
    return net.loads_checkpoint(Path(path).read_text())


def cmd_track(args):
    model = load_model(args.ckpt)
    cfg = tracker_config(args)
    seq = io.load_sequence(args.seq)
    starts = evaluation.start_frames(len(seq), evaluation.parse_mode(args.mode))
    runs = {}
    for s in starts:
        runs[s] = list(tracker.track(seq.frames[s:], seq.rects[s], model, cfg))
    io.write_results(args.out, runs)
    print(f"tracked {len(seq)} frames from {len(starts)} start(s) -> {args.out}")
    return 0


def cmd_eval(args):
    seq = io.load_sequence(args.seq)
    runs = io.read_results(args.results)
    starts = evaluation.start_frames(len(seq), evaluation.parse_mode(args.mode))
    missing = [s + 1 for s in starts if s not in runs]
    if missing:
        raise ValueError(f"results have no run starting at frame(s) {missing}; "
                         f"produce them with `track --mode {args.mode}`")
    for s in starts:
        if len(runs[s]) != len(seq) - s:
            raise ValueError(f"run from frame {s + 1} has {len(runs[s])} rows, "
                             f"expected {len(seq) - s}")
    report = evaluation.evaluate_trajectories(seq.rects, {s: runs[s] for s in starts})
    doc = report.to_dict()
    doc["sequence"] = seq.name
    doc["mode"] = args.mode
    io.atomic_write(args.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    if args.curve:
        io.write_curve(args.curve, report.curve, evaluation.thresholds())
    print(f"auc={report.auc:.4f} precision20={report.precision20:.4f} runs={report.num_runs}")
    return 0


def sequence_dirs(listing):
    """A file listing directories, a directory of sequences, or a comma-separated list."""
    path = Path(listing)
    if path.is_file():
        base = path.parent
        lines = [ln.strip() for ln in path.read_text().splitlines()]
        return [(base / ln) if not Path(ln).is_absolute() else Path(ln)
                for ln in lines if ln and not ln.startswith("#")]
    if path.is_dir():
        return io.find_sequences(path)
    return [Path(p) for p in listing.split(",") if p]


def cmd_hpsearch(args):
    model = load_model(args.ckpt)
    seqs = [io.load_sequence(d) for d in sequence_dirs(args.seqs)]
    # decode once; every sampled config revisits every frame
    seqs = [evaluation.SequenceAnnotation(list(s.frames), s.rects, s.name) for s in seqs]
    result = hpsearch.random_search(model, seqs, n_samples=args.samples, seed=args.seed,
                                    mode=args.mode, workers=args.workers)
    io.atomic_write(args.out, hpsearch.table_csv(result))
    if args.hist:
        io.atomic_write(args.hist, hpsearch.histogram_csv(result))
    best = result.best_config
    print(f"best sample {result.best_index}: mean_auc={result.best_score:.4f} " +
          " ".join(f"{n}={getattr(best, n):.4f}" for n in hpsearch.SEARCHED))
    return 0


# ---------------------------------------------------------------- parser


def build_parser():
    parser = argparse.ArgumentParser(prog="cfnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gradcheck", help="finite-difference check of the CF backward pass")
    p.add_argument("--m", type=int, default=4)
    p.add_argument("--k", type=_positive_int, default=1)
    p.add_argument("--lambda", dest="lam", type=_positive_float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=_positive_int, default=1)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("selftest", help="oracle equivalence, Parseval and metric identities")
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("synth", help="write a synthetic sequence directory")
    p.add_argument("--out", required=True)
    p.add_argument("--frames", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--distractors", type=int, nargs="?", const=2, default=0)
    p.add_argument("--frame-size", type=_positive_int, default=96)
    p.add_argument("--object", type=_positive_int, default=10)
    p.add_argument("--speed", type=int, default=2)
    p.add_argument("--motion", choices=("drift", "walk"), default="drift")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the depth-1 network on sequence directories")
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--constant-alpha", action="store_true")
    p.add_argument("--learn-y", action="store_true")
    p.add_argument("--pairs", type=_positive_int, default=200)
    p.add_argument("--m", type=_positive_int, default=16)
    p.add_argument("--k-out", type=_positive_int, default=32)
    p.add_argument("--kernel", type=_positive_int, default=5)
    p.add_argument("--lambda", dest="lam", type=_positive_float, default=0.01)
    p.add_argument("--lr", type=float, default=net.DEFAULT_LR)
    p.add_argument("--clip", type=_positive_float, default=net.DEFAULT_CLIP)
    p.add_argument("--batch-size", type=_positive_int, default=8)
    p.add_argument("--max-gap", type=int, default=3)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("track", help="run the tracker on a sequence")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--seq", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--mode", default="ope")
    for name in TRACKER_FLAGS:
        kind = int if name == "num_scales" else float
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=kind)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("eval", help="score stored results against ground truth")
    p.add_argument("--results", required=True)
    p.add_argument("--seq", required=True)
    p.add_argument("--mode", default="ope")
    p.add_argument("--out", required=True)
    p.add_argument("--curve")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("hpsearch", help="random search over tracking hyperparameters")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--seqs", required=True)
    p.add_argument("--samples", type=_positive_int, default=300)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="tre3")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--hist")
    p.set_defaults(func=cmd_hpsearch)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CFNetError, ValueError, OSError) as exc:
        print(f"cfnet {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
