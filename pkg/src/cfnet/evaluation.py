"""One-pass (OPE) and temporal-robustness (TRE) evaluation.

Within a run the tracker is initialised on the ground truth of its start
frame and scored on every later frame. The first frame whose overlap is
zero ends the run; it and all remaining frames of the run count as zero
overlap (and as infinite centre error). Overlaps are pooled over runs
before the success curve is taken.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRect, EmptyInput, FrameCountMismatch
from .tracker import Rect

NUM_THRESHOLDS = 100
PRECISION_RADIUS = 20.0


@dataclass
class SequenceAnnotation:
    frames: list
    rects: list
    name: str = ""
    frame_paths: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.frames) != len(self.rects):
            raise FrameCountMismatch(
                f"{len(self.frames)} frames but {len(self.rects)} ground-truth rects")
        if len(self.rects) < 2:
            raise ValueError("a sequence needs at least two frames")

    def __len__(self):
        return len(self.rects)


@dataclass
class EvalReport:
    overlaps: list
    center_errors: list
    curve: np.ndarray
    auc: float
    precision20: float
    start_frames: list  # 1-based
    runs: list = field(default_factory=list)  # per-run overlap lists

    @property
    def num_runs(self):
        return len(self.start_frames)

    def to_dict(self):
        return {"auc": self.auc, "precision20": self.precision20, "num_runs": self.num_runs,
                "start_frames": list(self.start_frames), "num_frames": len(self.overlaps),
                "mean_overlap": float(np.mean(self.overlaps))}


def _rect(r):
    return r if isinstance(r, Rect) else Rect(*r)


def iou(a, b):
    a, b = _rect(a), _rect(b)
    if a.w <= 0 or a.h <= 0 or b.w <= 0 or b.h <= 0:
        raise DegenerateRect("rects must have positive size")
    iw = max(0.0, min(a.x + a.w, b.x + b.w) - max(a.x, b.x))
    ih = max(0.0, min(a.y + a.h, b.y + b.h) - max(a.y, b.y))
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def center_error(a, b):
    (ax, ay), (bx, by) = _rect(a).center, _rect(b).center
    return math.hypot(ax - bx, ay - by)


def thresholds():
    return np.arange(NUM_THRESHOLDS) / (NUM_THRESHOLDS - 1)


def success_curve(overlaps):
    """Fraction of overlaps >= each of 100 evenly spaced thresholds in [0, 1]; AUC is its mean."""
    ov = np.asarray(overlaps, dtype=np.float64).ravel()
    if ov.size == 0:
        raise EmptyInput("no overlaps to evaluate")
    curve = (ov[None, :] >= thresholds()[:, None]).mean(axis=1)
    return curve, float(curve.mean())


def precision20(center_errors, radius=PRECISION_RADIUS):
    err = np.asarray(center_errors, dtype=np.float64).ravel()
    if err.size == 0:
        raise EmptyInput("no centre errors to evaluate")
    return float(np.mean(err <= radius))


def parse_mode(mode):
    """'ope' -> 1 start, 'treN' -> N starts; integers pass through."""
    if isinstance(mode, int):
        n = mode
    else:
        mode = mode.lower()
        if mode == "ope":
            n = 1
        elif mode.startswith("tre") and mode[3:].isdigit():
            n = int(mode[3:])
        else:
            raise ValueError(f"unknown evaluation mode {mode!r}")
    if n < 1:
        raise ValueError("number of starts must be >= 1")
    return n


def start_frames(length, num_starts):
    """0-based start frames floor(j L / n) for j = 0..n-1 (L=90, n=3 gives 0, 30, 60)."""
    if num_starts > length - 1:
        raise ValueError(f"{num_starts} starts do not fit a {length}-frame sequence")
    return [(j * length) // num_starts for j in range(num_starts)]


def score_run(gt_rects, predictions, start):
    """Overlaps and centre errors of one run, applying the lost-target rule.

    ``predictions`` may be any iterable yielding one rect per frame from
    ``start`` (the first is the initialisation and is not scored); it is
    consumed lazily and abandoned once the target is lost.
    """
    total = len(gt_rects) - start - 1
    overlaps, errors = [], []
    preds = iter(predictions)
    next(preds, None)
    for t, pred in zip(range(start + 1, len(gt_rects)), preds):
        o = iou(pred, gt_rects[t])
        if o <= 0.0:
            break
        overlaps.append(o)
        errors.append(center_error(pred, gt_rects[t]))
    missing = total - len(overlaps)
    overlaps.extend([0.0] * missing)
    errors.extend([math.inf] * missing)
    return overlaps, errors


def build_report(runs, starts):
    """Pool per-run (overlaps, errors) into one report."""
    overlaps = list(itertools.chain.from_iterable(r[0] for r in runs))
    errors = list(itertools.chain.from_iterable(r[1] for r in runs))
    curve, auc = success_curve(overlaps)
    return EvalReport(overlaps=overlaps, center_errors=errors, curve=curve, auc=auc,
                      precision20=precision20(errors), start_frames=[s + 1 for s in starts],
                      runs=[r[0] for r in runs])


def run_eval(seq, track_fn, mode="ope"):
    """Run ``track_fn(frames, init_rect)`` from each start frame and score it."""
    starts = start_frames(len(seq), parse_mode(mode))
    runs = []
    for s in starts:
        preds = track_fn(seq.frames[s:], seq.rects[s])
        runs.append(score_run(seq.rects, preds, s))
        close = getattr(preds, "close", None)
        if close is not None:
            close()
    return build_report(runs, starts)


def evaluate_trajectories(gt_rects, trajectories):
    """Report for stored runs: ``trajectories`` maps 0-based start frame -> rect list."""
    starts = sorted(trajectories)
    runs = [score_run(gt_rects, trajectories[s], s) for s in starts]
    return build_report(runs, starts)


def aggregate(reports):
    """Pool several sequence reports (already in a deterministic order)."""
    if not reports:
        raise EmptyInput("no reports to aggregate")
    overlaps = list(itertools.chain.from_iterable(r.overlaps for r in reports))
    errors = list(itertools.chain.from_iterable(r.center_errors for r in reports))
    curve, auc = success_curve(overlaps)
    starts = list(itertools.chain.from_iterable(r.start_frames for r in reports))
    return EvalReport(overlaps=overlaps, center_errors=errors, curve=curve, auc=auc,
                      precision20=precision20(errors), start_frames=starts,
                      runs=list(itertools.chain.from_iterable(r.runs for r in reports)))
