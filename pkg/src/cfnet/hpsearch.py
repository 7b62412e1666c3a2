"""Random search over the tracking hyperparameters of a fixed, trained model."""

import io as _io
import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from . import evaluation
from .errors import InvalidRange
from .tracker import TrackerConfig, track

SEARCHED = ("scale_step", "scale_penalty", "scale_lr", "win_weight", "template_lr")
TABLE_HEADER = ("sample_index",) + SEARCHED + ("mean_auc",)


@dataclass(frozen=True)
class ParamRanges:
    scale_step: tuple = (1.01, 1.10)
    scale_penalty: tuple = (0.95, 1.00)
    scale_lr: tuple = (0.40, 0.90)
    win_weight: tuple = (0.15, 0.35)
    template_lr: tuple = (0.0, 0.02)

    def __post_init__(self):
        for f in fields(self):
            lo, hi = getattr(self, f.name)
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise InvalidRange(f"{f.name}: invalid interval [{lo}, {hi}]")
        lo, hi = self.scale_step
        if lo <= 1.0:
            raise InvalidRange("scale_step interval must lie above 1")
        for name in ("scale_penalty",):
            lo, hi = getattr(self, name)
            if lo <= 0.0 or hi > 1.0:
                raise InvalidRange(f"{name} interval must lie in (0, 1]")
        for name in ("scale_lr", "win_weight", "template_lr"):
            lo, hi = getattr(self, name)
            if lo < 0.0 or hi > 1.0:
                raise InvalidRange(f"{name} interval must lie in [0, 1]")

    def contains(self, cfg):
        return all(getattr(self, n)[0] <= getattr(cfg, n) <= getattr(self, n)[1] for n in SEARCHED)


def sample_config(ranges, rng, base=None):
    """Independent uniform draw per searched field, in a fixed field order."""
    base = base or TrackerConfig()
    values = {name: float(rng.uniform(*getattr(ranges, name))) for name in SEARCHED}
    return TrackerConfig(**values, search_area_factor=base.search_area_factor,
                         num_scales=base.num_scales)


@dataclass
class SearchResult:
    best_config: TrackerConfig
    best_score: float
    best_index: int
    table: list  # (index, TrackerConfig, mean_auc) in sample order


def evaluate_config(model, sequences, cfg, mode="tre3"):
    """Mean AUC over sequences for one tracker configuration."""
    aucs = []
    for seq in sequences:
        report = evaluation.run_eval(seq, lambda f, r: track(f, r, model, cfg), mode)
        aucs.append(report.auc)
    return float(np.mean(aucs))


def _evaluate_job(job):
    return evaluate_config(*job)


def random_search(model, sequences, n_samples=300, seed=0, ranges=None, mode="tre3",
                  workers=1, base=None):
    """Sample configs, score each by mean AUC; ties go to the earlier sample."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sequences = list(sequences)
    if not sequences:
        raise ValueError("no sequences to search on")
    ranges = ranges or ParamRanges()
    rng = np.random.default_rng(seed)
    configs = [sample_config(ranges, rng, base) for _ in range(n_samples)]
    jobs = [(model, sequences, cfg, mode) for cfg in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(_evaluate_job, jobs))
    else:
        scores = [_evaluate_job(j) for j in jobs]
    best = 0
    for i, s in enumerate(scores):
        if s > scores[best]:
            best = i
    table = list(zip(range(n_samples), configs, scores))
    return SearchResult(best_config=configs[best], best_score=scores[best], best_index=best,
                        table=table)


def table_csv(result):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    for index, cfg, score in result.table:
        writer.writerow([index] + [repr(getattr(cfg, n)) for n in SEARCHED] + [repr(score)])
    return buf.getvalue()


def histogram_csv(result, bins=20):
    """Distribution of mean AUC over the samples, as ``bin_lo,bin_hi,count`` rows."""
    scores = np.array([s for _, _, s in result.table])
    counts, edges = np.histogram(scores, bins=bins, range=(0.0, 1.0))
    lines = ["bin_lo,bin_hi,count"]
    lines += [f"{edges[i]!r},{edges[i + 1]!r},{int(c)}" for i, c in enumerate(counts)]
    return "\n".join(lines) + "\n"
