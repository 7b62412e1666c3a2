"""Desk-scale experiments on synthetic data, shared by scripts/ and the acceptance tests."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import evaluation, net, synthetic
from .tracker import TrackerConfig, track


@dataclass
class TrainingRun:
    seed: int = 0
    pairs: int = 200
    m: int = 16
    k_out: int = 8
    epochs: int = 100
    lr: float = net.DEFAULT_LR
    clip: float = net.DEFAULT_CLIP
    distractors: int = 0
    constant_alpha: bool = False


@dataclass
class SuiteConfig:
    seeds: tuple = (1001, 1002, 1003, 1004, 1005)
    num_frames: int = 60
    frame_size: int = 96
    speed: int = 2
    motion: str = "drift"
    distractors: int = 0
    mode: str = "tre3"


@dataclass
class TrainOutcome:
    model: net.CFNet
    losses: list
    seconds: float


@dataclass
class SuiteOutcome:
    mean_auc: float
    aucs: list = field(default_factory=list)
    seconds: float = 0.0


def train(run, log=None):
    """Build a fresh model and train it on a seeded synthetic pair set."""
    start = time.perf_counter()
    dataset = synthetic.make_synthetic_dataset(run.pairs, run.m, seed=run.seed,
                                               distractors=run.distractors)
    model = net.build_model(run.seed, m=run.m, k_out=run.k_out,
                            constant_alpha=run.constant_alpha)
    if run.constant_alpha:
        model = net.init_constant_alpha(model, dataset)
    result = net.sgd_train(dataset, model, epochs=run.epochs, lr=run.lr, seed=run.seed,
                           clip=run.clip, log=log)
    return TrainOutcome(result.model, result.losses, time.perf_counter() - start)


def make_suite(suite):
    out = []
    for seed in suite.seeds:
        seq = synthetic.make_sequence(seed, suite.num_frames, frame_size=suite.frame_size,
                                      motion=suite.motion, speed=suite.speed,
                                      distractors=suite.distractors)
        out.append(evaluation.SequenceAnnotation(seq.frames, seq.rects, name=f"synthetic-{seed}"))
    return out


def evaluate(model, suite, cfg=None):
    """Mean AUC of the tracker over the suite's sequences."""
    start = time.perf_counter()
    cfg = cfg or TrackerConfig()
    aucs = []
    for seq in make_suite(suite):
        report = evaluation.run_eval(seq, lambda f, r: track(f, r, model, cfg), suite.mode)
        aucs.append(report.auc)
    return SuiteOutcome(float(np.mean(aucs)), aucs, time.perf_counter() - start)
