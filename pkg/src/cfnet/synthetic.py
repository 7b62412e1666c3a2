"""Seeded synthetic tracking data: a textured square moving over a textured
background, optionally with look-alike distractors.

Stands in for real video at desk scale. Object positions are integers so
that crops taken at unit sampling are exact copies of frame pixels.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from . import net
from .tracker import Rect, exemplar_context_side, extract_patch


@dataclass
class SyntheticSequence:
    frames: list
    rects: list
    distractor_rects: list  # one list of Rects per frame

    def __len__(self):
        return len(self.frames)


def object_texture(rng, side, block=2):
    coarse = rng.uniform(0.0, 1.0, (-(-side // block),) * 2)
    return np.kron(coarse, np.ones((block, block)))[:side, :side]


def background_texture(rng, size, sigma=2.0, contrast=0.15):
    noise = gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    noise /= noise.std()
    return np.clip(0.5 + contrast * noise, 0.0, 1.0)


_DIRECTIONS = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]


class _Mover:
    """Integer top-left position that drifts or random-walks inside [0, hi]."""

    def __init__(self, rng, hi, motion, speed):
        self.rng = rng
        self.hi = hi
        self.motion = motion
        self.speed = speed
        self.pos = rng.integers(0, hi + 1, size=2)
        dx, dy = _DIRECTIONS[rng.integers(len(_DIRECTIONS))]
        self.vel = np.array([dx * speed, dy * speed])

    def advance(self):
        if self.motion == "walk":
            self.vel = self.rng.integers(-self.speed, self.speed + 1, size=2)
        nxt = self.pos + self.vel
        for a in range(2):
            if nxt[a] < 0 or nxt[a] > self.hi:
                self.vel[a] = -self.vel[a]
                nxt[a] = self.pos[a] + self.vel[a]
        self.pos = np.clip(nxt, 0, self.hi)


def make_sequence(seed, num_frames, frame_size=96, obj_size=10, motion="drift", speed=2,
                  distractors=0, noise=0.02):
    """Render one sequence.

    ``motion`` is "drift" (constant velocity of ``speed`` px/frame per moving
    axis, reflected at the borders) or "walk" (independent integer steps in
    [-speed, speed] each frame). Distractors share the object's texture and
    random-walk; the target is drawn on top.
    """
    if motion not in ("drift", "walk"):
        raise ValueError(f"unknown motion {motion!r}")
    rng = np.random.default_rng(seed)
    background = background_texture(rng, frame_size)
    texture = object_texture(rng, obj_size)
    hi = frame_size - obj_size
    target = _Mover(rng, hi, motion, speed)
    others = [_Mover(rng, hi, "walk", max(speed, 1)) for _ in range(distractors)]
    frames, rects, extra = [], [], []
    for t in range(num_frames):
        if t > 0:
            target.advance()
            for d in others:
                d.advance()
        frame = background.copy()
        boxes = []
        for d in others:
            x, y = d.pos
            frame[y:y + obj_size, x:x + obj_size] = texture
            boxes.append(Rect(float(x), float(y), float(obj_size), float(obj_size)))
        x, y = target.pos
        frame[y:y + obj_size, x:x + obj_size] = texture
        if noise > 0:
            frame = np.clip(frame + noise * rng.standard_normal(frame.shape), 0.0, 1.0)
        frames.append(frame)
        rects.append(Rect(float(x), float(y), float(obj_size), float(obj_size)))
        extra.append(boxes)
    return SyntheticSequence(frames, rects, extra)


@dataclass(frozen=True)
class PairGeometry:
    """Image and response sides for training pairs of a given network shape."""

    m: int
    exemplar: int
    search: int
    stride: int
    valid: int

    @property
    def radius(self):
        return self.m / 8.0

    @classmethod
    def for_model(cls, model):
        return cls(model.m, model.exemplar_side, model.search_side, model.params.stride,
                   model.valid_side)

    @classmethod
    def from_shape(cls, m, kernel_size=5, stride=1, search_factor=2, crop_margin=None):
        params = net.FeatureNetParams(np.zeros((1, 1, kernel_size, kernel_size)), np.zeros(1),
                                      stride)
        exemplar = params.in_side(m)
        search = search_factor * exemplar
        crop_margin = m // 8 if crop_margin is None else crop_margin
        valid = params.out_side(search) - (m - 2 * crop_margin) + 1
        return cls(m, exemplar, search, stride, valid)


def sample_pairs(sequences, count, geometry, rng, max_gap=3):
    """Cut ``count`` training pairs from annotated sequences, cycling through them.

    The exemplar is the context window around the object in frame a; the
    search image covers the same point, enlarged, in frame b (up to
    ``max_gap`` frames on), so the label disc marks the object's displacement
    in feature-map samples.
    """
    sequences = list(sequences)
    if not sequences:
        raise ValueError("no sequences to sample pairs from")
    E, S, V = geometry.exemplar, geometry.search, geometry.valid
    pairs = []
    while len(pairs) < count:
        for seq in sequences:
            n = len(seq.rects)
            a = int(rng.integers(0, n))
            b = min(n - 1, a + int(rng.integers(0, max_gap + 1)))
            ra, rb = seq.rects[a], seq.rects[b]
            spacing = exemplar_context_side(ra.w, ra.h) / E
            (ax, ay), (bx, by) = ra.center, rb.center
            exemplar = extract_patch(seq.frames[a], (ax, ay), spacing * E, E)
            search = extract_patch(seq.frames[b], (ax, ay), spacing * S, S)
            pitch = spacing * geometry.stride
            centre = (V // 2 + round((by - ay) / pitch), V // 2 + round((bx - ax) / pitch))
            centre = tuple(min(max(c, 0), V - 1) for c in centre)
            pairs.append(net.TrainPair(exemplar, search,
                                       net.make_label_map(V, centre, geometry.radius)))
            if len(pairs) == count:
                break
    return pairs


def make_synthetic_dataset(count, m, seed, kernel_size=5, stride=1, search_factor=2,
                           distractors=0, speed=2, max_gap=3, seq_len=8, frame_size=64,
                           sequences_per_pair=0.125):
    """Training pairs cut from short seeded random-walk sequences.

    The object side is half the exemplar image side, so crops are taken at
    one sample per pixel. ``speed=0`` gives motionless objects.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    geometry = PairGeometry.from_shape(m, kernel_size, stride, search_factor)
    if geometry.exemplar % 2:
        raise ValueError(f"exemplar side {geometry.exemplar} must be even; adjust m or kernel_size")
    rng = np.random.default_rng(seed)
    num_seqs = max(1, int(np.ceil(count * sequences_per_pair)))
    seqs = [make_sequence(int(rng.integers(2**31)), seq_len, frame_size=frame_size,
                          obj_size=geometry.exemplar // 2, motion="walk", speed=speed,
                          distractors=distractors)
            for _ in range(num_seqs)]
    return sample_pairs(seqs, count, geometry, rng, max_gap)
