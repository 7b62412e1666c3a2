"""Online tracking loop around a trained CFNet.

Coordinates are continuous pixel-edge coordinates: pixel (row i, col j)
covers [j, j+1) x [i, i+1), so a rect's center is (x + w/2, y + h/2).
Frames are 2-D greyscale arrays.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import net, spectral
from .errors import DegenerateRect, UninitializedState


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise DegenerateRect(f"rect size must be positive, got {self.w}x{self.h}")

    @property
    def center(self):
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @classmethod
    def from_center(cls, cx, cy, w, h):
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    def as_tuple(self):
        return (self.x, self.y, self.w, self.h)


@dataclass
class TrackerConfig:
    """Tracking hyperparameters; defaults are tuned values for a two-layer network."""

    scale_step: float = 1.0575
    scale_penalty: float = 0.9780
    scale_lr: float = 0.520
    win_weight: float = 0.2625
    template_lr: float = 0.0050
    search_area_factor: float = 4.0
    num_scales: int = 3

    def __post_init__(self):
        if not self.scale_step > 1.0:
            raise ValueError(f"scale_step must exceed 1, got {self.scale_step}")
        if not 0.0 < self.scale_penalty <= 1.0:
            raise ValueError(f"scale_penalty must lie in (0, 1], got {self.scale_penalty}")
        for name in ("scale_lr", "win_weight", "template_lr"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.num_scales < 1 or self.num_scales % 2 == 0:
            raise ValueError("num_scales must be a positive odd integer")
        if self.search_area_factor < 1.0:
            raise ValueError("search_area_factor must be >= 1")

    def scale_factors(self):
        half = self.num_scales // 2
        return [self.scale_step ** e for e in range(-half, half + 1)]


@dataclass
class TrackerState:
    position: tuple
    scale: float
    template: np.ndarray
    model: net.CFNet
    cfg: TrackerConfig
    base_size: tuple
    spacing: float  # image pixels per sample at scale 1
    score_window: np.ndarray
    initialized: bool = True

    def rect(self):
        return Rect.from_center(self.position[0], self.position[1],
                                self.base_size[0] * self.scale, self.base_size[1] * self.scale)


def extract_patch(frame, center, side_pixels, out_side):
    """Bilinear resample of a square window to out_side x out_side.

    Sample j sits at ``center + (j + 0.5 - out_side / 2) * side_pixels / out_side``;
    positions outside the frame take the nearest edge value.
    """
    if not side_pixels > 0:
        raise ValueError("side_pixels must be positive")
    frame = np.asarray(frame, dtype=np.float64)
    step = side_pixels / out_side
    offs = (np.arange(out_side) + 0.5 - out_side / 2.0) * step
    rows = _interp_axis(center[1] + offs - 0.5, frame.shape[0])
    cols = _interp_axis(center[0] + offs - 0.5, frame.shape[1])
    r0, r1, fr = rows
    tmp = frame[r0] * (1.0 - fr)[:, None] + frame[r1] * fr[:, None]
    c0, c1, fc = cols
    return tmp[:, c0] * (1.0 - fc)[None, :] + tmp[:, c1] * fc[None, :]


def _interp_axis(pos, size):
    pos = np.clip(pos, 0.0, size - 1.0)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, size - 1)
    return i0, i1, pos - i0


def exemplar_context_side(w, h):
    p = (w + h) / 4.0
    return math.sqrt((w + 2 * p) * (h + 2 * p))


def _check_geometry(model, cfg):
    ratio = (model.search_side / model.exemplar_side) ** 2
    if abs(ratio - cfg.search_area_factor) > 1e-9 * cfg.search_area_factor:
        raise ValueError(
            f"model search/exemplar area ratio {ratio:g} does not match "
            f"search_area_factor {cfg.search_area_factor:g}")


def init(frame, rect, model, cfg=None):
    """Build the first template from the annotated rect."""
    cfg = cfg or TrackerConfig()
    if not isinstance(rect, Rect):
        rect = Rect(*rect)
    _check_geometry(model, cfg)
    spacing = exemplar_context_side(rect.w, rect.h) / model.exemplar_side
    position = rect.center
    patch = extract_patch(frame, position, spacing * model.exemplar_side, model.exemplar_side)
    template = net.compute_template(model, patch)
    v = model.valid_side
    return TrackerState(position=position, scale=1.0, template=template, model=model, cfg=cfg,
                        base_size=(rect.w, rect.h), spacing=spacing,
                        score_window=spectral.hann_window(v))


def score_scales(state, frame):
    """Raw valid-region response maps, one per scale factor, shape (num_scales, v, v)."""
    model = state.model
    maps = []
    for c in state.cfg.scale_factors():
        side = state.spacing * state.scale * c * model.search_side
        patch = extract_patch(frame, state.position, side, model.search_side)
        fz = net.search_features(model, patch)
        maps.append(net.valid_response(model, state.template, fz))
    return np.stack(maps)


def choose_peak(maps, cfg, score_window):
    """Pick (scale index, row, col) after normalisation, windowing and scale penalty.

    The maps are min-max normalised jointly so the additive cosine window and
    the multiplicative penalty act on a fixed [0, 1] range.
    """
    lo, hi = maps.min(), maps.max()
    norm = (maps - lo) / (hi - lo) if hi > lo else np.zeros_like(maps)
    scored = (1.0 - cfg.win_weight) * norm + cfg.win_weight * score_window
    mid = maps.shape[0] // 2
    penalty = np.full(maps.shape[0], cfg.scale_penalty)
    penalty[mid] = 1.0
    scored = scored * penalty[:, None, None]
    return np.unravel_index(int(np.argmax(scored)), scored.shape)


def step(state, frame):
    """Locate the target in a new frame; returns (rect, state) with state updated in place."""
    if state is None or not state.initialized:
        raise UninitializedState("call init() before step()")
    model, cfg = state.model, state.cfg
    maps = score_scales(state, frame)
    si, row, col = choose_peak(maps, cfg, state.score_window)
    chosen = cfg.scale_factors()[si]
    centre = maps.shape[-1] // 2
    pitch = state.spacing * state.scale * chosen * model.params.stride
    cx, cy = state.position
    state.position = (cx + (col - centre) * pitch, cy + (row - centre) * pitch)
    state.scale = (1.0 - cfg.scale_lr) * state.scale + cfg.scale_lr * state.scale * chosen
    if cfg.template_lr > 0.0:
        side = state.spacing * state.scale * model.exemplar_side
        patch = extract_patch(frame, state.position, side, model.exemplar_side)
        fresh = net.compute_template(model, patch)
        state.template = (1.0 - cfg.template_lr) * state.template + cfg.template_lr * fresh
    return state.rect(), state


def track(frames, rect, model, cfg=None):
    """Yield one Rect per frame, the first being ``rect`` itself."""
    frames = iter(frames)
    first = next(frames)
    if not isinstance(rect, Rect):
        rect = Rect(*rect)
    state = init(first, rect, model, cfg)
    yield rect
    for frame in frames:
        out, state = step(state, frame)
        yield out
