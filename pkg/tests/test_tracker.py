import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfnet import net, spectral, synthetic, tracker
from cfnet.errors import DegenerateRect, UninitializedState
from cfnet.tracker import Rect, TrackerConfig


@pytest.fixture(scope="module")
def model():
    return net.build_model(0, m=16, k_out=8)


@pytest.fixture(scope="module")
def drift_seq():
    return synthetic.make_sequence(3, 25, frame_size=96, speed=2)


def test_rect_basics():
    r = Rect(1.0, 2.0, 4.0, 6.0)
    assert r.center == (3.0, 5.0)
    assert Rect.from_center(3.0, 5.0, 4.0, 6.0) == r
    with pytest.raises(DegenerateRect):
        Rect(0, 0, 0, 5)


def test_config_defaults_and_validation():
    cfg = TrackerConfig()
    assert (cfg.scale_step, cfg.scale_penalty, cfg.scale_lr, cfg.win_weight, cfg.template_lr) == \
        (1.0575, 0.9780, 0.520, 0.2625, 0.0050)
    assert cfg.scale_factors() == pytest.approx([1 / 1.0575, 1.0, 1.0575])
    for bad in [dict(scale_step=1.0), dict(scale_penalty=0.0), dict(win_weight=1.5),
                dict(template_lr=-0.1), dict(num_scales=2)]:
        with pytest.raises(ValueError):
            TrackerConfig(**bad)


# ---------------------------------------------------------------- patch extraction


def test_extract_identity_crop(rng):
    frame = rng.uniform(0, 1, (30, 40))
    patch = tracker.extract_patch(frame, (20.0, 15.0), 8, 8)
    np.testing.assert_array_equal(patch, frame[11:19, 16:24])


def test_extract_downscale_by_two(rng):
    frame = rng.uniform(0, 1, (30, 30))
    patch = tracker.extract_patch(frame, (15.0, 15.0), 12, 6)
    block = frame[9:21, 9:21]
    oracle = 0.25 * (block[0::2, 0::2] + block[1::2, 0::2] + block[0::2, 1::2] + block[1::2, 1::2])
    assert np.abs(patch - oracle).max() <= 1e-12


def test_extract_replicates_edges(rng):
    frame = rng.uniform(0, 1, (10, 10))
    patch = tracker.extract_patch(frame, (0.0, 0.0), 4, 4)
    rows = [0, 0, 0, 1]
    np.testing.assert_array_equal(patch, frame[np.ix_(rows, rows)])


def test_extract_far_outside_is_constant(rng):
    frame = rng.uniform(0, 1, (10, 10))
    patch = tracker.extract_patch(frame, (-100.0, -100.0), 6, 3)
    assert np.all(patch == frame[0, 0])


def test_extract_rejects_bad_side():
    with pytest.raises(ValueError):
        tracker.extract_patch(np.zeros((4, 4)), (2, 2), 0, 4)


def test_context_side():
    assert tracker.exemplar_context_side(10, 10) == pytest.approx(20.0)


# ---------------------------------------------------------------- init / step


def test_template_side(model, drift_seq):
    state = tracker.init(drift_seq.frames[0], drift_seq.rects[0], model)
    assert state.template.shape == (8, 12, 12)
    assert state.scale == 1.0
    assert state.position == drift_seq.rects[0].center


def test_init_at_border(model, rng):
    frame = rng.uniform(0, 1, (40, 40))
    state = tracker.init(frame, Rect(0, 0, 8, 8), model)
    assert np.all(np.isfinite(state.template))


def test_geometry_mismatch_is_reported(model, drift_seq):
    with pytest.raises(ValueError):
        tracker.init(drift_seq.frames[0], drift_seq.rects[0], model, TrackerConfig(search_area_factor=9))


def test_step_requires_init(rng):
    with pytest.raises(UninitializedState):
        tracker.step(None, rng.uniform(0, 1, (20, 20)))


def test_zero_template_rate_keeps_template(model, drift_seq):
    state = tracker.init(drift_seq.frames[0], drift_seq.rects[0], model, TrackerConfig(template_lr=0.0))
    initial = state.template.tobytes()
    for frame in drift_seq.frames[1:8]:
        _, state = tracker.step(state, frame)
        assert state.template.tobytes() == initial


def test_template_rate_blends(model, drift_seq):
    state = tracker.init(drift_seq.frames[0], drift_seq.rects[0], model, TrackerConfig(template_lr=0.5))
    before = state.template.copy()
    _, state = tracker.step(state, drift_seq.frames[1])
    assert not np.array_equal(before, state.template)


def test_static_sequence_is_stationary(model):
    seq = synthetic.make_sequence(8, 1, frame_size=80, noise=0.0)
    frames = [seq.frames[0]] * 6
    out = list(tracker.track(frames, seq.rects[0], model))
    for r in out:
        assert r.center == pytest.approx(seq.rects[0].center, abs=1e-9)


def test_drift_error_within_one_pixel(model, drift_seq):
    out = list(tracker.track(drift_seq.frames, drift_seq.rects[0], model))
    assert len(out) == len(drift_seq.frames)
    for pred, gt in zip(out, drift_seq.rects):
        assert np.hypot(pred.center[0] - gt.center[0], pred.center[1] - gt.center[1]) <= 1.0


def test_aspect_ratio_preserved(model, drift_seq):
    x, y = drift_seq.rects[0].center
    start = Rect.from_center(x, y, 12.0, 8.0)
    for r in tracker.track(drift_seq.frames[:10], start, model):
        assert r.w / r.h == pytest.approx(1.5, rel=1e-14)


def test_tracking_is_deterministic(model, drift_seq):
    a = list(tracker.track(drift_seq.frames[:10], drift_seq.rects[0], model))
    b = list(tracker.track(drift_seq.frames[:10], drift_seq.rects[0], model))
    assert a == b


# ---------------------------------------------------------------- peak selection


def test_equal_peaks_keep_current_scale():
    v = 9
    maps = np.zeros((3, v, v))
    maps[:, 4, 4] = 1.0
    cfg = TrackerConfig(scale_penalty=0.97)
    assert tuple(tracker.choose_peak(maps, cfg, spectral.hann_window(v))) == (1, 4, 4)


def test_scale_penalty_threshold():
    v = 9
    window = np.zeros((v, v))
    cfg = TrackerConfig(scale_penalty=0.9, win_weight=0.0)
    maps = np.zeros((3, v, v))
    maps[1, 4, 4] = 0.95
    maps[2, 4, 4] = 1.0  # 1.0 * 0.9 < 0.95
    assert tracker.choose_peak(maps, cfg, window)[0] == 1
    maps[1, 4, 4] = 0.85
    assert tracker.choose_peak(maps, cfg, window)[0] == 2


def test_window_pulls_toward_centre():
    v = 9
    maps = np.zeros((1, v, v))
    maps[0, 0, 0] = 1.0
    maps[0, 4, 4] = 0.9
    window = spectral.hann_window(v)
    assert tuple(tracker.choose_peak(maps, TrackerConfig(win_weight=0.0, num_scales=1), window)) == (0, 0, 0)
    assert tuple(tracker.choose_peak(maps, TrackerConfig(win_weight=0.5, num_scales=1), window)) == (0, 4, 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**16), st.floats(-100, 100))
def test_argmax_invariant_to_constant_offset(seed, c):
    rng = np.random.default_rng(seed)
    maps = rng.standard_normal((3, 7, 7))
    window = spectral.hann_window(7)
    cfg = TrackerConfig()
    assert tracker.choose_peak(maps, cfg, window) == tracker.choose_peak(maps + c, cfg, window)
