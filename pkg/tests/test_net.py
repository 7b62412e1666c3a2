import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfnet import cf, net, synthetic
from cfnet.errors import CheckpointError, ShapeMismatch, StaleCache
from oracles import central_differences, pipeline_gradient_errors


def small_model(**kw):
    kw.setdefault("k_out", 2)
    return net.build_model(3, m=16, **kw)


@pytest.fixture(scope="module")
def pairs():
    return synthetic.make_synthetic_dataset(8, 16, seed=1)


# ---------------------------------------------------------------- conv layer


def test_identity_kernel_gives_central_crop(rng):
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    img = rng.uniform(0, 1, (7, 7))
    out, _ = net.conv_forward(img, net.FeatureNetParams(k, np.zeros(1)))
    np.testing.assert_array_equal(out[0], img[1:-1, 1:-1])


def test_zero_kernels_give_zero_output_and_gradient(rng):
    params = net.FeatureNetParams(np.zeros((2, 1, 3, 3)), np.zeros(2))
    out, cache = net.conv_forward(rng.standard_normal((6, 6)), params)
    assert np.all(out == 0)
    gi, gk, gb = net.conv_backward(cache, np.ones_like(out))
    assert np.all(gi == 0) and np.all(gk == 0) and np.all(gb == 0)


def test_conv_matches_loop(rng):
    params = net.FeatureNetParams.xavier(rng, k_out=2, r=3)
    params.biases[:] = [0.1, -0.1]
    img = rng.standard_normal((6, 6))
    out, _ = net.conv_forward(img, params)
    for o in range(2):
        for i in range(4):
            for j in range(4):
                pre = np.sum(img[i:i + 3, j:j + 3] * params.kernels[o, 0]) + params.biases[o]
                assert out[o, i, j] == pytest.approx(max(pre, 0.0), abs=1e-12)


@pytest.mark.parametrize("stride", [1, 2])
def test_conv_backward_matches_finite_differences(rng, stride):
    params = net.FeatureNetParams.xavier(rng, k_out=2, r=3, stride=stride)
    img = rng.standard_normal((7, 7))
    out, cache = net.conv_forward(img, params)
    g = rng.standard_normal(out.shape)
    gi, gk, gb = net.conv_backward(cache, g)

    def f_img(v):
        return np.sum(g * net.conv_forward(v, params)[0])

    def f_k(v):
        return np.sum(g * net.conv_forward(img, net.FeatureNetParams(v, params.biases, stride))[0])

    def f_b(v):
        return np.sum(g * net.conv_forward(img, net.FeatureNetParams(params.kernels, v, stride))[0])

    for analytic, numeric in [(gi[0], central_differences(f_img, img)),
                              (gk, central_differences(f_k, params.kernels)),
                              (gb, central_differences(f_b, params.biases))]:
        assert np.max(np.abs(analytic - numeric) / (1 + np.abs(analytic))) <= 1e-4


def test_conv_shape_errors(rng):
    params = net.FeatureNetParams.xavier(rng, k_out=1, r=5)
    with pytest.raises(ShapeMismatch):
        net.conv_forward(np.zeros((3, 3)), params)
    with pytest.raises(ShapeMismatch):
        net.FeatureNetParams(np.zeros((1, 1, 4, 4)), np.zeros(1))
    _, cache = net.conv_forward(np.zeros((6, 6)), params)
    with pytest.raises(ShapeMismatch):
        net.conv_backward(cache, np.zeros((1, 3, 3)))


def test_xavier_bound(rng):
    p = net.FeatureNetParams.xavier(rng, k_out=32, r=5)
    assert np.abs(p.kernels).max() <= np.sqrt(6.0 / (25 + 32 * 25))
    assert np.all(p.biases == 0)


# ---------------------------------------------------------------- loss


def test_label_weights_sum_to_one():
    labels = net.make_label_map(25, (12, 12), 2.0)
    assert abs(labels.weights.sum() - 1.0) <= 1e-12
    pos = labels.labels > 0
    assert labels.weights[pos].sum() == pytest.approx(0.5)
    assert pos.sum() == 13


def test_label_map_needs_both_classes():
    with pytest.raises(ValueError):
        net.make_label_map(3, (1, 1), 10.0)


def test_zero_response_loss_is_log2():
    labels = net.make_label_map(9, (4, 4), 1.0)
    loss, _ = net.logistic_loss(np.zeros((9, 9)), labels)
    assert loss == pytest.approx(np.log(2.0), abs=1e-15)


def test_saturated_loss():
    labels = net.make_label_map(9, (4, 4), 1.0)
    loss, grad = net.logistic_loss(40.0 * labels.labels, labels)
    assert 0.0 <= loss <= 1e-16
    loss, grad = net.logistic_loss(-1000.0 * labels.labels, labels)
    assert np.isfinite(loss) and np.all(np.isfinite(grad))
    assert loss == pytest.approx(1000.0)


def test_loss_gradient(rng):
    labels = net.make_label_map(9, (3, 5), 2.0)
    r = rng.standard_normal((9, 9)) * 3
    _, grad = net.logistic_loss(r, labels)
    numeric = central_differences(lambda v: net.logistic_loss(v, labels)[0], r)
    assert np.max(np.abs(grad - numeric) / (1e-12 + np.abs(grad))) <= 1e-6


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50), st.integers(0, 2**16))
def test_loss_nonnegative(offset, seed):
    rng = np.random.default_rng(seed)
    labels = net.make_label_map(7, (3, 3), 1.5)
    loss, _ = net.logistic_loss(rng.standard_normal((7, 7)) + offset, labels)
    assert loss >= 0.0


def test_loss_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        net.logistic_loss(np.zeros((4, 4)), net.make_label_map(5, (2, 2), 1.0))


# ---------------------------------------------------------------- pipeline


def test_model_geometry():
    model = net.build_model(0, m=16, k_out=4)
    assert model.exemplar_side == 20
    assert model.search_side == 40
    assert model.search_feature_side == 36
    assert model.valid_side == 25
    assert model.cal.s == 1e-3 and model.cal.b == 0.0


def test_zero_scale_loss_depends_only_on_bias(pairs):
    model = small_model()
    model.cal.s = 0.0
    model.cal.b = 0.4
    for pair in pairs[:3]:
        loss, _ = net.forward_loss(pair, model)
        expected, _ = net.logistic_loss(np.full(pair.labels.labels.shape, 0.4), pair.labels)
        assert loss == pytest.approx(expected, abs=1e-15)


def test_heavy_regularization_flattens_response(pairs):
    model = net.with_lambda(small_model(), 1e12)
    model.cal.s = 1.0
    model.cal.b = 0.25
    _, cache = net.forward_loss(pairs[0], model)
    assert np.abs(cache.template).max() <= 1e-9
    response = net.valid_response(model, cache.template, cache.fz)
    np.testing.assert_allclose(response, 0.25, atol=1e-9)


@pytest.mark.parametrize("dy,dx", [(0, 0), (3, -2), (-4, 4)])
def test_identity_features_locate_offset(rng, dy, dx):
    # two half-wave channels: a lossless, roughly zero-mean encoding of the image
    params = net.FeatureNetParams(np.array([1.0, -1.0]).reshape(2, 1, 1, 1), np.array([-0.5, 0.5]))
    model = net.CFNet(params=params, cal=cf.ScoreCalibration(1.0, 0.0), cfg=cf.CFConfig.default(16),
                      search_feature_side=32)
    exemplar = rng.uniform(0, 1, (16, 16))
    search = 0.5 + 0.5 * (rng.uniform(0, 1, (32, 32)) - 0.5)
    search[8 + dy:24 + dy, 8 + dx:24 + dx] = exemplar
    template = net.compute_template(model, exemplar)
    response = net.valid_response(model, template, net.search_features(model, search))
    centre = model.valid_side // 2
    assert np.unravel_index(np.argmax(response), response.shape) == (centre + dy, centre + dx)


@pytest.mark.parametrize("variant", [{}, {"learn_y": True}, {"constant_alpha": True}])
def test_end_to_end_gradient(pairs, variant):
    model = small_model(**variant)
    if model.constant_alpha:
        model = net.init_constant_alpha(model, pairs)
    model.cal.s = 1.0
    model.cal.b = -0.3
    errors = pipeline_gradient_errors(model, pairs[0])
    assert max(errors.values()) <= 1e-3, errors
    assert ("y" in errors) == bool(variant.get("learn_y"))
    assert ("alpha" in errors) == bool(variant.get("constant_alpha"))


def test_cf_segment_is_chain_of_parts(pairs, rng):
    model = small_model()
    model.cal.s = 1.0
    _, cache = net.forward_loss(pairs[0], model)
    g = net.backward_loss(cache)
    cfg = model.cfg
    grad_t, _, _, _ = cf.score_backward(cache.grad_response, cache.template, cache.fz, model.cal)
    grad_w = cf.crop_backward(grad_t, cfg.m, cfg.crop_margin)
    grad_xw = cf.cf_backward(cache.cf_cache, cfg, grad_w).grad_x
    _, gk, _ = net.conv_backward(cache.conv_x, cf.apply_window(grad_xw, cfg.window))
    _, gk_z, _ = net.conv_backward(cache.conv_z, cf.score_backward(
        cache.grad_response, cache.template, cache.fz, model.cal)[1])
    np.testing.assert_allclose(g.kernels, gk + gk_z, atol=1e-15)


def test_no_y_gradient_without_learn_y(pairs):
    _, cache = net.forward_loss(pairs[0], small_model())
    assert net.backward_loss(cache).y is None


def test_stale_cache(pairs):
    _, cache = net.forward_loss(pairs[0], small_model())
    cache.cf_cache = None
    with pytest.raises(StaleCache):
        net.backward_loss(cache)


def test_zero_learning_rate_keeps_parameters(pairs):
    model = small_model()
    result = net.sgd_train(pairs, model, epochs=3, lr=0.0)
    np.testing.assert_array_equal(result.model.params.kernels, model.params.kernels)
    assert result.model.cal == model.cal
    assert result.losses[0] == result.losses[1] == result.losses[2]


def test_training_is_deterministic(pairs):
    a = net.sgd_train(pairs, small_model(), epochs=3, seed=5)
    b = net.sgd_train(pairs, small_model(), epochs=3, seed=5)
    assert a.losses == b.losses
    np.testing.assert_array_equal(a.model.params.kernels, b.model.params.kernels)


def test_training_does_not_mutate_input(pairs):
    model = small_model()
    before = model.params.kernels.copy()
    net.sgd_train(pairs, model, epochs=1)
    np.testing.assert_array_equal(model.params.kernels, before)


def test_training_rejects_empty_dataset():
    with pytest.raises(ValueError):
        net.sgd_train([], small_model(), epochs=1)


# ---------------------------------------------------------------- checkpoints


@pytest.mark.parametrize("variant", [{}, {"constant_alpha": True, "learn_y": True}])
def test_checkpoint_round_trip(variant):
    model = small_model(**variant)
    text = net.dumps_checkpoint(model)
    back = net.loads_checkpoint(text)
    assert net.dumps_checkpoint(back) == text
    np.testing.assert_array_equal(back.params.kernels, model.params.kernels)
    assert back.constant_alpha == model.constant_alpha
    assert back.learn_y == model.learn_y


def test_checkpoint_validation():
    text = net.dumps_checkpoint(small_model())
    with pytest.raises(CheckpointError):
        net.loads_checkpoint("not json")
    with pytest.raises(CheckpointError):
        net.loads_checkpoint(text.replace('"version": 1', '"version": 99'))
    with pytest.raises(CheckpointError):
        net.loads_checkpoint(text.replace('"stride": 1', '"stride": 2'))


# ---------------------------------------------------------------- synthetic data


def test_dataset_is_deterministic():
    a = synthetic.make_synthetic_dataset(6, 16, seed=4)
    b = synthetic.make_synthetic_dataset(6, 16, seed=4)
    for p, q in zip(a, b):
        assert p.exemplar.tobytes() == q.exemplar.tobytes()
        assert p.search.tobytes() == q.search.tobytes()
        assert p.labels.labels.tobytes() == q.labels.labels.tobytes()


def test_zero_motion_labels_are_centred():
    geometry = synthetic.PairGeometry.from_shape(16)
    expected = net.make_label_map(geometry.valid, (geometry.valid // 2,) * 2, geometry.radius)
    for pair in synthetic.make_synthetic_dataset(10, 16, seed=2, speed=0):
        np.testing.assert_array_equal(pair.labels.labels, expected.labels)


def test_dataset_shapes():
    pair = synthetic.make_synthetic_dataset(1, 16, seed=0)[0]
    assert pair.exemplar.shape == (20, 20)
    assert pair.search.shape == (40, 40)
    assert pair.labels.labels.shape == (25, 25)


def test_distractor_frames_contain_two_identical_patches():
    seq = synthetic.make_sequence(11, 6, frame_size=64, obj_size=10, distractors=1, noise=0.0)
    for frame, rect, others in zip(seq.frames, seq.rects, seq.distractor_rects):
        assert len(others) == 1
        d = others[0]
        if abs(d.x - rect.x) < rect.w and abs(d.y - rect.y) < rect.h:
            continue  # overlapping, the target is drawn on top
        x, y = int(rect.x), int(rect.y)
        dx, dy = int(d.x), int(d.y)
        np.testing.assert_array_equal(frame[y:y + 10, x:x + 10], frame[dy:dy + 10, dx:dx + 10])


def test_drift_moves_two_pixels_per_frame():
    seq = synthetic.make_sequence(5, 10, frame_size=200, speed=2)
    steps = {(b.x - a.x, b.y - a.y) for a, b in zip(seq.rects, seq.rects[1:])}
    assert all(max(abs(sx), abs(sy)) == 2 for sx, sy in steps)
