import numpy as np
import pytest

from cfnet import evaluation, hpsearch, net, synthetic
from cfnet.errors import InvalidRange
from cfnet.hpsearch import ParamRanges
from cfnet.tracker import TrackerConfig


@pytest.fixture(scope="module")
def model():
    return net.build_model(0, m=16, k_out=4)


@pytest.fixture(scope="module")
def sequences():
    out = []
    for seed in range(2):
        s = synthetic.make_sequence(100 + seed, 12, frame_size=80, speed=3)
        out.append(evaluation.SequenceAnnotation(s.frames, s.rects))
    return out


def test_default_ranges_contain_table_optimum():
    assert ParamRanges().contains(TrackerConfig())


@pytest.mark.parametrize("bad", [dict(scale_step=(1.05, 1.02)), dict(scale_step=(0.9, 1.1)),
                                 dict(scale_penalty=(0.9, 1.2)), dict(win_weight=(-0.1, 0.2)),
                                 dict(template_lr=(0.0, float("nan")))])
def test_invalid_ranges(bad):
    with pytest.raises(InvalidRange):
        ParamRanges(**bad)


def test_degenerate_interval_is_constant():
    ranges = ParamRanges(scale_lr=(0.6, 0.6))
    rng = np.random.default_rng(0)
    assert all(hpsearch.sample_config(ranges, rng).scale_lr == 0.6 for _ in range(20))


def test_samples_stay_in_range():
    ranges = ParamRanges()
    rng = np.random.default_rng(1)
    assert all(ranges.contains(hpsearch.sample_config(ranges, rng)) for _ in range(200))


def test_sampling_is_deterministic():
    a = [hpsearch.sample_config(ParamRanges(), np.random.default_rng(9)) for _ in range(3)]
    b = [hpsearch.sample_config(ParamRanges(), np.random.default_rng(9)) for _ in range(3)]
    assert a == b


def test_single_sample_is_returned(model, sequences):
    result = hpsearch.random_search(model, sequences, n_samples=1, seed=3, mode="ope")
    expected = hpsearch.sample_config(ParamRanges(), np.random.default_rng(3))
    assert result.best_config == expected
    assert result.best_index == 0
    assert len(result.table) == 1


def test_static_window_loses_to_moderate_window(model, sequences):
    frozen = TrackerConfig(win_weight=1.0)
    moderate = TrackerConfig()
    assert hpsearch.evaluate_config(model, sequences, frozen, "ope") < \
        hpsearch.evaluate_config(model, sequences, moderate, "ope")
    ranges = ParamRanges(win_weight=(0.2, 1.0))
    result = hpsearch.random_search(model, sequences, n_samples=4, seed=2, ranges=ranges, mode="ope")
    worst = min(result.table, key=lambda row: row[2])
    assert result.best_config.win_weight < worst[1].win_weight


def test_table_shape_and_best(model, sequences):
    result = hpsearch.random_search(model, sequences, n_samples=3, seed=0, mode="ope")
    assert [row[0] for row in result.table] == [0, 1, 2]
    assert result.best_score == max(row[2] for row in result.table)
    lines = hpsearch.table_csv(result).splitlines()
    assert lines[0] == ",".join(hpsearch.TABLE_HEADER)
    assert len(lines) == 4


def test_ties_go_to_lower_index(model, sequences):
    fixed = ParamRanges(scale_step=(1.05, 1.05), scale_penalty=(0.98, 0.98), scale_lr=(0.5, 0.5),
                        win_weight=(0.25, 0.25), template_lr=(0.0, 0.0))
    result = hpsearch.random_search(model, sequences, n_samples=3, seed=0, ranges=fixed, mode="ope")
    assert len({row[2] for row in result.table}) == 1
    assert result.best_index == 0


def test_search_is_deterministic_and_leaves_model_alone(model, sequences):
    before = net.dumps_checkpoint(model)
    a = hpsearch.random_search(model, sequences, n_samples=2, seed=5, mode="ope")
    b = hpsearch.random_search(model, sequences, n_samples=2, seed=5, mode="ope")
    assert hpsearch.table_csv(a) == hpsearch.table_csv(b)
    assert net.dumps_checkpoint(model) == before


def test_parallel_matches_serial(model, sequences):
    a = hpsearch.random_search(model, sequences, n_samples=2, seed=6, mode="ope", workers=1)
    b = hpsearch.random_search(model, sequences, n_samples=2, seed=6, mode="ope", workers=2)
    assert hpsearch.table_csv(a) == hpsearch.table_csv(b)


def test_histogram_counts(model, sequences):
    result = hpsearch.random_search(model, sequences, n_samples=3, seed=0, mode="ope")
    rows = hpsearch.histogram_csv(result).splitlines()
    assert rows[0] == "bin_lo,bin_hi,count"
    assert sum(int(r.split(",")[2]) for r in rows[1:]) == 3


def test_rejects_empty_inputs(model, sequences):
    with pytest.raises(ValueError):
        hpsearch.random_search(model, sequences, n_samples=0)
    with pytest.raises(ValueError):
        hpsearch.random_search(model, [], n_samples=1)
