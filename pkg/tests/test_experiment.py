import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyncal.experiment import (
    CellResult,
    ConfigError,
    ExperimentConfig,
    LeakError,
    aggregate,
    aggregate_by_segment,
    evaluate_recommendations,
    prepare_level,
    run_experiment,
    temporal_split,
    write_results_csv,
)
from dyncal.metrics import MetricConfig
from dyncal.model import RecommendationList
from dyncal.recommenders import BprHyperparams
from dyncal.segmentation import UserSegmentAssignment
from dyncal.synthetic import DriftSpec, generate_drift_dataset
from dyncal.windowing import DAY, WindowSpec, build_samples, split_profiles
from helpers import calibrated_lists, make_dataset
from oracles import recency_split

FAST = dict(
    window=WindowSpec(DAY),
    lr_grid=(0.05,),
    dim_grid=(8,),
    bpr=BprHyperparams(epochs=5, embedding_dim=8),
    seeds=(0, 1),
    backend="python",
)


@pytest.fixture(scope="module")
def small_drift():
    ds, _ = generate_drift_dataset(
        DriftSpec(n_users=12, n_items=200, n_categories=4, windows=3, interactions_per_window=8, seed=2)
    )
    return ds


def random_lists(level, rng, k=10):
    ts = level.split.train_set()
    out = {}
    for u in level.eligible:
        cand = np.setdiff1d(ts.items(), ts.user_items(u))
        out[u] = RecommendationList(u, tuple(rng.choice(cand, size=k, replace=False).tolist()), (0.0,) * k)
    return out


def levels_of(ds, config):
    sub = split_profiles(ds, config.window)
    return [prepare_level(s, config) for s in build_samples(sub)]


def test_ten_positives_two_in_test():
    rows = [(0, k, 100 + k) for k in range(10)]
    sp = temporal_split(make_dataset(rows, [["a"]] * 10))
    assert sp.test[0] == {8, 9} and sp.eligible == (0,)


def test_three_positives_excluded_but_kept_for_training():
    rows = [(0, k, 100 + k) for k in range(3)] + [(1, k, 100 + k) for k in range(8)]
    sp = temporal_split(make_dataset(rows, [["a"]] * 8), min_train=5)
    assert 0 in sp.excluded and 0 not in sp.eligible
    assert sorted(sp.train_set().user_items(0).tolist()) == [0, 1, 2]


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 3), st.integers(0, 7), st.integers(1, 6), st.integers(0, 1)), min_size=1, max_size=40),
    st.sampled_from([0.2, 0.34, 0.5]),
)
def test_split_matches_sort_oracle(rows, fraction):
    ds = make_dataset(rows, [["a"]] * 8)
    sp = temporal_split(ds, fraction, min_train=1, min_test=1)
    expect = recency_split([(u, i, t) for u, i, t, lab in rows if lab == 1], fraction)
    ts = sp.train_set()
    for u, (train, test) in expect.items():
        if u in sp.eligible:
            assert set(sp.test[u]) == test
        assert set(ts.user_items(u).tolist()) == (train if u in sp.eligible else train | test)
        # never both train and test
        assert not set(sp.test.get(u, ())) & set(ts.user_items(u).tolist())


@pytest.mark.parametrize("mode", ["sample-profile", "recent-window"])
def test_calibrated_policy_zero_at_every_level(small_drift, mode):
    cfg = ExperimentConfig(**FAST, reference_mode=mode)
    metric = MetricConfig(smoothing_alpha=0.0)
    for lv in levels_of(small_drift, cfg):
        mc, _ = evaluate_recommendations(lv, calibrated_lists(lv, mode == "recent-window"), metric)
        assert len(mc) == len(lv.eligible) > 0
        assert max(abs(v) for v in mc.values()) < 1e-12


def test_random_worse_than_calibrated(small_drift):
    cfg = ExperimentConfig(**FAST)
    metric = MetricConfig()
    (lv,) = levels_of(small_drift, cfg)[-1:]
    cal, _ = evaluate_recommendations(lv, calibrated_lists(lv), metric)
    rand = [np.mean(list(evaluate_recommendations(lv, random_lists(lv, np.random.default_rng(s)), metric)[0].values())) for s in range(6)]
    assert np.mean(rand) > np.mean(list(cal.values())) + 0.1


def test_leak_detected(small_drift):
    cfg = ExperimentConfig(**FAST)
    lv = levels_of(small_drift, cfg)[0]
    u = lv.eligible[0]
    item = int(lv.split.train_set().user_items(u)[0])
    recs = calibrated_lists(lv)
    recs[u] = RecommendationList(u, (item,), (1.0,))
    with pytest.raises(LeakError):
        evaluate_recommendations(lv, recs, MetricConfig())


def test_cells_complete_and_mean_matches(small_drift):
    res = run_experiment(small_drift, ExperimentConfig(**FAST))
    assert res.n_levels == 3
    assert sorted(res.cells) == [(lv, r) for lv in (1, 2, 3) for r in (0, 1)]
    for lv, s in res.level_stats().items():
        pooled = [v for c in res.cells.values() if c.level == lv for v in c.miscalibration.values()]
        assert s["miscalibration"].mean == pytest.approx(float(np.mean(pooled)), abs=1e-12)
        assert s["miscalibration"].n == len(pooled)
    assert res.argmin_level() in (1, 2, 3)


def test_single_level(small_drift):
    res = run_experiment(small_drift, dataclasses.replace(ExperimentConfig(**FAST), levels=1))
    assert res.n_levels == 1 and res.argmin_level() == 1
    assert len(res.cells) == 2


def test_seed_isolation(small_drift):
    a = run_experiment(small_drift, ExperimentConfig(**{**FAST, "seeds": (0, 1, 2)}))
    b = run_experiment(small_drift, ExperimentConfig(**{**FAST, "seeds": (0, 1, 7)}))
    for key, cell in a.cells.items():
        if key[1] < 2:
            assert cell.miscalibration == b.cells[key].miscalibration
    assert any(a.cells[(lv, 2)].miscalibration != b.cells[(lv, 2)].miscalibration for lv in (1, 2, 3))


def test_thread_count_invariance(small_drift, tmp_path):
    paths = []
    for jobs in (1, 3):
        res = run_experiment(small_drift, ExperimentConfig(**FAST, jobs=jobs))
        p = tmp_path / f"r{jobs}.csv"
        write_results_csv(res, p)
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]


def test_snapshot(small_drift):
    # recorded once from a run checked against the oracle tests above
    res = run_experiment(small_drift, ExperimentConfig(**{**FAST, "seeds": (0,)}))
    cell = res.cells[(3, 0)]
    assert cell.params == {"learning_rate": 0.05, "embedding_dim": 8}
    assert sorted(cell.miscalibration) == SNAPSHOT_USERS
    assert cell.mc_stats.mean == pytest.approx(SNAPSHOT_MC_MEAN, abs=1e-9)
    assert cell.ndcg_stats.mean == pytest.approx(SNAPSHOT_NDCG_MEAN, abs=1e-9)


SNAPSHOT_USERS = list(range(12))
SNAPSHOT_MC_MEAN = 1.6091382099295235
SNAPSHOT_NDCG_MEAN = 0.04453680201646495


def test_bad_config():
    with pytest.raises(ConfigError, match="repetitions"):
        run_experiment(make_dataset([(0, 0, 1)], [["a"]]), ExperimentConfig(WindowSpec(DAY), repetitions=3, seeds=(0, 1)))


def _cell(level, rep, mc):
    return CellResult(level, rep, rep, {}, mc, {u: 0.5 for u in mc})


def test_segment_aggregation_by_hand():
    cells = [_cell(1, 0, {0: 1.0, 1: 3.0, 2: 10.0}), _cell(1, 1, {0: 2.0, 1: 4.0}), _cell(2, 0, {0: 0.5, 1: 0.5})]
    assign = {
        0: UserSegmentAssignment(0, "low", "low", 1, 0.0),
        1: UserSegmentAssignment(1, "low", "high", 1, 0.0),
        2: UserSegmentAssignment(2, "high", "high", 9, 1.0),
    }
    seg = aggregate_by_segment(cells, assign)
    assert seg["activity"]["low"]["levels"][1]["miscalibration"].mean == pytest.approx(2.5)
    assert seg["activity"]["high"]["levels"][1]["miscalibration"].mean == pytest.approx(10.0)
    # high-activity user absent at level 2
    assert seg["activity"]["high"]["levels"][2]["miscalibration"] is None
    assert seg["activity"]["mid"]["argmin_level"] is None
    assert seg["entropy"]["high"]["levels"][1]["miscalibration"].mean == pytest.approx((3 + 10 + 4) / 3)
    assert seg["activity"]["low"]["argmin_level"] == 2


def test_one_segment_equals_global():
    cells = [_cell(1, 0, {0: 1.0, 1: 3.0}), _cell(2, 0, {0: 0.25, 1: 2.0})]
    assign = {u: UserSegmentAssignment(u, "low", "low", 1, 0.0) for u in (0, 1)}
    seg = aggregate_by_segment(cells, assign)
    assert seg["activity"]["low"]["levels"] == aggregate(cells)


def test_pooling_order_invariance():
    cells = [_cell(1, r, {u: float(u * r) for u in range(4)}) for r in range(3)]
    assert aggregate(cells) == aggregate(cells[::-1])
