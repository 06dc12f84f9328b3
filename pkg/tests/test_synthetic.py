import json

import numpy as np
import pytest

from dyncal.synthetic import DriftSpec, category_names, generate_drift_dataset, write_truth
from dyncal.windowing import WindowSpec, split_profiles


def window_frequencies(ds, truth, window):
    sub = split_profiles(ds, WindowSpec(truth.spec.width, anchor=truth.spec.anchor))
    rows = np.flatnonzero(sub.window == window)
    W = truth.spec.n_categories
    freq = np.zeros((truth.spec.n_users, W))
    np.add.at(freq, (ds.users[rows], truth.item_category[ds.items[rows]]), 1)
    return freq / freq.sum(axis=1, keepdims=True)


def tv(a, b):
    return 0.5 * np.abs(a - b).sum(axis=1)


def test_deterministic():
    spec = DriftSpec(n_users=20, n_items=50, seed=4)
    a, ta = generate_drift_dataset(spec)
    b, tb = generate_drift_dataset(spec)
    assert np.array_equal(a.items, b.items) and np.array_equal(a.timestamps, b.timestamps)
    assert np.array_equal(ta.post, tb.post)
    c, _ = generate_drift_dataset(DriftSpec(n_users=20, n_items=50, seed=5))
    assert not np.array_equal(a.items, c.items)


@pytest.mark.parametrize("kw", [{"shift_at": 9}, {"shift_at": 0}, {"n_items": 5}, {"n_users": 0}, {"mode": "gradual"}])
def test_drift_parameter_bounds(kw):
    with pytest.raises(ValueError):
        DriftSpec(**kw)


def test_structure():
    ds, truth = generate_drift_dataset(DriftSpec(n_users=30, n_items=60))
    assert len(ds) == 30 * 8 * 10
    assert ds.timestamps.max() == truth.spec.anchor
    sub = split_profiles(ds, WindowSpec(truth.spec.width, anchor=truth.spec.anchor))
    assert sub.n == 8
    assert (ds.catalog.shares.max(axis=1) == 1.0).all()
    assert ds.catalog.categories == tuple(category_names(10))
    # orthogonal supports
    assert (np.minimum(truth.pre, truth.post).sum(axis=1) == 0).all()


def test_no_drift_mode_equal_preferences():
    _, truth = generate_drift_dataset(DriftSpec(n_users=10, n_items=40, mode="none"))
    assert np.array_equal(truth.pre, truth.post)


def test_window_one_matches_post_shift_truth():
    spec = DriftSpec(interactions_per_window=2000, n_users=200)
    ds, truth = generate_drift_dataset(spec)
    assert tv(window_frequencies(ds, truth, 1), truth.post).max() < 0.05
    assert tv(window_frequencies(ds, truth, 8), truth.pre).max() < 0.05


def test_frequencies_converge_with_cell_size():
    errs = []
    for k in (20, 500):
        ds, truth = generate_drift_dataset(DriftSpec(n_users=50, interactions_per_window=k, seed=1))
        errs.append(tv(window_frequencies(ds, truth, 2), truth.post).mean())
    assert errs[1] < errs[0] / 2


def test_truth_json(tmp_path):
    _, truth = generate_drift_dataset(DriftSpec(n_users=3, n_items=20, shift_at=2))
    write_truth(truth, tmp_path / "t.json")
    got = json.loads((tmp_path / "t.json").read_text())
    assert got["shift_at"] == 2
    assert np.allclose(np.array(got["post"]).sum(axis=1), 1)
