import math
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyncal.windowing import (
    DAY,
    MONTH,
    WindowSpec,
    assign_windows,
    build_samples,
    parse_duration,
    split_profiles,
    window_grid,
)
from helpers import make_dataset

ANCHOR = 1_000_000
H = 3600


def test_parse_duration():
    assert parse_duration("1d") == DAY
    assert parse_duration("6mo") == pytest.approx(6 * 30.44 * DAY)
    assert parse_duration("0.5y") == parse_duration("6mo")
    assert parse_duration("90") == 90.0
    with pytest.raises(ValueError):
        parse_duration("soon")


def test_window_rejects_nonpositive_width():
    with pytest.raises(ValueError):
        WindowSpec(width=0)


def test_hour_and_thirty_hours_fall_in_consecutive_days():
    ds = make_dataset([(0, 0, ANCHOR - H), (0, 1, ANCHOR - 30 * H)], [["a"], ["b"]])
    sub = split_profiles(ds, WindowSpec(DAY, anchor=ANCHOR))
    p = sub.profile(0)
    assert [list(ds.items[w]) for w in p] == [[0], [1]]


def test_interaction_at_anchor_is_window_one_and_edges_are_half_open():
    w, n, _ = assign_windows(np.array([ANCHOR, ANCHOR - DAY, ANCHOR - DAY + 1, ANCHOR - 3 * DAY]), WindowSpec(DAY, anchor=ANCHOR))
    assert list(w) == [1, 2, 1, 3]
    assert n == 3


def test_all_in_last_window():
    ds = make_dataset([(0, 0, ANCHOR - 10), (0, 1, ANCHOR - 20), (1, 0, ANCHOR - 5 * DAY)], [["a"], ["b"]])
    sub = split_profiles(ds, WindowSpec(DAY, anchor=ANCHOR))
    assert sub.n == 5
    sizes = [len(p) for p in sub.profile(0)]
    assert sizes == [2, 0, 0, 0, 0]


def test_max_windows_caps():
    w, n, _ = assign_windows(np.array([ANCHOR, ANCHOR - 5 * DAY]), WindowSpec(DAY, anchor=ANCHOR, max_windows=2))
    assert n == 2 and list(w) == [1, 0]


def test_calendar_months():
    def t(y, m, d):
        return int(datetime(y, m, d, tzinfo=timezone.utc).timestamp())

    anchor = t(2017, 12, 31)
    stamps = np.array([anchor, t(2017, 7, 1), t(2017, 6, 30), t(2016, 1, 1)])
    w, n, _ = assign_windows(stamps, WindowSpec(0, anchor=anchor, calendar_months=6))
    # (2017-06-30, 2017-12-31] is window 1; 2017-06-30 itself starts window 2
    assert list(w[:3]) == [1, 1, 2]
    assert n == 4 and w[3] == 4


def test_build_samples_union_and_sizes():
    # per-user window sizes (3, 2, 1) across windows 1..3
    rows = [(0, k, ANCHOR - k) for k in range(3)]
    rows += [(0, 3 + k, ANCHOR - DAY - k) for k in range(2)]
    rows += [(0, 5, ANCHOR - 2 * DAY - 1)]
    ds = make_dataset(rows, [["a"]] * 6)
    sub = split_profiles(ds, WindowSpec(DAY, anchor=ANCHOR))
    samples = build_samples(sub, 3)
    assert [len(s) for s in samples] == [3, 5, 6]
    p = sub.profile(0)
    assert set(samples[1].rows) == set(p[0]) | set(p[1])
    assert set(samples[0].rows) == set(p[0])
    with pytest.raises(ValueError):
        build_samples(sub, 4)


def test_window_grid_full_span_single_window():
    ds = make_dataset([(0, 0, ANCHOR), (0, 1, ANCHOR - 10 * DAY), (1, 0, ANCHOR - 3 * DAY)], [["a"], ["b"]])
    (row,) = window_grid(ds, [10 * DAY])
    assert row.n == 1 and row.empty_fraction == 0.0


def test_window_grid_uniform_daily_median():
    # 10 interactions per user per day over 14 days
    rows = [(u, (u + d + k) % 5, ANCHOR - d * DAY - k * 60) for u in range(4) for d in range(14) for k in range(10)]
    ds = make_dataset(rows, [["a"]] * 5)
    daily, weekly = window_grid(ds, ["1d", "7d"])
    assert daily.n == 14 and daily.median_cell == 10 and daily.empty_fraction == 0
    assert weekly.n == math.ceil(daily.n / 7)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 4), st.integers(0, 5), st.integers(1, 40 * 86_400)), min_size=1, max_size=60),
    st.sampled_from([3_600.0, DAY, 7 * DAY, MONTH]),
)
def test_nesting_and_partition(rows, width):
    ds = make_dataset(rows, [["a"]] * 6)
    sub = split_profiles(ds, WindowSpec(width))
    samples = build_samples(sub)
    for a, b in zip(samples, samples[1:]):
        assert set(a.rows) <= set(b.rows)
    assert set(samples[-1].rows) == set(range(len(ds)))
    for u in np.unique(ds.users):
        parts = sub.profile(int(u))
        assert sum(len(p) for p in parts) == int((ds.users == u).sum())
        assert len(set(np.concatenate(parts).tolist())) == int((ds.users == u).sum())
    # determinism
    again = split_profiles(ds, WindowSpec(width))
    assert (again.window == sub.window).all()


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 400 * 86_400), min_size=1, max_size=40))
def test_window_count_nested_ceiling(stamps):
    _, n1, _ = assign_windows(np.array(stamps), WindowSpec(DAY))
    _, n7, _ = assign_windows(np.array(stamps), WindowSpec(7 * DAY))
    assert n7 == math.ceil(n1 / 7)
