import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyncal.segmentation import (
    SegmentationError,
    assign_segments,
    nearest_rank_cuts,
    segment_by_activity,
    segment_by_entropy,
    tertiles,
    write_assignments,
)
from helpers import make_dataset

# 6 items per category: a = 0..5, b = 6..11, c = 12..17
CATS = [["a"]] * 6 + [["b"]] * 6 + [["c"]] * 6


def profile_rows(user, counts, t0=1):
    rows, base = [], {"a": 0, "b": 6, "c": 12}
    for cat, n in counts.items():
        rows += [(user, base[cat] + k, t0 + k) for k in range(n)]
    return rows


def activity_dataset(counts):
    rows = [(u, k % 18, 1 + k) for u, n in enumerate(counts) for k in range(n)]
    return make_dataset(rows, CATS)


def test_one_to_nine():
    seg = segment_by_activity(activity_dataset(range(1, 10)))
    got = {s: sorted(v for v, (lab, _) in ((u + 1, x) for u, x in seg.items()) if lab == s) for s in ("low", "mid", "high")}
    assert got == {"low": [1, 2, 3], "mid": [4, 5, 6], "high": [7, 8, 9]}


def test_all_equal_counts_are_low():
    seg = segment_by_activity(activity_dataset([4] * 7))
    assert {lab for lab, _ in seg.values()} == {"low"}


def test_three_users_one_each():
    seg = segment_by_activity(activity_dataset([1, 2, 3]))
    assert [seg[u][0] for u in range(3)] == ["low", "mid", "high"]


def test_fewer_than_three_users():
    with pytest.raises(SegmentationError):
        segment_by_activity(activity_dataset([1, 2]))


def test_activity_counts_deduplicate_and_ignore_negatives():
    rows = [(0, 0, 1), (0, 0, 2), (0, 1, 3, 0), (1, 0, 1), (1, 1, 2), (2, 0, 1)]
    seg = segment_by_activity(make_dataset(rows, CATS))
    assert [seg[u][1] for u in range(3)] == [1, 2, 1]


# hand-computed entropies (nats) of the nine profiles below
NINE = [
    ({"a": 1}, 0.0),
    ({"a": 3, "b": 1}, 0.5623351446188083),
    ({"a": 1, "b": 1}, 0.6931471805599453),
    ({"a": 2, "b": 1, "c": 1}, 1.0397207708399179),
    ({"a": 4, "b": 1, "c": 1}, 0.8675632284814612),
    ({"a": 1, "b": 1, "c": 1}, 1.0986122886681098),
    ({"a": 2, "b": 1}, 0.6365141682948128),
    ({"a": 3, "b": 2, "c": 1}, 1.0114042647073518),
    ({"a": 5, "b": 1}, 0.4505612088663047),
]


def test_nine_user_entropy_split():
    rows = [r for u, (c, _) in enumerate(NINE) for r in profile_rows(u, c)]
    seg = segment_by_entropy(make_dataset(rows, CATS))
    for u, (_, h) in enumerate(NINE):
        assert seg[u][1] == pytest.approx(h, abs=1e-12)
    labels = [seg[u][0] for u in range(9)]
    assert labels == ["low", "low", "mid", "high", "mid", "high", "mid", "high", "low"]


def test_single_vs_uniform_category_users():
    rows = []
    for u in range(3):
        rows += profile_rows(u, {"a": 3})
    for u in range(3, 6):
        rows += profile_rows(u, {"a": 2, "b": 1})
    for u in range(6, 9):
        rows += profile_rows(u, {"a": 1, "b": 1, "c": 1})
    seg = segment_by_entropy(make_dataset(rows, CATS))
    assert {seg[u][0] for u in range(3)} == {"low"}
    assert {seg[u][0] for u in range(6, 9)} == {"high"}


def test_two_distinct_entropies_fill_two_segments():
    rows = []
    for u in range(4):
        rows += profile_rows(u, {"a": 2})
    for u in range(4, 8):
        rows += profile_rows(u, {"a": 1, "b": 1})
    seg = segment_by_entropy(make_dataset(rows, CATS))
    labels = [seg[u][0] for u in range(8)]
    assert len(set(labels)) == 2
    assert len(set(labels[:4])) == 1 and len(set(labels[4:])) == 1


def test_empty_profile_user_rejected():
    rows = profile_rows(0, {"a": 1}) + profile_rows(1, {"b": 1}) + [(2, 0, 5, 0)]
    with pytest.raises(SegmentationError):
        segment_by_entropy(make_dataset(rows, CATS))


def test_assignments_and_csv(tmp_path):
    rows = [r for u, (c, _) in enumerate(NINE) for r in profile_rows(u, c)]
    ds = make_dataset(rows, CATS)
    out = assign_segments(ds)
    assert [a.user for a in out] == list(range(9))
    path = tmp_path / "seg.csv"
    write_assignments(out, path, ds.user_keys)
    lines = path.read_text().splitlines()
    assert lines[0] == "user_id,activity_segment,entropy_segment,activity_value,entropy_value"
    assert lines[1].startswith("u0,")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 10_000), min_size=3, max_size=60, unique=True))
def test_distinct_values_balanced(values):
    labels = tertiles(values)
    sizes = [labels.count(s) for s in ("low", "mid", "high")]
    assert max(sizes) - min(sizes) <= 1


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 20), min_size=3, max_size=40), st.randoms())
def test_labels_consistent_with_cuts_and_order_free(values, rnd):
    lo, hi = nearest_rank_cuts(values)
    labels = tertiles(values)
    for v, lab in zip(values, labels):
        assert lab == ("low" if v <= lo else "mid" if v <= hi else "high")
    shuffled = list(range(len(values)))
    rnd.shuffle(shuffled)
    again = tertiles([values[k] for k in shuffled])
    assert [labels[k] for k in shuffled] == again
