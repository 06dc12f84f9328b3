import numpy as np

from dyncal.model import CategoryCatalog, Dataset, RecommendationList


def make_dataset(rows, item_categories, categories=None, signals=None):
    """rows: (user, item, timestamp[, label]) with dense ints."""
    rows = [tuple(r) + (1,) * (4 - len(r)) for r in rows]
    n_users = max(r[0] for r in rows) + 1 if rows else 0
    catalog = CategoryCatalog.from_assignments(item_categories, categories)
    return Dataset(
        users=np.array([r[0] for r in rows], dtype=np.int64),
        items=np.array([r[1] for r in rows], dtype=np.int64),
        timestamps=np.array([r[2] for r in rows], dtype=np.int64),
        labels=np.array([r[3] for r in rows], dtype=np.int8),
        catalog=catalog,
        user_keys=[f"u{k}" for k in range(n_users)],
        item_keys=[f"i{k}" for k in range(len(item_categories))],
        signals=signals,
    )


def two_block_train(n_users=40, n_items=40, per_user=16, seed=0, holdout=4):
    """Users 0..n/2 like items 0..m/2, the rest like the other half.

    Returns ``(train, held)`` where ``held`` maps user to held-out positives.
    """
    from dyncal.recommenders import TrainSet

    rng = np.random.default_rng(seed)
    half_u, half_i = n_users // 2, n_items // 2
    pairs, held = [], {}
    for u in range(n_users):
        block = np.arange(half_i) if u < half_u else np.arange(half_i, n_items)
        picks = rng.choice(block, size=per_user + holdout, replace=False)
        pairs += [(u, int(i)) for i in picks[:per_user]]
        held[u] = {int(i) for i in picks[per_user:]}
    return TrainSet(n_users, n_items, np.array(pairs)), held


def calibrated_lists(level, recent=False):
    """Per user, swap each reference item for an unseen item of the same single category."""
    ds = level.sample.dataset
    ts = level.split.train_set()
    cat_of = ds.catalog.shares.argmax(axis=1)
    w1 = level.sample.window_rows(1)
    out = {}
    for u in level.eligible:
        seen = set(ts.user_items(u).tolist())
        source = np.unique(ds.items[w1][ds.users[w1] == u]) if recent else ts.user_items(u)
        free = {c: [i for i in np.flatnonzero(cat_of == c) if i not in seen] for c in range(ds.catalog.n_categories)}
        items = [int(free[cat_of[i]].pop()) for i in source]
        out[u] = RecommendationList(u, tuple(items), tuple(0.0 for _ in items))
    return out
