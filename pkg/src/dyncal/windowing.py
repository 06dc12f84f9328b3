"""Temporal subprofiles and cumulative samples.

Windows are counted backwards from a global anchor (by default the newest
timestamp in the dataset). Window ``j`` (1-based) covers
``(anchor - j*width, anchor - (j-1)*width]``; the oldest window also takes
an interaction sitting exactly on its lower edge, so ``n = ceil(span/width)``
windows always cover the data.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import Dataset, EmptyInputError

DAY = 86_400.0
MONTH = 30.44 * DAY
_UNITS = {"s": 1.0, "m": 60.0, "h": 3600.0, "d": DAY, "w": 7 * DAY, "mo": MONTH, "y": 12 * MONTH}


def parse_duration(text: str | float | int) -> float:
    """Seconds from ``"90s"``, ``"12h"``, ``"1d"``, ``"2w"``, ``"6mo"`` or ``"0.5y"``.

    A month is 30.44 days and a year is 12 such months. Bare numbers are seconds.
    """
    if isinstance(text, (int, float)):
        return float(text)
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(mo|[smhdwy])?\s*", text)
    if not m:
        raise ValueError(f"cannot parse duration {text!r}")
    return float(m.group(1)) * _UNITS[m.group(2) or "s"]


@dataclass(frozen=True)
class WindowSpec:
    width: float
    anchor: int | None = None
    max_windows: int | None = None
    # Calendar mode: window width in whole months, boundaries by calendar date.
    calendar_months: int | None = None

    def __post_init__(self):
        if self.calendar_months is None and not self.width > 0:
            raise ValueError(f"window width must be > 0, got {self.width}")
        if self.calendar_months is not None and self.calendar_months < 1:
            raise ValueError("calendar_months must be >= 1")
        if self.max_windows is not None and self.max_windows < 1:
            raise ValueError("max_windows must be >= 1")


def _shift_months(ts: int, months: int) -> int:
    dt = datetime.fromtimestamp(ts, tz=timezone.utc)
    total = dt.year * 12 + (dt.month - 1) - months
    year, month = divmod(total, 12)
    month += 1
    # clamp day to the target month's length
    nxt = datetime(year + (month == 12), month % 12 + 1, 1, tzinfo=timezone.utc)
    last_day = (nxt - datetime(year, month, 1, tzinfo=timezone.utc)).days
    return int(dt.replace(year=year, month=month, day=min(dt.day, last_day)).timestamp())


@dataclass(frozen=True)
class Subprofiles:
    """Window assignment of every interaction of a dataset.

    ``window[k]`` is the 1-based window of row ``k``; 0 marks rows older than
    the last window when ``max_windows`` caps the count.
    """

    dataset: Dataset
    window: np.ndarray
    n: int
    anchor: int

    def profile(self, user: int) -> list[np.ndarray]:
        """Row positions of ``P_u^1 .. P_u^n`` for one user, newest first within each window."""
        rows = np.flatnonzero(self.dataset.users == user)
        rows = rows[np.argsort(-self.dataset.timestamps[rows], kind="stable")]
        w = self.window[rows]
        return [rows[w == j] for j in range(1, self.n + 1)]

    def cell_sizes(self) -> np.ndarray:
        """``n_users x n`` matrix of interaction counts per (user, window)."""
        keep = self.window > 0
        out = np.zeros((self.dataset.n_users, self.n), dtype=np.int64)
        np.add.at(out, (self.dataset.users[keep], self.window[keep] - 1), 1)
        return out


def assign_windows(timestamps: np.ndarray, spec: WindowSpec, anchor: int | None = None) -> tuple[np.ndarray, int, int]:
    """Return ``(window index per timestamp, n, anchor)``."""
    ts = np.asarray(timestamps, dtype=np.int64)
    if ts.size == 0:
        raise EmptyInputError("cannot window an empty dataset")
    if anchor is None:
        anchor = spec.anchor if spec.anchor is not None else int(ts.max())
    if spec.calendar_months is None:
        span = float(anchor - ts.min())
        n = max(1, math.ceil(span / spec.width))
        j = np.floor((anchor - ts) / spec.width).astype(np.int64) + 1
        j = np.minimum(j, n)
    else:
        bounds = [anchor]
        while bounds[-1] > ts.min():
            bounds.append(_shift_months(anchor, spec.calendar_months * len(bounds)))
        n = max(1, len(bounds) - 1)
        # window j: (bounds[j], bounds[j-1]]; ascending edges for searchsorted
        edges = np.array(bounds[::-1], dtype=np.int64)
        j = len(edges) - np.searchsorted(edges, ts, side="left")
        j = np.clip(j, 1, n)
    j = np.where(ts > anchor, 0, j)
    if spec.max_windows is not None and n > spec.max_windows:
        n = spec.max_windows
        j = np.where(j > n, 0, j)
    return j, n, int(anchor)


def split_profiles(dataset: Dataset, spec: WindowSpec) -> Subprofiles:
    if len(dataset) == 0:
        raise EmptyInputError("split_profiles: dataset is empty")
    window, n, anchor = assign_windows(dataset.timestamps, spec)
    window.setflags(write=False)
    return Subprofiles(dataset, window, n, anchor)


@dataclass(frozen=True)
class TemporalSample:
    """The cumulative sample built from windows ``1..level``."""

    level: int
    rows: np.ndarray
    subprofiles: Subprofiles

    @property
    def dataset(self) -> Dataset:
        return self.subprofiles.dataset

    @property
    def data(self) -> Dataset:
        """The sample as its own :class:`Dataset` (same ID space)."""
        return self.dataset.subset(self.rows)

    def __len__(self) -> int:
        return len(self.rows)

    def window_rows(self, j: int) -> np.ndarray:
        return self.rows[self.subprofiles.window[self.rows] == j]


def build_samples(subprofiles: Subprofiles, n: int | None = None) -> list[TemporalSample]:
    n = subprofiles.n if n is None else n
    if n < 1 or n > subprofiles.n:
        raise ValueError(f"requested {n} samples but only {subprofiles.n} windows exist")
    w = subprofiles.window
    out = []
    for level in range(1, n + 1):
        rows = np.flatnonzero((w >= 1) & (w <= level))
        rows.setflags(write=False)
        out.append(TemporalSample(level, rows, subprofiles))
    return out


@dataclass(frozen=True)
class WindowSummary:
    width: float
    n: int
    empty_fraction: float
    median_cell: float


def window_grid(dataset: Dataset, widths: Sequence[float | str], anchor: int | None = None) -> list[WindowSummary]:
    """Per candidate width: window count, share of empty (user, window) cells and median cell size.

    Cells are counted over users with at least one interaction.
    """
    if len(widths) == 0:
        raise ValueError("window_grid needs at least one candidate width")
    out = []
    for width in widths:
        width = parse_duration(width)
        sub = split_profiles(dataset, WindowSpec(width=width, anchor=anchor))
        cells = sub.cell_sizes()
        cells = cells[cells.sum(axis=1) > 0]
        out.append(
            WindowSummary(
                width=width,
                n=sub.n,
                empty_fraction=float((cells == 0).mean()),
                median_cell=float(np.median(cells)),
            )
        )
    return out


def write_window_grid(rows: Sequence[WindowSummary], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["width", "n", "empty_fraction", "median_cell"])
        for r in rows:
            w.writerow([r.width, r.n, r.empty_fraction, r.median_cell])
