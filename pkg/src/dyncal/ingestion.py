"""Reading raw interaction logs and category files into a :class:`Dataset`."""
from __future__ import annotations

import csv
import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import CategoryCatalog, Dataset

logger = logging.getLogger(__name__)


class IngestError(ValueError):
    """Unreadable input or input that violates a hard precondition."""


class MissingCategoryError(IngestError):
    pass


@dataclass(frozen=True)
class ColumnMapping:
    user: str = "user_id"
    item: str = "item_id"
    timestamp: str = "timestamp"
    label: str | None = None
    signal: str | None = None


@dataclass(frozen=True)
class RawInteraction:
    user: str
    item: str
    timestamp: int
    label: int | None = None
    signal: float | None = None

    @property
    def year(self) -> int:
        return datetime.fromtimestamp(self.timestamp, tz=timezone.utc).year


@dataclass(frozen=True)
class Reject:
    row: int
    reason: str


@dataclass
class ParseResult:
    records: list[RawInteraction]
    rejects: list[Reject]


def parse_timestamp(text: str) -> int:
    """Epoch seconds from an integer string or an ISO-8601 date/datetime (UTC if naive)."""
    text = text.strip()
    try:
        return int(text)
    except ValueError:
        pass
    try:
        val = float(text)
    except ValueError:
        pass
    else:
        if math.isfinite(val) and val.is_integer():
            return int(val)
        raise ValueError(f"non-integer timestamp {text!r}")
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise ValueError(f"unparseable timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_interactions(path, mapping: ColumnMapping | None = None) -> ParseResult:
    """Read an interaction CSV. Bad rows are collected as rejects (row numbers are 1-based, header excluded)."""
    mapping = mapping or ColumnMapping()
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read interaction file {path}: {exc}") from exc
    records: list[RawInteraction] = []
    rejects: list[Reject] = []
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = [mapping.user, mapping.item, mapping.timestamp]
        required += [c for c in (mapping.label, mapping.signal) if c is not None]
        missing = [c for c in required if c not in header]
        if missing:
            raise IngestError(f"{path}: missing mapped column(s) {missing}; header is {header}")
        for rowno, row in enumerate(reader, start=1):
            try:
                records.append(_parse_row(row, mapping))
            except ValueError as exc:
                rejects.append(Reject(rowno, str(exc)))
    return ParseResult(records, rejects)


def _parse_row(row: Mapping[str, str], mapping: ColumnMapping) -> RawInteraction:
    user = (row.get(mapping.user) or "").strip()
    item = (row.get(mapping.item) or "").strip()
    if not user or not item:
        raise ValueError("empty user or item id")
    ts = parse_timestamp(row.get(mapping.timestamp) or "")
    if ts <= 0:
        raise ValueError(f"non-positive timestamp {ts}")
    label = signal = None
    if mapping.label is not None and (row.get(mapping.label) or "").strip() != "":
        text = row[mapping.label].strip()
        if text not in ("0", "1"):
            raise ValueError(f"label must be 0 or 1, got {text!r}")
        label = int(text)
    if mapping.signal is not None and (row.get(mapping.signal) or "").strip() != "":
        try:
            signal = float(row[mapping.signal])
        except ValueError:
            raise ValueError(f"non-numeric signal {row[mapping.signal]!r}") from None
        if not math.isfinite(signal) or signal < 0:
            raise ValueError(f"signal must be finite and >= 0, got {signal}")
    return RawInteraction(user, item, ts, label, signal)


def write_rejects(rejects: Iterable[Reject], path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "reason"])
        for r in rejects:
            w.writerow([r.row, r.reason])


def label_by_threshold(records: Sequence[RawInteraction], threshold: float) -> list[RawInteraction]:
    """Label 1 iff ``signal >= threshold``; order and count are preserved."""
    out = []
    for k, r in enumerate(records):
        if r.signal is None:
            raise IngestError(f"record {k} ({r.user}, {r.item}) has no signal to threshold")
        out.append(replace(r, label=1 if r.signal >= threshold else 0))
    return out


@dataclass(frozen=True)
class FilterSpec:
    signal_threshold: float | None = None
    annual_min: int | None = None
    annual_max: int | None = None
    year_range: tuple[int, int] | None = None
    item_min_interactions: int | None = None
    per_year_min: int | None = None
    # "every": bounds must hold in each year of year_range; "average": on the mean.
    annual_mode: str = "every"

    def __post_init__(self):
        if self.annual_min is not None and self.annual_max is not None and self.annual_min > self.annual_max:
            raise ValueError("annual_min > annual_max")
        if self.year_range is not None:
            start, end = self.year_range
            if start > end:
                raise ValueError("year_range start > end")
            object.__setattr__(self, "year_range", (int(start), int(end)))
        if self.annual_mode not in ("every", "average"):
            raise ValueError(f"annual_mode must be 'every' or 'average', got {self.annual_mode!r}")


KUAIREC = FilterSpec(signal_threshold=0.9)
GOODREADS = FilterSpec(
    annual_min=20, annual_max=50, year_range=(2010, 2017), item_min_interactions=1000, per_year_min=4
)
GENERIC = FilterSpec()
PROFILES: dict[str, FilterSpec] = {"kuairec": KUAIREC, "goodreads": GOODREADS, "generic": GENERIC}


@dataclass
class FilterReport:
    stages: list[tuple[str, int, int, int]] = field(default_factory=list)  # (stage, records, users, items)
    warnings: list[str] = field(default_factory=list)

    def record(self, stage: str, records: Sequence[RawInteraction]) -> None:
        self.stages.append(
            (stage, len(records), len({r.user for r in records}), len({r.item for r in records}))
        )
        if not records:
            msg = f"filter stage {stage!r} produced no records"
            self.warnings.append(msg)
            logger.warning(msg)


def _years(spec: FilterSpec, records: Sequence[RawInteraction]) -> list[int]:
    if spec.year_range is not None:
        return list(range(spec.year_range[0], spec.year_range[1] + 1))
    return sorted({r.year for r in records})


def _per_user_year_counts(records: Sequence[RawInteraction]) -> dict[str, Counter]:
    counts: dict[str, Counter] = defaultdict(Counter)
    for r in records:
        counts[r.user][r.year] += 1
    return counts


def _annual_ok(counts: Counter, years: list[int], spec: FilterSpec) -> bool:
    lo = spec.annual_min if spec.annual_min is not None else -math.inf
    hi = spec.annual_max if spec.annual_max is not None else math.inf
    if spec.annual_mode == "average":
        mean = sum(counts[y] for y in years) / len(years)
        return lo <= mean <= hi
    return all(lo <= counts[y] <= hi for y in years)


def _one_pass(records: list[RawInteraction], spec: FilterSpec, report: FilterReport) -> list[RawInteraction]:
    if spec.year_range is not None:
        start, end = spec.year_range
        records = [r for r in records if start <= r.year <= end]
        report.record("year_range", records)
    if not records:
        return []

    if spec.annual_min is not None or spec.annual_max is not None:
        years = _years(spec, records)
        counts = _per_user_year_counts(records)
        keep = {u for u, c in counts.items() if _annual_ok(c, years, spec)}
        records = [r for r in records if r.user in keep]
        report.record("annual_activity", records)
        if not records:
            return []

    if spec.item_min_interactions is not None:
        item_counts = Counter(r.item for r in records)
        records = [r for r in records if item_counts[r.item] >= spec.item_min_interactions]
        report.record("item_min_interactions", records)
        if not records:
            return []

    if spec.per_year_min is not None:
        years = _years(spec, records)
        counts = _per_user_year_counts(records)
        keep = {u for u, c in counts.items() if all(c[y] > spec.per_year_min for y in years)}
        records = [r for r in records if r.user in keep]
        report.record("per_year_min", records)
    return records


def filter_goodreads(
    records: Sequence[RawInteraction],
    spec: FilterSpec,
    *,
    until_stable: bool = False,
    report: FilterReport | None = None,
) -> list[RawInteraction]:
    """Apply the activity/item filters in fixed order.

    1. restrict to ``year_range`` and keep users whose yearly counts sit in
       ``[annual_min, annual_max]`` (every year, or on average);
    2. drop items with fewer than ``item_min_interactions`` records;
    3. keep users with more than ``per_year_min`` records in every year.

    One pass can leave records that a second pass would remove (stage 2 and 3
    lower counts that stage 1 already checked). ``until_stable=True`` repeats
    the pass until nothing changes, which makes the filter idempotent.
    """
    report = report if report is not None else FilterReport()
    out = _one_pass(list(records), spec, report)
    while until_stable and out:
        again = _one_pass(out, spec, report)
        if len(again) == len(out):
            break
        out = again
    return out


def read_categories(path) -> dict[str, list[str]]:
    """Category CSV with header ``item_id,categories``; categories pipe-delimited."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read category file {path}: {exc}") from exc
    out: dict[str, list[str]] = {}
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"item_id", "categories"} <= set(reader.fieldnames):
            raise IngestError(f"{path}: header must contain item_id,categories")
        for row in reader:
            cats = [c.strip() for c in (row["categories"] or "").split("|") if c.strip()]
            out[row["item_id"].strip()] = cats
    return out


def _key_order(key: str):
    return (0, int(key), "") if key.isdigit() else (1, 0, key)


def canonicalize(records: Sequence[RawInteraction], categories: Mapping[str, Sequence[str]] | str | Path) -> Dataset:
    """Dense-remap users and items and build an equal-split catalog.

    Records without a label are treated as positive.
    """
    if isinstance(categories, (str, Path)):
        categories = read_categories(categories)
    user_keys = sorted({r.user for r in records}, key=_key_order)
    item_keys = sorted({r.item for r in records}, key=_key_order)
    missing = [k for k in item_keys if not categories.get(k)]
    if missing:
        raise MissingCategoryError(
            f"{len(missing)} item(s) have no category assignment, e.g. {missing[:5]}"
        )
    uidx = {k: i for i, k in enumerate(user_keys)}
    iidx = {k: i for i, k in enumerate(item_keys)}
    catalog = CategoryCatalog.from_assignments([categories[k] for k in item_keys])
    has_signal = any(r.signal is not None for r in records)
    return Dataset(
        users=np.array([uidx[r.user] for r in records], dtype=np.int64),
        items=np.array([iidx[r.item] for r in records], dtype=np.int64),
        timestamps=np.array([r.timestamp for r in records], dtype=np.int64),
        labels=np.array([1 if r.label is None else r.label for r in records], dtype=np.int8),
        catalog=catalog,
        user_keys=user_keys,
        item_keys=item_keys,
        signals=np.array([np.nan if r.signal is None else r.signal for r in records]) if has_signal else None,
    )


INTERACTION_HEADER = ["user_id", "item_id", "timestamp", "label", "signal"]


def write_dataset(dataset: Dataset, directory) -> dict[str, Path]:
    """Write the canonical dataset as ``interactions.csv``, ``categories.csv`` and ID maps."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {
        "interactions": d / "interactions.csv",
        "categories": d / "categories.csv",
        "users": d / "users.csv",
        "items": d / "items.csv",
    }
    with paths["interactions"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INTERACTION_HEADER)
        sig = dataset.signals
        for k in range(len(dataset)):
            s = "" if sig is None or np.isnan(sig[k]) else repr(float(sig[k]))
            w.writerow(
                [
                    dataset.user_keys[dataset.users[k]],
                    dataset.item_keys[dataset.items[k]],
                    int(dataset.timestamps[k]),
                    int(dataset.labels[k]),
                    s,
                ]
            )
    cat = dataset.catalog
    with paths["categories"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["item_id", "categories"])
        for i, key in enumerate(dataset.item_keys):
            w.writerow([key, "|".join(cat.categories[c] for c in np.flatnonzero(cat.shares[i]))])
    for name, keys in (("users", dataset.user_keys), ("items", dataset.item_keys)):
        with paths[name].open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["key", "id"])
            w.writerows((k, i) for i, k in enumerate(keys))
    return paths


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    parsed = parse_interactions(
        d / "interactions.csv", ColumnMapping(label="label", signal="signal")
    )
    if parsed.rejects:
        raise IngestError(f"{d}: canonical dataset has {len(parsed.rejects)} malformed rows")
    return canonicalize(parsed.records, d / "categories.csv")
