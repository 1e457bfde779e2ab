"""Liquidity data pipeline: ingestion, USD aggregation, lead shift, lag
features, temporal splits, and the look-ahead audit.

Everything here is a pure function of its inputs; rebuilding a dataset from
the same files is bit-identical. Rejected rows are counted and reported,
never silently dropped.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, DataError, SchemaError, SizingError

SPLIT_TRAIN = "train"
SPLIT_VALIDATION = "validation"
SPLIT_TEST = "test"
SPLIT_NONE = ""

#: dense lag offsets used for the published Global Liquidity configuration
DEFAULT_LAG_OFFSETS = [1, 7, 14, 21, 28, 35, 42, 49, 56, 63, 70, 77, 84, 91, 98]
DEFAULT_SHIFT_DAYS = 84  # 12 weeks in calendar days


def daily_range(start: date, end: date) -> list[date]:
    """Inclusive daily calendar from start to end."""
    if end < start:
        raise ContractError(f"daily_range end {end} precedes start {start}")
    return [start + timedelta(days=i) for i in range((end - start).days + 1)]


# ---------------------------------------------------------------------------
# raw series and ingestion
# ---------------------------------------------------------------------------

@dataclass
class RawSeries:
    """One named series of (date, value) observations, strictly date-ordered."""

    name: str
    dates: list[date]
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.dates) != len(self.values):
            raise ContractError(f"{self.name}: {len(self.dates)} dates vs {len(self.values)} values")
        for a, b in zip(self.dates, self.dates[1:]):
            if b <= a:
                raise ContractError(f"{self.name}: dates not strictly increasing at {b}")

    def __len__(self) -> int:
        return len(self.dates)

    def ffill_index(self, d: date) -> int:
        """Index of the most recent observation on or before d, or -1."""
        return bisect_right(self.dates, d) - 1

    @classmethod
    def from_pairs(cls, name: str, pairs: Iterable[tuple[date, float]]) -> "RawSeries":
        pairs = sorted(pairs, key=lambda p: p[0])
        return cls(name, [p[0] for p in pairs], np.array([p[1] for p in pairs]))


@dataclass
class RowRejection:
    line: int
    reason: str


@dataclass
class LoadResult:
    series: RawSeries
    rejections: list[RowRejection]


def load_csv(path, name: Optional[str] = None, strict: bool = True) -> LoadResult:
    """Parse a `date,value` CSV (header required) into a sorted RawSeries.

    With strict=False malformed rows are collected as rejections instead of
    raising. A missing `date` or `value` column raises SchemaError either way.
    """
    path = str(path)
    if name is None:
        name = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
    rows: list[tuple[date, float]] = []
    seen: set[date] = set()
    rejections: list[RowRejection] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"date", "value"} <= set(reader.fieldnames):
            raise SchemaError(f"{path}: header must include 'date' and 'value' columns, "
                              f"got {reader.fieldnames}")
        for rec in reader:
            line = reader.line_num
            try:
                d = date.fromisoformat((rec["date"] or "").strip())
            except ValueError:
                issue = RowRejection(line, f"unparseable date {rec['date']!r}")
                if strict:
                    raise DataError(f"{path}:{line}: {issue.reason}")
                rejections.append(issue)
                continue
            try:
                v = float(rec["value"])
            except (TypeError, ValueError):
                issue = RowRejection(line, f"unparseable value {rec['value']!r}")
                if strict:
                    raise DataError(f"{path}:{line}: {issue.reason}")
                rejections.append(issue)
                continue
            if d in seen:
                issue = RowRejection(line, f"duplicate date {d.isoformat()}")
                if strict:
                    raise DataError(f"{path}:{line}: {issue.reason}")
                rejections.append(issue)
                continue
            seen.add(d)
            rows.append((d, v))
    return LoadResult(RawSeries.from_pairs(name, rows), rejections)


# ---------------------------------------------------------------------------
# USD conversion and aggregation
# ---------------------------------------------------------------------------

@dataclass
class ConversionResult:
    series: RawSeries
    dropped_dates: list[date]  # m2 dates preceding the first FX quote


def convert_to_usd(m2: RawSeries, fx: RawSeries) -> ConversionResult:
    """Divide each m2 value by the most recent FX quote on or before its date.

    FX quotes are local-currency-per-USD; forward-fill covers non-trading
    days. Dates before the first FX quote are dropped and reported.
    """
    if len(m2) == 0 or len(fx) == 0:
        raise ContractError("convert_to_usd needs non-empty m2 and fx series")
    if np.any(fx.values <= 0.0):
        bad = fx.dates[int(np.argmax(fx.values <= 0.0))]
        raise DataError(f"{fx.name}: non-positive FX rate on {bad}")
    dates: list[date] = []
    values: list[float] = []
    dropped: list[date] = []
    for d, v in zip(m2.dates, m2.values):
        i = fx.ffill_index(d)
        if i < 0:
            dropped.append(d)
            continue
        dates.append(d)
        values.append(v / fx.values[i])
    return ConversionResult(RawSeries(m2.name, dates, np.array(values)), dropped)


@dataclass
class GlobalLiquiditySeries:
    """USD-aggregated liquidity with per-value pre-shift observation dates.

    ``source_ordinals[i]`` is ``date.toordinal()`` of the raw observation
    underlying ``values[i]``; ``apply_lead_shift`` moves dates but keeps the
    sources, which is what the look-ahead audit inspects.
    """

    dates: list[date]
    values: np.ndarray
    source_ordinals: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.source_ordinals = np.asarray(self.source_ordinals, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.dates)

    def index_of(self) -> dict[date, int]:
        return {d: i for i, d in enumerate(self.dates)}


def aggregate_global(series: Sequence[RawSeries], calendar: Sequence[date]) -> GlobalLiquiditySeries:
    """Per-date sum of forward-filled constituents over the calendar.

    A date is emitted only once every constituent has at least one
    observation on or before it.
    """
    if not series:
        raise ContractError("aggregate_global needs at least one constituent series")
    dates: list[date] = []
    values: list[float] = []
    for d in calendar:
        parts: list[float] = []
        for s in series:
            i = s.ffill_index(d)
            if i < 0:
                parts = []
                break
            parts.append(float(s.values[i]))
        if parts:
            dates.append(d)
            # fsum: exactly-rounded, hence permutation-invariant to the bit
            values.append(math.fsum(parts))
    ords = np.array([d.toordinal() for d in dates], dtype=np.int64)
    return GlobalLiquiditySeries(dates, np.array(values), ords)


def apply_lead_shift(g: GlobalLiquiditySeries, shift_days: int = DEFAULT_SHIFT_DAYS) -> GlobalLiquiditySeries:
    """Move every observation (d, v) to (d + shift_days, v).

    The value observed at d is thereafter treated as aligned with the target
    at d + shift_days; source dates are preserved for the audit.
    """
    delta = timedelta(days=int(shift_days))
    return GlobalLiquiditySeries([d + delta for d in g.dates], g.values.copy(),
                                 g.source_ordinals.copy())


# ---------------------------------------------------------------------------
# aligned dataset
# ---------------------------------------------------------------------------

@dataclass
class AlignedDataset:
    """Leakage-free table of (date, target, exogenous lag features).

    ``exog`` columns are ordered ``global, global_lag_k...`` following
    ``lag_offsets``. ``source_ordinals`` (same shape as ``exog``) carries the
    pre-shift observation date of every cell; it is None for datasets
    reloaded from CSV, which cannot be audited.
    """

    dates: list[date]
    prices: np.ndarray
    exog: np.ndarray
    lag_offsets: list[int]
    split_labels: np.ndarray
    source_ordinals: Optional[np.ndarray] = None

    def __post_init__(self):
        self.prices = np.asarray(self.prices, dtype=np.float64)
        self.exog = np.asarray(self.exog, dtype=np.float64)
        if self.exog.shape != (len(self.dates), 1 + len(self.lag_offsets)):
            raise ContractError(f"exog shape {self.exog.shape} does not match "
                                f"{len(self.dates)} rows x 1+{len(self.lag_offsets)} columns")

    def __len__(self) -> int:
        return len(self.dates)

    @property
    def exog_names(self) -> list[str]:
        return ["global"] + [f"global_lag_{k}" for k in self.lag_offsets]

    @property
    def column_offsets(self) -> list[int]:
        """Lag offset per exog column (0 for the contemporaneous column)."""
        return [0] + list(self.lag_offsets)

    def split_indices(self, label: str) -> np.ndarray:
        return np.flatnonzero(self.split_labels == label)

    def split_counts(self) -> dict[str, int]:
        return {label: int((self.split_labels == label).sum())
                for label in (SPLIT_TRAIN, SPLIT_VALIDATION, SPLIT_TEST)}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["date", "bitcoin_price"] + self.exog_names + ["split"])
            for i, d in enumerate(self.dates):
                w.writerow([d.isoformat(), repr(float(self.prices[i]))]
                           + [repr(float(v)) for v in self.exog[i]]
                           + [str(self.split_labels[i])])

    @classmethod
    def from_csv(cls, path) -> "AlignedDataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["date", "bitcoin_price"] or header[-1] != "split" \
                    or header[2] != "global":
                raise SchemaError(f"{path}: unexpected dataset header {header[:3]}...{header[-1:]}")
            lag_offsets = []
            for col in header[3:-1]:
                if not col.startswith("global_lag_"):
                    raise SchemaError(f"{path}: unexpected column {col!r}")
                lag_offsets.append(int(col[len("global_lag_"):]))
            dates, prices, exog, labels = [], [], [], []
            for rec in reader:
                dates.append(date.fromisoformat(rec[0]))
                prices.append(float(rec[1]))
                exog.append([float(v) for v in rec[2:-1]])
                labels.append(rec[-1])
        return cls(dates, np.array(prices), np.array(exog), lag_offsets,
                   np.array(labels, dtype="<U10"))


def build_lag_features(g: GlobalLiquiditySeries, target: RawSeries,
                       offsets: Sequence[int],
                       reference_date: Optional[date] = None) -> AlignedDataset:
    """One row per target date where the (shifted) global series covers the
    date and every lag offset; with ``reference_date`` set, rows are
    truncated at reference_date - max(offsets) (reference anchoring)."""
    offsets = [int(k) for k in offsets]
    if not offsets or len(set(offsets)) != len(offsets) or min(offsets) <= 0:
        raise ContractError(f"lag offsets must be non-empty, positive, distinct: {offsets}")
    gidx = g.index_of()
    last_allowed = None
    if reference_date is not None:
        last_allowed = reference_date - timedelta(days=max(offsets))
    dates: list[date] = []
    prices: list[float] = []
    exog_rows: list[list[float]] = []
    src_rows: list[list[int]] = []
    for d, price in zip(target.dates, target.values):
        if last_allowed is not None and d > last_allowed:
            continue
        i0 = gidx.get(d)
        if i0 is None:
            continue
        row = [g.values[i0]]
        src = [int(g.source_ordinals[i0])]
        covered = True
        for k in offsets:
            ik = gidx.get(d - timedelta(days=k))
            if ik is None:
                covered = False
                break
            row.append(g.values[ik])
            src.append(int(g.source_ordinals[ik]))
        if not covered:
            continue
        dates.append(d)
        prices.append(float(price))
        exog_rows.append(row)
        src_rows.append(src)
    if not dates:
        raise SizingError("no target date is fully covered by the global series and its lags")
    n = len(dates)
    return AlignedDataset(dates, np.array(prices), np.array(exog_rows), offsets,
                          np.full(n, SPLIT_NONE, dtype="<U10"),
                          np.array(src_rows, dtype=np.int64))


# ---------------------------------------------------------------------------
# temporal splits
# ---------------------------------------------------------------------------

@dataclass
class SplitSpec:
    """Contiguous train/validation/test windows, inclusive on both ends."""

    train_start: date
    train_end: date
    val_start: date
    val_end: date
    test_start: date
    test_end: date
    reference_date: Optional[date] = None

    def __post_init__(self):
        order = [self.train_start, self.train_end, self.val_start, self.val_end,
                 self.test_start, self.test_end]
        for a, b in zip(order, order[1:]):
            if b < a:
                raise ContractError(f"split spec unordered: {a} > {b}")
        if self.val_start != self.train_end + timedelta(days=1):
            raise ContractError("validation window must start the day after training ends")
        if self.test_start != self.val_end + timedelta(days=1):
            raise ContractError("test window must start the day after validation ends")

    def label(self, d: date) -> str:
        if self.train_start <= d <= self.train_end:
            return SPLIT_TRAIN
        if self.val_start <= d <= self.val_end:
            return SPLIT_VALIDATION
        if self.test_start <= d <= self.test_end:
            return SPLIT_TEST
        return SPLIT_NONE

    @classmethod
    def published(cls) -> "SplitSpec":
        """The Table-1 partition (1728/120/120 days, reference 2025-08-27)."""
        return cls(train_start=date(2020, 1, 1), train_end=date(2024, 9, 23),
                   val_start=date(2024, 9, 24), val_end=date(2025, 1, 21),
                   test_start=date(2025, 1, 22), test_end=date(2025, 5, 21),
                   reference_date=date(2025, 8, 27))


def split(dataset: AlignedDataset, spec: SplitSpec) -> tuple[AlignedDataset, dict[str, int]]:
    """Label every row by the window containing its date; rows outside all
    windows are dropped (and counted) so labels partition the result."""
    labels = [spec.label(d) for d in dataset.dates]
    keep = [i for i, lab in enumerate(labels) if lab != SPLIT_NONE]
    dropped = len(dataset) - len(keep)
    out = AlignedDataset(
        [dataset.dates[i] for i in keep],
        dataset.prices[keep],
        dataset.exog[keep],
        list(dataset.lag_offsets),
        np.array([labels[i] for i in keep], dtype="<U10"),
        None if dataset.source_ordinals is None else dataset.source_ordinals[keep],
    )
    counts = out.split_counts()
    counts["dropped"] = dropped
    return out, counts


# ---------------------------------------------------------------------------
# look-ahead audit
# ---------------------------------------------------------------------------

@dataclass
class AuditViolation:
    row_date: date
    column: str
    source_date: date
    reason: str


@dataclass
class AuditReport:
    n_rows: int
    first_row_date: Optional[date]
    last_row_date: Optional[date]
    violations: list[AuditViolation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "rows": self.n_rows,
            "first_row_date": self.first_row_date.isoformat() if self.first_row_date else None,
            "last_row_date": self.last_row_date.isoformat() if self.last_row_date else None,
            "violations": len(self.violations),
            "violation_detail": [
                {"row_date": v.row_date.isoformat(), "column": v.column,
                 "source_date": v.source_date.isoformat(), "reason": v.reason}
                for v in self.violations[:50]
            ],
        }


def audit_no_lookahead(dataset: AlignedDataset, shift_days: int,
                       reference_date: date) -> AuditReport:
    """Check every cell's pre-shift observation date against the reference
    date and the per-column causality bound row_date - (k - shift_days)."""
    if dataset.source_ordinals is None:
        raise ContractError("audit requires a dataset built in-process "
                            "(CSV round-trips do not carry source dates)")
    report = AuditReport(n_rows=len(dataset),
                         first_row_date=dataset.dates[0] if len(dataset) else None,
                         last_row_date=dataset.dates[-1] if len(dataset) else None)
    ref_ord = reference_date.toordinal()
    names = dataset.exog_names
    for i, d in enumerate(dataset.dates):
        row_ord = d.toordinal()
        for c, k in enumerate(dataset.column_offsets):
            src = int(dataset.source_ordinals[i, c])
            if src > ref_ord:
                report.violations.append(AuditViolation(
                    d, names[c], date.fromordinal(src),
                    f"source beyond reference date {reference_date}"))
            elif src > row_ord - (k - shift_days):
                report.violations.append(AuditViolation(
                    d, names[c], date.fromordinal(src),
                    f"source violates causality bound row-({k}-{shift_days})"))
    return report
