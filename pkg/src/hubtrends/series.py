"""Cumulative download series: deltas, outlier filtering, splicing, rollups.

A :class:`DownloadSeries` is the raw material (dated cumulative counter
snapshots).  A :class:`MonthlySeries` is the reporting shape: the value
filed under a first-of-month label is the cumulative count at the last
snapshot strictly before that label, so "2025-08-01" holds downloads
through July 31.
"""

from __future__ import annotations

import csv
from bisect import bisect_left
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

from .errors import DomainError, InsufficientDataError, MonthGapError, SpliceError
from .stats import median, quartiles

MILESTONES = (7, 14, 30, 60, 90, 180, 365)

# Replacing outliers with the median can, on pathological shapes, expose
# new outliers under the recomputed quartiles; iterating to a fixed point
# keeps the filter idempotent.  Real download series settle in 1-2 passes.
_MAX_FILTER_PASSES = 64


@dataclass(frozen=True)
class DownloadSeries:
    """Cumulative download snapshots for one model, strictly date-ordered."""

    model_id: str
    points: tuple[tuple[date, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((d, v) for d, v in self.points))
        prev = None
        for d, v in self.points:
            if prev is not None and d <= prev:
                raise DomainError(f"{self.model_id}: snapshot dates must be strictly increasing")
            if v < 0:
                raise DomainError(f"{self.model_id}: cumulative downloads must be non-negative")
            prev = d

    def __len__(self) -> int:
        return len(self.points)

    def dates(self) -> list[date]:
        return [d for d, _ in self.points]

    def values(self) -> list[float]:
        return [v for _, v in self.points]

    def value_asof(self, when: date) -> float | None:
        """Value at the last snapshot on or before *when*, if any."""
        idx = bisect_left([d for d, _ in self.points], when + timedelta(days=1))
        if idx == 0:
            return None
        return self.points[idx - 1][1]

    def clipped(self, last: date) -> "DownloadSeries":
        """Sub-series of snapshots observed on or before *last*."""
        return DownloadSeries(self.model_id, tuple(p for p in self.points if p[0] <= last))


@dataclass(frozen=True)
class MonthlySeries:
    """Month-labelled cumulative series (labels are firsts of months)."""

    series_id: str
    points: tuple[tuple[date, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple((d, v) for d, v in self.points))
        prev: tuple[date, float] | None = None
        for d, v in self.points:
            if d.day != 1:
                raise DomainError(f"{self.series_id}: month labels must be firsts of months, got {d}")
            if v < 0:
                raise DomainError(f"{self.series_id}: cumulative value must be non-negative")
            if prev is not None:
                if d <= prev[0]:
                    raise DomainError(f"{self.series_id}: month labels must be strictly increasing")
                if v < prev[1]:
                    raise DomainError(f"{self.series_id}: cumulative values must be non-decreasing")
            prev = (d, v)

    def __len__(self) -> int:
        return len(self.points)

    def labels(self) -> list[date]:
        return [d for d, _ in self.points]

    def get(self, label: date) -> float:
        for d, v in self.points:
            if d == label:
                return v
        raise DomainError(f"{self.series_id}: no value at month label {label}")

    def has(self, label: date) -> bool:
        return any(d == label for d, _ in self.points)


@dataclass(frozen=True)
class FilterConfig:
    iqr_multiplier: float = 2.5

    def __post_init__(self):
        if self.iqr_multiplier <= 0:
            raise DomainError("iqr_multiplier must be positive")


@dataclass(frozen=True)
class FilterResult:
    series: DownloadSeries
    flagged: tuple[date, ...]
    too_short: bool = False


@dataclass(frozen=True)
class SpliceResult:
    series: MonthlySeries
    clamped: tuple[date, ...]


def month_label(d: date) -> date:
    return date(d.year, d.month, 1)


def add_months(label: date, n: int) -> date:
    total = label.year * 12 + (label.month - 1) + n
    return date(total // 12, total % 12 + 1, 1)


def daily_deltas(series: DownloadSeries) -> list[tuple[date, float]]:
    """Per-day increments between snapshots.

    A gap of g days between consecutive snapshots spreads the increment
    uniformly: each of the g days inside the gap gets 1/g of it.
    Negative increments (counter resets) are preserved as-is.
    """
    if len(series) < 2:
        raise InsufficientDataError(f"{series.model_id}: need at least two snapshots for deltas")
    out: list[tuple[date, float]] = []
    pts = series.points
    for (d0, v0), (d1, v1) in zip(pts, pts[1:]):
        gap = (d1 - d0).days
        per_day = (v1 - v0) / gap
        for k in range(1, gap + 1):
            out.append((d0 + timedelta(days=k), per_day))
    return out


def _outlier_days(
    deltas: list[tuple[date, float]], multiplier: float, tolerance: float = 0.0
) -> set[date]:
    values = [v for _, v in deltas]
    q1, _, q3 = quartiles(values)
    iqr = q3 - q1
    lo = q1 - multiplier * iqr - tolerance
    hi = q3 + multiplier * iqr + tolerance
    return {d for d, v in deltas if not lo <= v <= hi}


def _rebuild(series: DownloadSeries, flagged: set[date], replacement: float) -> DownloadSeries:
    """Re-accumulate from the first point with flagged days set to *replacement*.

    Intervals containing no flagged day keep their exact original
    increment so untouched stretches stay bit-identical.  Accumulated
    values are floored at zero to stay inside the series domain.
    """
    pts = series.points
    rebuilt = [pts[0]]
    cum = pts[0][1]
    for (d0, v0), (d1, v1) in zip(pts, pts[1:]):
        gap = (d1 - d0).days
        days = [d0 + timedelta(days=k) for k in range(1, gap + 1)]
        if any(d in flagged for d in days):
            per_day = (v1 - v0) / gap
            cum += sum(replacement if d in flagged else per_day for d in days)
        else:
            cum += v1 - v0
        cum = max(cum, 0.0)
        rebuilt.append((d1, cum))
    return DownloadSeries(series.model_id, tuple(rebuilt))


def iqr_filter(series: DownloadSeries, config: FilterConfig = FilterConfig()) -> FilterResult:
    """Remove spike artifacts from a cumulative series.

    Daily deltas falling outside ``[q1 - k*iqr, q3 + k*iqr]`` are
    replaced by the median daily delta of the distribution they were
    drawn from, and the cumulative series is re-accumulated from the
    first point.  Series with fewer than four points are returned
    unchanged with the ``too_short`` flag; series with no outliers come
    back bit-identical.  The pass is repeated on its own output until no
    new outliers appear, which makes the filter idempotent.
    """
    if len(series) < 4:
        return FilterResult(series, (), too_short=True)
    flagged: set[date] = set()
    current = series
    for _ in range(_MAX_FILTER_PASSES):
        deltas = daily_deltas(current)
        # Re-accumulation reproduces deltas only to float precision of the
        # cumulative scale; without a noise floor on the band edges, a
        # degenerate distribution (iqr 0) flags that noise forever and the
        # loop can never reach its fixed point.
        noise_floor = 1e-9 * max(1.0, max(abs(v) for v in current.values()))
        outliers = _outlier_days(deltas, config.iqr_multiplier, noise_floor)
        if not outliers:
            break
        replacement = median([v for _, v in deltas])
        current = _rebuild(current, outliers, replacement)
        flagged |= outliers
    if not flagged:
        return FilterResult(series, ())
    return FilterResult(current, tuple(sorted(flagged)))


def _rollup_points(series: DownloadSeries) -> list[tuple[date, float]]:
    """Raw month-end values without the MonthlySeries monotonicity check.

    Splicing needs these for unfiltered scraper data, whose counters can
    legitimately dip; the dips are clamped later, at delta time.
    """
    pts = series.points
    first = add_months(month_label(pts[0][0]), 1)
    last = add_months(month_label(pts[-1][0]), 1)
    out: list[tuple[date, float]] = []
    idx = 0
    value = pts[0][1]
    label = first
    while label <= last:
        while idx < len(pts) and pts[idx][0] < label:
            value = pts[idx][1]
            idx += 1
        out.append((label, value))
        label = add_months(label, 1)
    return out


def monthly_rollup(series: DownloadSeries) -> MonthlySeries:
    """Collapse snapshots to month labels.

    The value at label L is the cumulative count at the last snapshot
    strictly before L, carried forward across months without snapshots.
    """
    if len(series) == 0:
        raise InsufficientDataError(f"{series.model_id}: cannot roll up an empty series")
    return MonthlySeries(series.model_id, tuple(_rollup_points(series)))


def splice(
    filtered_history: MonthlySeries, scraper: DownloadSeries, splice_date: date
) -> SpliceResult:
    """Extend a filtered monthly baseline with raw scraper monthly deltas.

    The output equals the baseline through *splice_date* exactly.  Each
    later month adds the scraper's raw monthly increment; negative
    increments are clamped to zero and the month flagged.  A calendar
    month with no scraper snapshot at all raises :class:`MonthGapError`.
    """
    if splice_date.day != 1:
        raise SpliceError(f"splice date must be a first-of-month label, got {splice_date}")
    if not filtered_history.has(splice_date):
        raise SpliceError(f"baseline has no value at splice label {splice_date}")
    base = [(d, v) for d, v in filtered_history.points if d <= splice_date]
    if len(scraper) == 0:
        return SpliceResult(MonthlySeries(filtered_history.series_id, tuple(base)), ())
    roll = dict(_rollup_points(scraper))
    last_label = max(roll)
    if last_label <= splice_date:
        return SpliceResult(MonthlySeries(filtered_history.series_id, tuple(base)), ())
    if splice_date not in roll:
        raise SpliceError(
            f"scraper series does not cover the splice label {splice_date}; "
            f"first scraper label is {min(roll)}"
        )
    snapshot_dates = scraper.dates()
    out = list(base)
    clamped: list[date] = []
    value = base[-1][1]
    label = add_months(splice_date, 1)
    while label <= last_label:
        prev_label = add_months(label, -1)
        lo = bisect_left(snapshot_dates, prev_label)
        if lo >= len(snapshot_dates) or snapshot_dates[lo] >= label:
            raise MonthGapError(prev_label)
        delta = roll[label] - roll[prev_label]
        if delta < 0:
            delta = 0
            clamped.append(label)
        value += delta
        out.append((label, value))
        label = add_months(label, 1)
    return SpliceResult(MonthlySeries(filtered_history.series_id, tuple(out)), tuple(clamped))


def aggregate_group(
    series_list: list[MonthlySeries], group_map: dict[str, str]
) -> dict[str, MonthlySeries]:
    """Sum monthly series by group over the union of all month ranges.

    Members contribute 0 before their first label and carry their last
    value forward afterwards.  Ids missing from *group_map* land in the
    ``Other`` group.
    """
    if not series_list:
        return {}
    first = min(s.points[0][0] for s in series_list)
    last = max(s.points[-1][0] for s in series_list)
    labels: list[date] = []
    label = first
    while label <= last:
        labels.append(label)
        label = add_months(label, 1)
    totals: dict[str, list[float]] = {}
    for series in series_list:
        group = group_map.get(series.series_id, "Other")
        acc = totals.setdefault(group, [0.0] * len(labels))
        pts = series.points
        idx = 0
        value = 0.0
        for i, lab in enumerate(labels):
            while idx < len(pts) and pts[idx][0] <= lab:
                value = pts[idx][1]
                idx += 1
            acc[i] += value
    return {
        group: MonthlySeries(group, tuple(zip(labels, values)))
        for group, values in sorted(totals.items())
    }


def milestone_value(series: DownloadSeries, release_date: date, t: int) -> float | None:
    """Cumulative downloads at ``release_date + t`` days.

    Exact snapshot hits are honored; otherwise the value is linearly
    interpolated between the surrounding snapshots.  Returns ``None``
    when the target falls after the last snapshot, or before the first
    one (there is nothing to interpolate against).
    """
    if t not in MILESTONES:
        raise DomainError(f"unsupported milestone t={t}; expected one of {MILESTONES}")
    if len(series) == 0:
        raise InsufficientDataError(f"{series.model_id}: empty series")
    target = release_date + timedelta(days=t)
    dates = series.dates()
    if target > dates[-1]:
        return None
    idx = bisect_left(dates, target)
    d, v = series.points[idx]
    if d == target:
        return v
    if idx == 0:
        return None
    d0, v0 = series.points[idx - 1]
    frac = (target - d0).days / (d - d0).days
    return v0 + (v - v0) * frac


def growth_ratio(series: MonthlySeries, from_label: date, to_label: date) -> float:
    """Ratio of cumulative values between two month labels."""
    start = series.get(from_label)
    end = series.get(to_label)
    if start == 0:
        raise DomainError(f"{series.series_id}: growth ratio undefined from a zero base")
    return end / start


def combine_series(series_list: list[DownloadSeries], series_id: str) -> DownloadSeries:
    """Sum cumulative series over the union of snapshot dates.

    Members contribute 0 before their first snapshot and carry their
    last value forward afterwards.
    """
    if not series_list:
        raise InsufficientDataError("cannot combine zero series")
    if len(series_list) == 1:
        only = series_list[0]
        return DownloadSeries(series_id, only.points)
    all_dates = sorted({d for s in series_list for d in s.dates()})
    totals = [0.0] * len(all_dates)
    for series in series_list:
        pts = series.points
        idx = 0
        value = 0.0
        for i, d in enumerate(all_dates):
            while idx < len(pts) and pts[idx][0] <= d:
                value = pts[idx][1]
                idx += 1
            totals[i] += value
    return DownloadSeries(series_id, tuple(zip(all_dates, totals)))


def _format_value(v: float) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def write_series_csv(
    path: str | Path,
    series_id: str,
    points: tuple[tuple[date, float], ...],
    flags_by_date: dict[date, list[str]] | None = None,
) -> None:
    """Write a series as ``id,date,cumulative_downloads,flags`` rows.

    Multiple flags on one row are ``;``-joined.
    """
    flags_by_date = flags_by_date or {}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "date", "cumulative_downloads", "flags"])
        for d, v in points:
            writer.writerow([series_id, d.isoformat(), _format_value(v), ";".join(flags_by_date.get(d, []))])
