"""Snapshot acquisition: hub API fetches and historical monthly imports."""

from __future__ import annotations

import csv
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path

import requests

from .errors import DomainError, FormatError
from .registry import Registry, ValidationReport, is_model_id
from .series import MonthlySeries
from .store import SnapshotPoint

logger = logging.getLogger(__name__)

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class FetchPolicy:
    """Knobs for polite bulk fetching."""

    max_parallel: int = 8
    retry_limit: int = 3
    min_request_interval: float = 0.05  # seconds between request starts
    backoff_base: float = 0.2  # doubles per retry
    timeout: float = 10.0

    def __post_init__(self):
        if self.max_parallel < 1:
            raise DomainError("max_parallel must be at least 1")
        if self.retry_limit < 0:
            raise DomainError("retry_limit must be non-negative")
        if self.min_request_interval < 0:
            raise DomainError("min_request_interval must be non-negative")


@dataclass(frozen=True)
class FetchFailure:
    model_id: str
    cause: str
    status: int | None = None


@dataclass
class FetchReport:
    run_date: date
    failures: list[FetchFailure] = field(default_factory=list)
    field_used: dict[str, str] = field(default_factory=dict)
    request_times: list[float] = field(default_factory=list)


class _RateLimiter:
    """Spaces request starts so consecutive starts are >= interval apart.

    The timestamp handed back is captured while the lock is held, so the
    recorded sequence is non-compressing by construction.
    """

    def __init__(self, interval: float):
        self._interval = interval
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def wait(self) -> float:
        with self._lock:
            now = time.monotonic()
            if now < self._next_allowed:
                time.sleep(self._next_allowed - now)
                now = time.monotonic()
            self._next_allowed = now + self._interval
            return now


def _parse_downloads(body: dict) -> tuple[int, str]:
    # The all-time counter is preferred over the rolling 30-day field.
    for key in ("downloadsAllTime", "downloads"):
        if key in body:
            value = body[key]
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise ValueError(f"field {key!r} is not a non-negative integer: {value!r}")
            return value, key
    raise ValueError("response has neither downloadsAllTime nor downloads")


def fetch_snapshots(
    model_ids: list[str],
    base_url: str,
    policy: FetchPolicy = FetchPolicy(),
    session: requests.Session | None = None,
    run_date: date | None = None,
) -> tuple[list[SnapshotPoint], FetchReport]:
    """Fetch current download counters for *model_ids*.

    Missing models (404) are reported, not fatal.  Retryable statuses
    (429 and 5xx) and transport errors are retried up to
    ``policy.retry_limit`` times with exponential backoff.  Results are
    merged deterministically by model id regardless of arrival order.
    """
    run_date = run_date or datetime.now(timezone.utc).date()
    report = FetchReport(run_date=run_date)
    own_session = session is None
    session = session or requests.Session()
    limiter = _RateLimiter(policy.min_request_interval)
    times_lock = threading.Lock()
    base = base_url.rstrip("/")

    def fetch_one(model_id: str) -> SnapshotPoint | FetchFailure:
        url = f"{base}/api/models/{model_id}"
        last_cause, last_status = "unknown", None
        for attempt in range(policy.retry_limit + 1):
            if attempt:
                time.sleep(policy.backoff_base * (2 ** (attempt - 1)))
            started = limiter.wait()
            with times_lock:
                report.request_times.append(started)
            try:
                response = session.get(url, timeout=policy.timeout)
            except requests.RequestException as err:
                last_cause, last_status = f"transport error: {err}", None
                logger.warning("fetch %s attempt %d failed: %s", model_id, attempt + 1, err)
                continue
            if response.status_code == 200:
                try:
                    downloads, key = _parse_downloads(response.json())
                except ValueError as err:
                    return FetchFailure(model_id, f"parse error: {err}", 200)
                with times_lock:
                    report.field_used[model_id] = key
                return SnapshotPoint(model_id, run_date, downloads)
            if response.status_code == 404:
                return FetchFailure(model_id, "missing", 404)
            if response.status_code in _RETRYABLE_STATUS:
                last_cause, last_status = f"HTTP {response.status_code}", response.status_code
                logger.warning(
                    "fetch %s attempt %d got HTTP %d", model_id, attempt + 1, response.status_code
                )
                continue
            return FetchFailure(model_id, f"HTTP {response.status_code}", response.status_code)
        return FetchFailure(
            model_id, f"{last_cause} after {policy.retry_limit} retries", last_status
        )

    unique_ids = sorted(set(model_ids))
    try:
        with ThreadPoolExecutor(max_workers=policy.max_parallel) as pool:
            outcomes = dict(zip(unique_ids, pool.map(fetch_one, unique_ids)))
    finally:
        if own_session:
            session.close()
    points: list[SnapshotPoint] = []
    for model_id in unique_ids:
        outcome = outcomes[model_id]
        if isinstance(outcome, FetchFailure):
            report.failures.append(outcome)
        else:
            points.append(outcome)
    return points, report


@dataclass(frozen=True)
class HistoricalMonthly:
    """One historical data point: cumulative downloads through a month end.

    ``month_label`` follows the reporting convention: the first-of-month
    label holds the cumulative count through the end of the previous
    month.
    """

    model_id: str
    month_label: date
    cumulative_downloads: int

    def __post_init__(self):
        if not is_model_id(self.model_id):
            raise DomainError(f"bad model_id: {self.model_id!r}")
        if self.month_label.day != 1:
            raise DomainError(f"{self.model_id}: month must be a first-of-month date")
        if self.cumulative_downloads < 0:
            raise DomainError(f"{self.model_id}: negative cumulative downloads")


def import_history(
    path: str | Path, registry: Registry | None = None
) -> tuple[list[HistoricalMonthly], ValidationReport]:
    """Read a historical monthly CSV (``model_id,month,cumulative_downloads``).

    Months must be strictly increasing per model.  Rows naming models
    absent from *registry* are kept but produce warnings, so coverage
    mismatches stay visible.
    """
    report = ValidationReport()
    records: list[HistoricalMonthly] = []
    last_month: dict[str, date] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"model_id", "month", "cumulative_downloads"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise FormatError(f"{path}: expected columns {sorted(required)}")
        for row in reader:
            line = reader.line_num
            model_id = (row.get("model_id") or "").strip()
            try:
                month = date.fromisoformat((row.get("month") or "").strip())
                downloads = int((row.get("cumulative_downloads") or "").strip())
                record = HistoricalMonthly(model_id, month, downloads)
            except (ValueError, DomainError) as err:
                report.error(line, str(err))
                continue
            prev = last_month.get(model_id)
            if prev is not None and month <= prev:
                report.error(
                    line, f"{model_id}: months must be strictly increasing ({prev} then {month})"
                )
                continue
            last_month[model_id] = month
            if registry is not None and model_id not in registry:
                report.warn(line, f"{model_id}: not in registry")
            records.append(record)
    return records, report


def history_points(records: list[HistoricalMonthly]) -> list[SnapshotPoint]:
    """Convert monthly history to store snapshot points.

    A first-of-month label holds the cumulative count through the end of
    the previous month, so the snapshot is dated label minus one day.
    """
    return [
        SnapshotPoint(
            model_id=r.model_id,
            observed_at=r.month_label - timedelta(days=1),
            cumulative_downloads=r.cumulative_downloads,
        )
        for r in records
    ]


def history_to_monthly(records: list[HistoricalMonthly]) -> dict[str, MonthlySeries]:
    """Group imported history into per-model monthly series."""
    grouped: dict[str, list[tuple[date, float]]] = {}
    for record in records:
        grouped.setdefault(record.model_id, []).append(
            (record.month_label, record.cumulative_downloads)
        )
    return {
        model_id: MonthlySeries(model_id, tuple(sorted(points)))
        for model_id, points in grouped.items()
    }


def load_series(store, model_id: str):
    """Read one model's snapshot series from a store."""
    return store.load_series(model_id)
