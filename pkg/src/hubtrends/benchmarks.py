"""Capability benchmarks: arena ratings, index trend fits, token shares."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path

from .errors import (
    AlreadyAdjustedError,
    DegenerateDataError,
    DomainError,
    FormatError,
    InsufficientDataError,
)
from .registry import Region, Registry, ValidationReport, classify_region

# The arena's scoring update recentered ratings; observations from
# before the cutover are shifted up so both eras are comparable.
ELO_SHIFT = 59.2
ELO_SHIFT_CUTOVER = date(2025, 5, 19)

INDEX_SCOPE_START = date(2024, 4, 1)
TOKEN_TOP_N = 10
TOKEN_CAVEAT = (
    "monthly provider feed lists only the top 10 models; "
    "groups with usage outside the top 10 are undercounted"
)


@dataclass(frozen=True)
class EloObservation:
    model_id: str
    region: Region
    observed_at: date
    elo: float
    adjusted: bool = False

    def __post_init__(self):
        if not math.isfinite(self.elo):
            raise DomainError(f"{self.model_id}: elo must be finite")


def adjust_elo(
    observation: EloObservation,
    cutover: date = ELO_SHIFT_CUTOVER,
    shift: float = ELO_SHIFT,
) -> EloObservation:
    """Recalibrate one observation onto the post-cutover scale.

    Observations strictly before *cutover* gain *shift* points; later
    ones pass through unchanged.  Either way the result is marked
    adjusted, and adjusting twice raises :class:`AlreadyAdjustedError`.
    """
    if observation.adjusted:
        raise AlreadyAdjustedError(
            f"{observation.model_id} at {observation.observed_at} is already adjusted"
        )
    bump = shift if observation.observed_at < cutover else 0.0
    return replace(observation, elo=observation.elo + bump, adjusted=True)


def adjust_all(
    observations: list[EloObservation],
    cutover: date = ELO_SHIFT_CUTOVER,
    shift: float = ELO_SHIFT,
) -> list[EloObservation]:
    return [adjust_elo(o, cutover, shift) for o in observations]


def elo_frontier(
    observations: list[EloObservation], region: Region
) -> list[tuple[date, float]]:
    """Best-so-far rating of *region* at each of its snapshot dates.

    The frontier is a running maximum, hence non-decreasing, regardless
    of the order observations arrive in.
    """
    if any(not o.adjusted for o in observations):
        raise DomainError("observations must be recalibrated with adjust_elo first")
    by_date: dict[date, float] = {}
    for obs in observations:
        if obs.region is not region:
            continue
        if obs.observed_at not in by_date or obs.elo > by_date[obs.observed_at]:
            by_date[obs.observed_at] = obs.elo
    frontier: list[tuple[date, float]] = []
    best = -math.inf
    for when in sorted(by_date):
        best = max(best, by_date[when])
        frontier.append((when, best))
    return frontier


@dataclass(frozen=True)
class IndexObservation:
    model_id: str
    region: Region
    observed_at: date
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise DomainError(f"{self.model_id}: score must be finite")
        if self.observed_at < INDEX_SCOPE_START:
            raise DomainError(
                f"{self.model_id}: observation {self.observed_at} predates the "
                f"index scope start {INDEX_SCOPE_START}"
            )


@dataclass(frozen=True)
class TrendFit:
    region: Region
    slope_per_day: float
    intercept: float
    residual_rms: float
    epoch: date
    n_points: int


def fit_linear_trend(observations: list[IndexObservation], region: Region) -> TrendFit:
    """Least-squares line through a region's per-date top index scores.

    x is days since the region's first observation (the fit epoch), so
    shifting every date by a constant leaves slope and residuals
    untouched.  Fewer than two observations is insufficient data; two or
    more on a single date is degenerate.
    """
    regional = [o for o in observations if o.region is region]
    if len(regional) < 2:
        raise InsufficientDataError(
            f"{region.value}: need at least 2 observations, got {len(regional)}"
        )
    top_by_date: dict[date, float] = {}
    for obs in regional:
        if obs.observed_at not in top_by_date or obs.score > top_by_date[obs.observed_at]:
            top_by_date[obs.observed_at] = obs.score
    if len(top_by_date) < 2:
        raise DegenerateDataError(f"{region.value}: all observations share one date")
    epoch = min(top_by_date)
    xs = [(d - epoch).days for d in sorted(top_by_date)]
    ys = [top_by_date[d] for d in sorted(top_by_date)]
    n = len(xs)
    x_mean = math.fsum(xs) / n
    y_mean = math.fsum(ys) / n
    sxx = math.fsum((x - x_mean) ** 2 for x in xs)
    sxy = math.fsum((x - x_mean) * (y - y_mean) for x, y in zip(xs, ys))
    slope = sxy / sxx
    intercept = y_mean - slope * x_mean
    rss = math.fsum((y - (intercept + slope * x)) ** 2 for x, y in zip(xs, ys))
    return TrendFit(
        region=region,
        slope_per_day=slope,
        intercept=intercept,
        residual_rms=math.sqrt(rss / n),
        epoch=epoch,
        n_points=n,
    )


@dataclass(frozen=True)
class TokenShareRecord:
    month_label: date
    model_id: str
    organization: str
    region: Region
    tokens: int

    def __post_init__(self):
        if self.month_label.day != 1:
            raise DomainError(f"{self.model_id}: month must be a first-of-month date")
        if self.tokens < 0:
            raise DomainError(f"{self.model_id}: negative token count")


@dataclass(frozen=True)
class TokenShareResult:
    month_label: date
    shares: dict[str, float]
    tokens: dict[str, int]
    caveat: str = TOKEN_CAVEAT


def token_share(
    records: list[TokenShareRecord], group_by: str, month: date
) -> TokenShareResult:
    """Share of the month's served tokens per organization or region.

    Zero total tokens yields empty shares, never a division error.  The
    result always carries the top-10 truncation caveat.
    """
    if group_by not in ("organization", "region"):
        raise DomainError(f"group_by must be 'organization' or 'region', got {group_by!r}")
    label = date(month.year, month.month, 1)
    tokens: dict[str, int] = {}
    for record in records:
        if record.month_label != label:
            continue
        key = record.organization if group_by == "organization" else record.region.value
        tokens[key] = tokens.get(key, 0) + record.tokens
    total = sum(tokens.values())
    if total == 0:
        return TokenShareResult(label, {}, {})
    shares = {key: value / total for key, value in sorted(tokens.items())}
    return TokenShareResult(label, shares, dict(sorted(tokens.items())))


# -- input files ---------------------------------------------------------


def _read_csv(path: str | Path, required: set[str]):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or not required <= set(reader.fieldnames):
        fh.close()
        raise FormatError(f"{path}: expected columns {sorted(required)}")
    return fh, reader


def load_elo_csv(
    path: str | Path, registry: Registry
) -> tuple[list[EloObservation], ValidationReport]:
    """Read ``date,model_id,elo`` rows; regions come from the registry."""
    report = ValidationReport()
    observations: list[EloObservation] = []
    fh, reader = _read_csv(path, {"date", "model_id", "elo"})
    with fh:
        for row in reader:
            line = reader.line_num
            try:
                model_id = (row.get("model_id") or "").strip()
                observations.append(
                    EloObservation(
                        model_id=model_id,
                        region=registry.region_of(model_id),
                        observed_at=date.fromisoformat((row.get("date") or "").strip()),
                        elo=float((row.get("elo") or "").strip()),
                    )
                )
            except (ValueError, DomainError) as err:
                report.error(line, str(err))
    return observations, report


def load_index_csv(
    path: str | Path, registry: Registry
) -> tuple[list[IndexObservation], ValidationReport]:
    """Read ``date,model_id,score`` rows; out-of-scope dates become row errors."""
    report = ValidationReport()
    observations: list[IndexObservation] = []
    fh, reader = _read_csv(path, {"date", "model_id", "score"})
    with fh:
        for row in reader:
            line = reader.line_num
            try:
                model_id = (row.get("model_id") or "").strip()
                observations.append(
                    IndexObservation(
                        model_id=model_id,
                        region=registry.region_of(model_id),
                        observed_at=date.fromisoformat((row.get("date") or "").strip()),
                        score=float((row.get("score") or "").strip()),
                    )
                )
            except (ValueError, DomainError) as err:
                report.error(line, str(err))
    return observations, report


def load_tokens_csv(
    path: str | Path, registry: Registry
) -> tuple[list[TokenShareRecord], ValidationReport]:
    """Read ``month,model_id,tokens`` rows.

    Organization and region resolve through the registry; models the
    registry does not know fall back to the id's namespace and its
    region classification.  More than ten rows in one month violates the
    feed contract and raises :class:`FormatError`.
    """
    report = ValidationReport()
    records: list[TokenShareRecord] = []
    per_month: dict[date, int] = {}
    fh, reader = _read_csv(path, {"month", "model_id", "tokens"})
    with fh:
        for row in reader:
            line = reader.line_num
            try:
                model_id = (row.get("model_id") or "").strip()
                month = date.fromisoformat((row.get("month") or "").strip())
                organization = registry.organization_of(model_id)
                record_in_registry = registry.get(model_id)
                region = (
                    record_in_registry.region
                    if record_in_registry
                    else classify_region(organization)
                )
                record = TokenShareRecord(
                    month_label=month,
                    model_id=model_id,
                    organization=organization,
                    region=region,
                    tokens=int((row.get("tokens") or "").strip()),
                )
            except (ValueError, DomainError) as err:
                report.error(line, str(err))
                continue
            per_month[record.month_label] = per_month.get(record.month_label, 0) + 1
            if per_month[record.month_label] > TOKEN_TOP_N:
                raise FormatError(
                    f"{path}: more than {TOKEN_TOP_N} rows for month "
                    f"{record.month_label:%Y-%m}"
                )
            records.append(record)
    return records, report
