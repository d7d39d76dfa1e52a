"""Relative adoption scoring against size-bucket reference curves.

A model's adoption at milestone day t is expressed as a multiple of the
median cumulative downloads that the bucket's top-10 incumbents had
reached t days after their own releases.  1.0 means "kept pace with the
bucket median"; the curve is stamped with the snapshot date it was built
from because incumbent downloads keep moving.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path

from .errors import DomainError, ReferenceUnavailableError
from .registry import Registry, SizeBucket
from .series import MILESTONES, DownloadSeries, combine_series, milestone_value
from .stats import quartiles

TOP_N = 10


@dataclass(frozen=True)
class MilestoneStats:
    t: int
    median: float
    q1: float
    q3: float
    support: int

    def __post_init__(self):
        if not self.q1 <= self.median <= self.q3:
            raise DomainError(f"t={self.t}: quartiles out of order")
        if self.support < 1:
            raise DomainError(f"t={self.t}: support must be positive")

    @property
    def reduced_support(self) -> bool:
        return self.support < TOP_N


@dataclass(frozen=True)
class ReferenceCurve:
    bucket: SizeBucket
    reference_date: date
    milestones: tuple[MilestoneStats, ...]
    members: tuple[str, ...]

    def __post_init__(self):
        if len(self.members) != TOP_N:
            raise DomainError(
                f"{self.bucket.value}: reference curve needs exactly {TOP_N} members, "
                f"got {len(self.members)}"
            )
        ts = [s.t for s in self.milestones]
        if ts != sorted(set(ts)):
            raise DomainError(f"{self.bucket.value}: milestone stats must be unique and ordered")

    def stats_for(self, t: int) -> MilestoneStats | None:
        for stats in self.milestones:
            if stats.t == t:
                return stats
        return None


@dataclass(frozen=True)
class RamScore:
    model_id: str
    bucket: SizeBucket
    t: int
    downloads: float
    score: float
    reference_date: date


def select_top10(
    bucket: SizeBucket, registry: Registry, store, reference_date: date
) -> list[str]:
    """The bucket's ten most-downloaded tracked models as of *reference_date*.

    Ranking uses each model's last snapshot on or before the reference
    date; ties at the cut are broken toward the lexicographically
    smaller id.  Fewer than ten models with data is an error: the bucket
    has no usable reference.
    """
    ranked: list[tuple[float, str]] = []
    for record in registry.in_bucket(bucket):
        series = store.load_series(record.model_id)
        value = series.value_asof(reference_date) if len(series) else None
        if value is not None:
            ranked.append((-value, record.model_id))
    if len(ranked) < TOP_N:
        raise ReferenceUnavailableError(
            f"{bucket.value}: only {len(ranked)} models with data at {reference_date}, "
            f"need {TOP_N}"
        )
    ranked.sort()
    return [model_id for _, model_id in ranked[:TOP_N]]


def reference_stats(values: list[float], t: int) -> MilestoneStats | None:
    """Median and quartiles of member milestone values under the pinned convention."""
    if not values:
        return None
    q1, med, q3 = quartiles(values)
    return MilestoneStats(t=t, median=med, q1=q1, q3=q3, support=len(values))


def build_reference_curve(
    bucket: SizeBucket, registry: Registry, store, reference_date: date
) -> ReferenceCurve:
    """Build the bucket's milestone reference curve at *reference_date*.

    Member series are clipped to snapshots on or before the reference
    date; members whose history does not reach a milestone simply do not
    contribute there (the stats carry a support count instead).
    """
    members = select_top10(bucket, registry, store, reference_date)
    milestone_values: dict[int, list[float]] = {t: [] for t in MILESTONES}
    for model_id in members:
        record = registry.by_id[model_id]
        series = store.load_series(model_id).clipped(reference_date)
        for t in MILESTONES:
            value = milestone_value(series, record.release_date, t)
            if value is not None:
                milestone_values[t].append(value)
    stats = tuple(
        s
        for t in MILESTONES
        if (s := reference_stats(milestone_values[t], t)) is not None
    )
    if not stats:
        raise ReferenceUnavailableError(
            f"{bucket.value}: no member reaches any milestone before {reference_date}"
        )
    return ReferenceCurve(
        bucket=bucket,
        reference_date=reference_date,
        milestones=stats,
        members=tuple(members),
    )


def ram_score(downloads: float, median: float) -> float:
    """Downloads expressed as a multiple of the reference median."""
    if median <= 0:
        raise DomainError(f"reference median must be positive, got {median}")
    return downloads / median


def _resolve_members(model_or_group: str, registry: Registry) -> list[str]:
    members = registry.group_members(model_or_group)
    if members:
        return members
    if model_or_group in registry:
        return [model_or_group]
    raise DomainError(f"unknown model or variant group: {model_or_group}")


def ram_trajectory(
    model_or_group: str, registry: Registry, store, reference: ReferenceCurve
) -> list[RamScore]:
    """Milestone scores for a model or variant group against *reference*.

    Variant groups (base + FP8 and similar official re-releases) are
    summed into one series before milestones are evaluated.  Milestones
    are emitted in ascending order and stop at the first one the series
    cannot support, so the reported set is always a prefix.
    """
    member_ids = _resolve_members(model_or_group, registry)
    records = [registry.by_id[m] for m in member_ids]
    representative = max(records, key=lambda r: r.total_params)
    bucket = representative.size_bucket
    if bucket is not reference.bucket:
        raise ReferenceUnavailableError(
            f"{model_or_group} is in {bucket.value} but the reference curve covers "
            f"{reference.bucket.value}"
        )
    release = min(r.release_date for r in records)
    series = combine_series(
        [store.load_series(m) for m in member_ids], model_or_group
    ).clipped(reference.reference_date)
    scores: list[RamScore] = []
    for t in MILESTONES:
        stats = reference.stats_for(t)
        if stats is None:
            break
        if len(series) == 0:
            break
        value = milestone_value(series, release, t)
        if value is None:
            break
        scores.append(
            RamScore(
                model_id=model_or_group,
                bucket=bucket,
                t=t,
                downloads=value,
                score=ram_score(value, stats.median),
                reference_date=reference.reference_date,
            )
        )
    return scores


# -- serialization ------------------------------------------------------


def curve_to_dict(curve: ReferenceCurve) -> dict:
    return {
        "bucket": curve.bucket.value,
        "reference_date": curve.reference_date.isoformat(),
        "milestones": [
            {"t": s.t, "median": s.median, "q1": s.q1, "q3": s.q3, "support": s.support}
            for s in curve.milestones
        ],
        "members": list(curve.members),
    }


def curve_from_dict(data: dict) -> ReferenceCurve:
    try:
        return ReferenceCurve(
            bucket=SizeBucket(data["bucket"]),
            reference_date=date.fromisoformat(data["reference_date"]),
            milestones=tuple(
                MilestoneStats(
                    t=int(s["t"]),
                    median=float(s["median"]),
                    q1=float(s["q1"]),
                    q3=float(s["q3"]),
                    support=int(s.get("support", TOP_N)),
                )
                for s in data["milestones"]
            ),
            members=tuple(data["members"]),
        )
    except (KeyError, ValueError, TypeError) as err:
        raise DomainError(f"malformed reference curve: {err}") from None


def save_reference_curve(curve: ReferenceCurve, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(curve_to_dict(curve), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def load_reference_curve(path: str | Path) -> ReferenceCurve:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise DomainError(f"{path}: unreadable reference curve: {err}") from None
    return curve_from_dict(data)


def write_scores_csv(scores: list[RamScore], path: str | Path) -> None:
    """Write scores as ``model,bucket,t,downloads,score,reference_date`` rows.

    Scores carry two decimals; downloads are rounded to integers.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "bucket", "t", "downloads", "score", "reference_date"])
        for s in scores:
            writer.writerow(
                [
                    s.model_id,
                    s.bucket.value,
                    s.t,
                    round(s.downloads),
                    f"{s.score:.2f}",
                    s.reference_date.isoformat(),
                ]
            )
