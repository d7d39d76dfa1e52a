"""Derivative-model lineage: tag parsing, inclusion rules, share tables.

A derivative (fine-tune, quantization, merge) names its parent through a
``base_model:ORG/MODEL`` tag.  Only derivatives of tracked bases with
real usage count toward shares, and local-inference re-uploads (GGUF,
MLX) are excluded so format mirrors do not double-count a lineage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .errors import DomainError, FormatError
from .registry import Registry, ValidationReport, is_model_id
from .series import month_label

TAG_PREFIX = "base_model:"
DEFAULT_EXCLUDED_FORMATS = frozenset({"gguf", "mlx"})
MIN_LIFETIME_DOWNLOADS = 5  # strictly-greater-than threshold

REJECT_UNTRACKED = "untracked_base"
REJECT_LOW_DOWNLOADS = "low_downloads"
REJECT_EXCLUDED_FORMAT = "excluded_format"


@dataclass(frozen=True)
class DerivativeRecord:
    child_id: str
    base_tag: str
    lifetime_downloads: int
    format_tags: frozenset[str] = frozenset()
    created_at: date | None = None

    def __post_init__(self):
        if not is_model_id(self.child_id):
            raise DomainError(f"bad child_id: {self.child_id!r}")
        if self.lifetime_downloads < 0:
            raise DomainError(f"{self.child_id}: negative lifetime_downloads")
        object.__setattr__(self, "format_tags", frozenset(t.casefold() for t in self.format_tags))


@dataclass(frozen=True)
class AcceptedDerivative:
    child_id: str
    base_id: str
    record: DerivativeRecord


@dataclass
class FilterReport:
    input_count: int = 0
    accepted_records: int = 0
    accepted_pairs: int = 0
    rejections: dict[str, int] = field(
        default_factory=lambda: {
            REJECT_UNTRACKED: 0,
            REJECT_LOW_DOWNLOADS: 0,
            REJECT_EXCLUDED_FORMAT: 0,
        }
    )

    @property
    def rejected_records(self) -> int:
        return sum(self.rejections.values())


def parse_base_model_tag(tag: str) -> str | None:
    """Extract the parent id from a base-model tag.

    Accepts ``base_model:ORG/MODEL`` and the bare ``ORG/MODEL`` form;
    anything else returns ``None``.
    """
    text = tag.strip()
    if text.casefold().startswith(TAG_PREFIX):
        text = text[len(TAG_PREFIX):]
    if ":" in text or any(c.isspace() for c in text):
        return None
    return text if is_model_id(text) else None


def parse_base_tags(raw: str) -> list[str]:
    """Parse a ``;``-joined list of base tags into distinct parent ids."""
    seen: list[str] = []
    for part in raw.split(";"):
        parsed = parse_base_model_tag(part)
        if parsed is not None and parsed not in seen:
            seen.append(parsed)
    return seen


def _is_format_reupload(record: DerivativeRecord, excluded: frozenset[str]) -> bool:
    child = record.child_id.casefold()
    for token in excluded:
        if token in record.format_tags or token in child:
            return True
    return False


def filter_derivatives(
    records: list[DerivativeRecord],
    registry: Registry,
    excluded_formats: frozenset[str] = DEFAULT_EXCLUDED_FORMATS,
) -> tuple[list[AcceptedDerivative], FilterReport]:
    """Apply the inclusion rules and report every rejection by cause.

    Rules, in order: the parsed base must be tracked in *registry*; the
    child needs more than five lifetime downloads; format re-uploads
    are excluded.  A record naming several tracked bases is accepted
    once per distinct base, which widens share denominators accordingly.
    """
    excluded = frozenset(t.casefold() for t in excluded_formats)
    accepted: list[AcceptedDerivative] = []
    report = FilterReport(input_count=len(records))
    for record in records:
        bases = [b for b in parse_base_tags(record.base_tag) if b in registry]
        if not bases:
            report.rejections[REJECT_UNTRACKED] += 1
            continue
        if record.lifetime_downloads <= MIN_LIFETIME_DOWNLOADS:
            report.rejections[REJECT_LOW_DOWNLOADS] += 1
            continue
        if _is_format_reupload(record, excluded):
            report.rejections[REJECT_EXCLUDED_FORMAT] += 1
            continue
        report.accepted_records += 1
        for base in bases:
            accepted.append(AcceptedDerivative(record.child_id, base, record))
            report.accepted_pairs += 1
    return accepted, report


def _group_key(entry: AcceptedDerivative, group_by: str, registry: Registry) -> str:
    if group_by == "organization":
        return registry.organization_of(entry.base_id)
    if group_by == "region":
        return registry.region_of(entry.base_id).value
    raise DomainError(f"group_by must be 'organization' or 'region', got {group_by!r}")


def derivative_share(
    accepted: list[AcceptedDerivative],
    group_by: str,
    month: date,
    registry: Registry,
) -> dict[str, float]:
    """Share of the month's accepted derivatives per base organization/region.

    A derivative belongs to the calendar month of its ``created_at``
    date.  Months with no accepted derivatives yield an empty map.
    Shares sum to 1 within floating-point tolerance.
    """
    label = month_label(month)
    counts: dict[str, int] = {}
    total = 0
    for entry in accepted:
        created = entry.record.created_at
        if created is None or month_label(created) != label:
            continue
        key = _group_key(entry, group_by, registry)
        counts[key] = counts.get(key, 0) + 1
        total += 1
    if total == 0:
        return {}
    return {key: count / total for key, count in sorted(counts.items())}


def monthly_share_table(
    accepted: list[AcceptedDerivative],
    group_by: str,
    registry: Registry,
    exclude_months: tuple[date, ...] = (),
) -> list[tuple[date, str, float, int]]:
    """All-months share table as ``(month, group, share, count)`` rows."""
    excluded = {month_label(m) for m in exclude_months}
    months = sorted(
        {
            month_label(e.record.created_at)
            for e in accepted
            if e.record.created_at is not None
        }
        - excluded
    )
    rows: list[tuple[date, str, float, int]] = []
    for month in months:
        counts: dict[str, int] = {}
        for entry in accepted:
            created = entry.record.created_at
            if created is None or month_label(created) != month:
                continue
            key = _group_key(entry, group_by, registry)
            counts[key] = counts.get(key, 0) + 1
        total = sum(counts.values())
        for key, count in sorted(counts.items()):
            rows.append((month, key, count / total, count))
    return rows


def load_derivatives_csv(path: str | Path) -> tuple[list[DerivativeRecord], ValidationReport]:
    """Read ``child_id,base_tag,lifetime_downloads,format_tags,created_at`` rows."""
    report = ValidationReport()
    records: list[DerivativeRecord] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"child_id", "base_tag", "lifetime_downloads"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise FormatError(f"{path}: expected columns {sorted(required)}")
        for row in reader:
            line = reader.line_num
            try:
                created_raw = (row.get("created_at") or "").strip()
                record = DerivativeRecord(
                    child_id=(row.get("child_id") or "").strip(),
                    base_tag=(row.get("base_tag") or "").strip(),
                    lifetime_downloads=int((row.get("lifetime_downloads") or "").strip()),
                    format_tags=frozenset(
                        t.strip() for t in (row.get("format_tags") or "").split(";") if t.strip()
                    ),
                    created_at=date.fromisoformat(created_raw) if created_raw else None,
                )
            except (ValueError, DomainError) as err:
                report.error(line, str(err))
                continue
            records.append(record)
    return records, report
