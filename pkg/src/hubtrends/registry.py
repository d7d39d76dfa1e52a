"""Tracked-model registry: parsing, size buckets, regions, variant groups.

The registry is a CSV of models under observation.  Everything
downstream (bucket medians, regional aggregates, derivative filters)
resolves model metadata through it.
"""

from __future__ import annotations

import csv
import enum
import functools
from dataclasses import dataclass, field
from datetime import date
from decimal import Decimal, InvalidOperation
from importlib import resources
from pathlib import Path

from .errors import DomainError, DuplicateModelError, FormatError

EARLIEST_RELEASE = date(2022, 11, 30)

REGISTRY_COLUMNS = [
    "model_id",
    "organization",
    "region_hint",
    "total_params",
    "active_params",
    "release_date",
    "variant_group",
]
_REQUIRED_COLUMNS = {"model_id", "organization", "total_params", "release_date"}


class Region(enum.Enum):
    USA = "USA"
    CHINA = "China"
    EUROPE = "Europe"
    OTHER = "Other"


class SizeBucket(enum.Enum):
    SUB_1B = "Sub1B"
    B1_TO_5 = "B1to5"
    B7_TO_9 = "B7to9"
    B10_TO_50 = "B10to50"
    B50_TO_100 = "B50to100"
    B100_TO_250 = "B100to250"
    B250_PLUS = "B250plus"


# Half-open upper bounds in parameters.  The 6.5B and 9.5B cuts keep
# marketing-rounded "7B"/"8B"/"9B" models (true counts 6.7-9.2B) inside
# B7to9 while 6B-class models stay in B1to5.
_BUCKET_UPPER_BOUNDS: list[tuple[int, SizeBucket]] = [
    (1_000_000_000, SizeBucket.SUB_1B),
    (6_500_000_000, SizeBucket.B1_TO_5),
    (9_500_000_000, SizeBucket.B7_TO_9),
    (50_000_000_000, SizeBucket.B10_TO_50),
    (100_000_000_000, SizeBucket.B50_TO_100),
    (250_000_000_000, SizeBucket.B100_TO_250),
]


def classify_size_bucket(total_params: int) -> SizeBucket:
    """Map a total parameter count to its size bucket.

    Mixture-of-experts models are bucketed by total, not active,
    parameters; callers must pass the total count.
    """
    if total_params <= 0:
        raise DomainError(f"parameter count must be positive, got {total_params}")
    for upper, bucket in _BUCKET_UPPER_BOUNDS:
        if total_params < upper:
            return bucket
    return SizeBucket.B250_PLUS


def is_model_id(text: str) -> bool:
    """True when *text* looks like a hub id, i.e. ``org/name``."""
    parts = text.split("/")
    return len(parts) == 2 and all(p and not p.isspace() for p in parts)


_SI_MULTIPLIERS = {"K": 10**3, "M": 10**6, "B": 10**9, "T": 10**12}


def parse_param_count(text: str) -> int:
    """Parse a parameter count: plain integer or decimal-SI form like ``4B``.

    Scientific notation is accepted when it denotes an exact integer.
    """
    raw = text.strip()
    if not raw:
        raise DomainError("empty parameter count")
    suffix = raw[-1].upper()
    mult = 1
    if suffix in _SI_MULTIPLIERS:
        mult = _SI_MULTIPLIERS[suffix]
        raw = raw[:-1]
    try:
        value = Decimal(raw) * mult
    except InvalidOperation:
        raise DomainError(f"unparsable parameter count: {text!r}") from None
    if value != value.to_integral_value():
        raise DomainError(f"parameter count is not an integer: {text!r}")
    count = int(value)
    if count <= 0:
        raise DomainError(f"parameter count must be positive, got {text!r}")
    return count


class RegionMap:
    """Case-insensitive organization-to-region lookup with aliases."""

    def __init__(self, mapping: dict[str, Region]):
        self._mapping = {k.strip().casefold(): v for k, v in mapping.items()}

    @classmethod
    def from_csv(cls, path: str | Path) -> "RegionMap":
        mapping: dict[str, Region] = {}
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "organization" not in reader.fieldnames:
                raise FormatError(f"{path}: expected columns organization,region,aliases")
            for row in reader:
                region = Region(row["region"].strip())
                names = [row["organization"]] + (row.get("aliases") or "").split(";")
                for name in names:
                    if name.strip():
                        mapping[name] = region
        return cls(mapping)

    def lookup(self, organization: str) -> Region:
        return self._mapping.get(organization.strip().casefold(), Region.OTHER)


@functools.lru_cache(maxsize=1)
def default_region_map() -> RegionMap:
    with resources.as_file(resources.files("hubtrends.data") / "org_regions.csv") as p:
        return RegionMap.from_csv(p)


def classify_region(organization: str, region_map: RegionMap | None = None) -> Region:
    """Classify an organization by headquarters region; unknown names map to Other."""
    if not organization or not organization.strip():
        raise DomainError("organization must be non-empty")
    return (region_map or default_region_map()).lookup(organization)


@dataclass(frozen=True)
class ModelRecord:
    model_id: str
    organization: str
    region: Region
    total_params: int
    release_date: date
    active_params: int | None = None
    variant_group: str = ""

    def __post_init__(self):
        if not is_model_id(self.model_id):
            raise DomainError(f"model_id must look like org/name: {self.model_id!r}")
        if not self.organization.strip():
            raise DomainError(f"{self.model_id}: organization must be non-empty")
        if self.total_params <= 0:
            raise DomainError(f"{self.model_id}: total_params must be positive")
        if self.active_params is not None and not 0 < self.active_params <= self.total_params:
            raise DomainError(f"{self.model_id}: active_params must be in (0, total_params]")
        if self.release_date < EARLIEST_RELEASE:
            raise DomainError(
                f"{self.model_id}: release_date {self.release_date} predates {EARLIEST_RELEASE}"
            )
        if not self.variant_group:
            object.__setattr__(self, "variant_group", self.model_id)

    @property
    def size_bucket(self) -> SizeBucket:
        return classify_size_bucket(self.total_params)


@dataclass(frozen=True)
class RowIssue:
    line: int
    message: str

    def __str__(self):
        return f"line {self.line}: {self.message}"


@dataclass
class ValidationReport:
    errors: list[RowIssue] = field(default_factory=list)
    warnings: list[RowIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, line: int, message: str) -> None:
        self.errors.append(RowIssue(line, message))

    def warn(self, line: int, message: str) -> None:
        self.warnings.append(RowIssue(line, message))


def _parse_hint(text: str) -> Region | None:
    hint = text.strip().casefold()
    if not hint:
        return None
    aliases = {
        "usa": Region.USA,
        "us": Region.USA,
        "united states": Region.USA,
        "china": Region.CHINA,
        "europe": Region.EUROPE,
        "eu": Region.EUROPE,
        "other": Region.OTHER,
    }
    return aliases.get(hint)


def load_registry(
    path: str | Path, region_map: RegionMap | None = None
) -> tuple[list[ModelRecord], ValidationReport]:
    """Load the registry CSV.

    Rows that fail validation are collected into the returned report and
    skipped; they are never silently dropped.  A malformed header raises
    :class:`FormatError` because nothing can be read at all.
    """
    report = ValidationReport()
    records: list[ModelRecord] = []
    seen: dict[str, int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise FormatError(f"{path}: empty registry file")
        missing = _REQUIRED_COLUMNS - set(reader.fieldnames)
        if missing:
            raise FormatError(f"{path}: missing registry columns {sorted(missing)}")
        for row in reader:
            line = reader.line_num
            try:
                record = _parse_registry_row(row, region_map)
            except DomainError as err:
                report.error(line, str(err))
                continue
            if record.model_id in seen:
                report.error(
                    line,
                    f"duplicate model_id {record.model_id} (first seen on line {seen[record.model_id]})",
                )
                continue
            seen[record.model_id] = line
            records.append(record)
    return records, report


def _parse_registry_row(row: dict[str, str], region_map: RegionMap | None) -> ModelRecord:
    model_id = (row.get("model_id") or "").strip()
    organization = (row.get("organization") or "").strip()
    if not organization:
        raise DomainError(f"{model_id or '<missing id>'}: organization must be non-empty")
    region = classify_region(organization, region_map)
    if region is Region.OTHER:
        # The hint column only breaks ties the alias table cannot resolve.
        hinted = _parse_hint(row.get("region_hint") or "")
        if hinted is not None:
            region = hinted
    total = parse_param_count(row.get("total_params") or "")
    active_raw = (row.get("active_params") or "").strip()
    active = parse_param_count(active_raw) if active_raw else None
    try:
        release = date.fromisoformat((row.get("release_date") or "").strip())
    except ValueError:
        raise DomainError(f"{model_id}: unparsable release_date {row.get('release_date')!r}") from None
    return ModelRecord(
        model_id=model_id,
        organization=organization,
        region=region,
        total_params=total,
        active_params=active,
        release_date=release,
        variant_group=(row.get("variant_group") or "").strip(),
    )


def resolve_variant_group(records: list[ModelRecord]) -> dict[str, list[str]]:
    """Group model ids by variant key; models without a key stand alone.

    Raises :class:`DuplicateModelError` when two records claim the same id.
    """
    seen: set[str] = set()
    groups: dict[str, list[str]] = {}
    for record in records:
        if record.model_id in seen:
            raise DuplicateModelError(f"duplicate model_id {record.model_id}")
        seen.add(record.model_id)
        groups.setdefault(record.variant_group, []).append(record.model_id)
    return {key: sorted(ids) for key, ids in groups.items()}


class Registry:
    """In-memory registry with id, group, and region lookups."""

    def __init__(self, records: list[ModelRecord]):
        self.records = list(records)
        self.by_id = {r.model_id: r for r in self.records}
        self.variant_groups = resolve_variant_group(self.records)

    @classmethod
    def load(
        cls, path: str | Path, region_map: RegionMap | None = None
    ) -> tuple["Registry", ValidationReport]:
        records, report = load_registry(path, region_map)
        return cls(records), report

    def __contains__(self, model_id: str) -> bool:
        return model_id in self.by_id

    def get(self, model_id: str) -> ModelRecord | None:
        return self.by_id.get(model_id)

    def ids(self) -> list[str]:
        return sorted(self.by_id)

    def region_of(self, model_id: str) -> Region:
        record = self.by_id.get(model_id)
        return record.region if record else Region.OTHER

    def organization_of(self, model_id: str) -> str:
        record = self.by_id.get(model_id)
        if record:
            return record.organization
        return model_id.split("/", 1)[0]

    def in_bucket(self, bucket: SizeBucket) -> list[ModelRecord]:
        return [r for r in self.records if r.size_bucket is bucket]

    def group_members(self, group_key: str) -> list[str]:
        return self.variant_groups.get(group_key, [])
