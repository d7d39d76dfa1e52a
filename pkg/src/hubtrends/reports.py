"""Report builders: deterministic tables plus long-form plot data.

Every report is written as a sorted, canonically formatted table so the
same inputs always produce byte-identical artifacts.  Warnings go to a
sidecar ``.log`` next to the artifact, never into it.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field as dataclass_field
from datetime import date
from pathlib import Path

from . import benchmarks, derivatives, ram
from .config import Config
from .errors import DomainError
from .registry import Region, RegionMap, Registry, SizeBucket
from .series import iqr_filter, monthly_rollup, aggregate_group
from .store import SnapshotStore

REPORT_KINDS = (
    "region_downloads",
    "org_downloads",
    "size_distribution",
    "derivative_share",
    "token_share",
    "elo_frontier",
    "index_trend",
    "ram_reference",
    "ram_trajectory",
)


@dataclass(frozen=True)
class ReportSpec:
    kind: str
    output_path: str
    output_format: str = "csv"
    group_by: str = "region"
    date_range: tuple[date | None, date | None] = (None, None)
    model: str | None = None
    bucket: str | None = None
    reference_date: date | None = None
    reference_path: str | None = None
    derivatives_path: str | None = None
    elo_path: str | None = None
    index_path: str | None = None
    tokens_path: str | None = None
    exclude_months: tuple[date, ...] = ()
    include_other: bool = False
    filtered: bool = False

    def __post_init__(self):
        if self.kind not in REPORT_KINDS:
            raise DomainError(f"unknown report kind {self.kind!r}")
        if self.output_format not in ("csv", "json"):
            raise DomainError(f"output format must be csv or json, got {self.output_format!r}")


@dataclass
class ReportResult:
    kind: str
    path: Path
    columns: list[str]
    rows: list[list[str]]
    warnings: list[str] = dataclass_field(default_factory=list)


def _require(value, flag: str, kind: str):
    if value is None:
        raise DomainError(f"report {kind} requires {flag}")
    return value


def _fmt_share(x: float) -> str:
    return f"{x:.6f}"


def _fmt_downloads(x: float) -> str:
    return str(round(x))


def _clip_months(rows, start: date | None, end: date | None, label_index: int = 0):
    out = []
    for row in rows:
        label = row[label_index]
        if start is not None and label < start:
            continue
        if end is not None and label > end:
            continue
        out.append(row)
    return out


def _load_registry(config: Config) -> tuple[Registry, list[str]]:
    path = _require(config.registry_path, "--registry", "this kind")
    region_map = RegionMap.from_csv(config.alias_table) if config.alias_table else None
    registry, report = Registry.load(path, region_map)
    warnings = [f"registry {issue}" for issue in report.errors + report.warnings]
    return registry, warnings


def _monthly_by_model(store, filtered: bool):
    """Per-model monthly rollups from the store, optionally spike-filtered."""
    monthly = []
    warnings = []
    for model_id, series in store.load_all().items():
        if len(series) == 0:
            continue
        if filtered:
            result = iqr_filter(series)
            if result.too_short:
                warnings.append(f"{model_id}: too short to filter ({len(series)} points)")
            if result.flagged:
                warnings.append(
                    f"{model_id}: {len(result.flagged)} outlier day(s) corrected"
                )
            series = result.series
        monthly.append(monthly_rollup(series))
    return monthly, warnings


def _grouped_downloads(spec: ReportSpec, config: Config, store, by: str):
    registry, warnings = _load_registry(config)
    monthly, filter_warnings = _monthly_by_model(store, spec.filtered)
    warnings.extend(filter_warnings)
    if by == "region":
        group_map = {m.series_id: registry.region_of(m.series_id).value for m in monthly}
    else:
        group_map = {m.series_id: registry.organization_of(m.series_id) for m in monthly}
    grouped = aggregate_group(monthly, group_map)
    rows = []
    for group, series in sorted(grouped.items()):
        if by == "region" and not spec.include_other and group == Region.OTHER.value:
            continue
        for label, value in series.points:
            rows.append([label, group, value])
    rows = _clip_months(rows, *spec.date_range)
    rows.sort(key=lambda r: (r[0], r[1]))
    formatted = [[label.isoformat(), group, _fmt_downloads(value)] for label, group, value in rows]
    return ["month", by if by == "region" else "organization", "downloads"], formatted, warnings


def _size_distribution(spec: ReportSpec, config: Config, store):
    registry, warnings = _load_registry(config)
    totals = {bucket: 0.0 for bucket in SizeBucket}
    for model_id, series in store.load_all().items():
        record = registry.get(model_id)
        if record is None:
            warnings.append(f"{model_id}: in store but not in registry; skipped")
            continue
        if len(series) == 0:
            continue
        totals[record.size_bucket] += series.points[-1][1]
    grand = sum(totals.values())
    rows = []
    for bucket in SizeBucket:
        downloads = totals[bucket]
        share = downloads / grand if grand else 0.0
        rows.append([bucket.value, _fmt_downloads(downloads), _fmt_share(share)])
    return ["bucket", "downloads", "share"], rows, warnings


def _derivative_share(spec: ReportSpec, config: Config):
    registry, warnings = _load_registry(config)
    path = _require(spec.derivatives_path, "--file", spec.kind)
    records, report = derivatives.load_derivatives_csv(path)
    warnings.extend(f"derivatives {issue}" for issue in report.errors)
    accepted, filter_report = derivatives.filter_derivatives(records, registry)
    warnings.append(
        "derivatives accepted {} of {} records (untracked_base={}, low_downloads={}, "
        "excluded_format={})".format(
            filter_report.accepted_records,
            filter_report.input_count,
            filter_report.rejections[derivatives.REJECT_UNTRACKED],
            filter_report.rejections[derivatives.REJECT_LOW_DOWNLOADS],
            filter_report.rejections[derivatives.REJECT_EXCLUDED_FORMAT],
        )
    )
    table = derivatives.monthly_share_table(
        accepted, spec.group_by, registry, spec.exclude_months
    )
    table = _clip_months(table, *spec.date_range)
    rows = [
        [month.isoformat(), group, _fmt_share(share), str(count)]
        for month, group, share, count in table
    ]
    return ["month", "group", "share", "count"], rows, warnings


def _token_share(spec: ReportSpec, config: Config):
    registry, warnings = _load_registry(config)
    path = _require(spec.tokens_path, "--file", spec.kind)
    records, report = benchmarks.load_tokens_csv(path, registry)
    warnings.extend(f"tokens {issue}" for issue in report.errors)
    months = sorted({r.month_label for r in records})
    rows = []
    caveat_logged = False
    for month in months:
        result = benchmarks.token_share(records, spec.group_by, month)
        if not caveat_logged and result.shares:
            warnings.append(f"tokens caveat: {result.caveat}")
            caveat_logged = True
        for group, share in result.shares.items():
            rows.append([month, group, str(result.tokens[group]), _fmt_share(share)])
    rows = _clip_months(rows, *spec.date_range)
    formatted = [[month.isoformat(), group, tokens, share] for month, group, tokens, share in rows]
    return ["month", "group", "tokens", "share"], formatted, warnings


def _elo_frontier(spec: ReportSpec, config: Config):
    registry, warnings = _load_registry(config)
    path = _require(spec.elo_path, "--file", spec.kind)
    observations, report = benchmarks.load_elo_csv(path, registry)
    warnings.extend(f"elo {issue}" for issue in report.errors)
    adjusted = benchmarks.adjust_all(observations)
    rows = []
    for region in Region:
        if region is Region.OTHER and not spec.include_other:
            continue
        for when, elo in benchmarks.elo_frontier(adjusted, region):
            rows.append([region.value, when.isoformat(), f"{elo:.1f}"])
    rows.sort(key=lambda r: (r[0], r[1]))
    return ["region", "date", "elo"], rows, warnings


def _index_trend(spec: ReportSpec, config: Config):
    registry, warnings = _load_registry(config)
    path = _require(spec.index_path, "--file", spec.kind)
    observations, report = benchmarks.load_index_csv(path, registry)
    warnings.extend(f"index {issue}" for issue in report.errors)
    rows = []
    for region in Region:
        if region is Region.OTHER and not spec.include_other:
            continue
        regional = [o for o in observations if o.region is region]
        if len(regional) < 2:
            if regional:
                warnings.append(f"index_trend {region.value}: too few observations, skipped")
            continue
        fit = benchmarks.fit_linear_trend(observations, region)
        warnings.append(
            f"index_trend {region.value}: slope_per_day={fit.slope_per_day:.6f} "
            f"intercept={fit.intercept:.4f} rms={fit.residual_rms:.4f} "
            f"epoch={fit.epoch.isoformat()} n={fit.n_points}"
        )
        top_by_date: dict[date, float] = {}
        for obs in regional:
            if obs.observed_at not in top_by_date or obs.score > top_by_date[obs.observed_at]:
                top_by_date[obs.observed_at] = obs.score
        for when in sorted(top_by_date):
            days = (when - fit.epoch).days
            rows.append([region.value, "observed", when.isoformat(), f"{top_by_date[when]:.4f}"])
            rows.append(
                [
                    region.value,
                    "fitted",
                    when.isoformat(),
                    f"{fit.intercept + fit.slope_per_day * days:.4f}",
                ]
            )
    rows.sort(key=lambda r: (r[0], r[2], r[1]))
    return ["region", "series", "date", "value"], rows, warnings


def _ram_reference(spec: ReportSpec, config: Config, store):
    registry, warnings = _load_registry(config)
    bucket = SizeBucket(_require(spec.bucket, "--bucket", spec.kind))
    reference_date = _require(spec.reference_date, "--reference-date", spec.kind)
    curve = ram.build_reference_curve(bucket, registry, store, reference_date)
    for stats in curve.milestones:
        if stats.reduced_support:
            warnings.append(
                f"ram_reference {bucket.value} t={stats.t}: reduced support "
                f"({stats.support} of {ram.TOP_N} members)"
            )
    rows = [
        [
            bucket.value,
            str(s.t),
            f"{s.median:.2f}",
            f"{s.q1:.2f}",
            f"{s.q3:.2f}",
            str(s.support),
        ]
        for s in curve.milestones
    ]
    return ["bucket", "t", "median", "q1", "q3", "support"], rows, warnings, curve


def _ram_trajectory(spec: ReportSpec, config: Config, store):
    registry, warnings = _load_registry(config)
    model = _require(spec.model, "--model", spec.kind)
    if spec.reference_path:
        curve = ram.load_reference_curve(spec.reference_path)
    else:
        reference_date = _require(
            spec.reference_date, "--reference-date (or --reference)", spec.kind
        )
        members = ram._resolve_members(model, registry)
        representative = max((registry.by_id[m] for m in members), key=lambda r: r.total_params)
        curve = ram.build_reference_curve(
            representative.size_bucket, registry, store, reference_date
        )
    scores = ram.ram_trajectory(model, registry, store, curve)
    if not scores:
        warnings.append(f"ram_trajectory {model}: no milestone reachable")
    rows = [
        [
            s.model_id,
            s.bucket.value,
            str(s.t),
            _fmt_downloads(s.downloads),
            f"{s.score:.2f}",
            s.reference_date.isoformat(),
        ]
        for s in scores
    ]
    return ["model", "bucket", "t", "downloads", "score", "reference_date"], rows, warnings


def _csv_text(columns: list[str], rows: list[list[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buffer.getvalue()


def run_report(spec: ReportSpec, config: Config, store=None) -> ReportResult:
    """Build one report and write the artifact plus its sidecar log."""
    needs_store = spec.kind in (
        "region_downloads",
        "org_downloads",
        "size_distribution",
        "ram_reference",
        "ram_trajectory",
    )
    if needs_store and store is None:
        store = SnapshotStore(_require(config.store_dir, "--store", spec.kind), create=False)
    curve = None
    if spec.kind == "region_downloads":
        columns, rows, warnings = _grouped_downloads(spec, config, store, "region")
    elif spec.kind == "org_downloads":
        columns, rows, warnings = _grouped_downloads(spec, config, store, "organization")
    elif spec.kind == "size_distribution":
        columns, rows, warnings = _size_distribution(spec, config, store)
    elif spec.kind == "derivative_share":
        columns, rows, warnings = _derivative_share(spec, config)
    elif spec.kind == "token_share":
        columns, rows, warnings = _token_share(spec, config)
    elif spec.kind == "elo_frontier":
        columns, rows, warnings = _elo_frontier(spec, config)
    elif spec.kind == "index_trend":
        columns, rows, warnings = _index_trend(spec, config)
    elif spec.kind == "ram_reference":
        columns, rows, warnings, curve = _ram_reference(spec, config, store)
    else:
        columns, rows, warnings = _ram_trajectory(spec, config, store)
    path = Path(spec.output_path)
    if spec.output_format == "json":
        if spec.kind == "ram_reference" and curve is not None:
            payload = ram.curve_to_dict(curve)
        else:
            payload = [dict(zip(columns, row)) for row in rows]
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    else:
        path.write_text(_csv_text(columns, rows), encoding="utf-8")
    log_path = path.with_name(path.name + ".log")
    log_path.write_text(
        "".join(f"{line}\n" for line in warnings), encoding="utf-8"
    )
    return ReportResult(kind=spec.kind, path=path, columns=columns, rows=rows, warnings=warnings)


# Column mapping for long-form plot data: (series columns, x column, y column).
_PLOT_MAP: dict[str, tuple[tuple[str, ...], str, str]] = {
    "region_downloads": (("region",), "month", "downloads"),
    "org_downloads": (("organization",), "month", "downloads"),
    "size_distribution": ((), "bucket", "share"),
    "derivative_share": (("group",), "month", "share"),
    "token_share": (("group",), "month", "share"),
    "elo_frontier": (("region",), "date", "elo"),
    "index_trend": (("region", "series"), "date", "value"),
    "ram_trajectory": (("model",), "t", "score"),
}


def plot_rows(kind: str, columns: list[str], rows: list[list[str]]) -> list[list[str]]:
    """Reshape a report table into long-form ``series,x,y`` rows."""
    if kind == "ram_reference":
        # One plot series per statistic, milestone day on x.
        t_i = columns.index("t")
        out = []
        for stat in ("median", "q1", "q3"):
            s_i = columns.index(stat)
            for row in rows:
                out.append([stat, row[t_i], row[s_i]])
        return out
    if kind not in _PLOT_MAP:
        raise DomainError(f"no plot-data mapping for report kind {kind!r}")
    series_cols, x_col, y_col = _PLOT_MAP[kind]
    series_idx = [columns.index(c) for c in series_cols]
    x_i, y_i = columns.index(x_col), columns.index(y_col)
    out = []
    for row in rows:
        series = "/".join(row[i] for i in series_idx) if series_idx else y_col
        out.append([series, row[x_i], row[y_i]])
    return out


def emit_plot_data(result: ReportResult, path: str | Path) -> Path:
    """Write a report's long-form plot file (``series,x,y``)."""
    rows = plot_rows(result.kind, result.columns, result.rows)
    out = Path(path)
    out.write_text(_csv_text(["series", "x", "y"], rows), encoding="utf-8")
    return out
