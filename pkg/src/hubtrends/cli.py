"""Command-line interface.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import functools
import sys
from datetime import date

import click

from . import ingest as ingest_mod
from . import ram as ram_mod
from .config import Config, load_config
from .errors import HubtrendsError
from .registry import Registry, RegionMap, SizeBucket
from .reports import REPORT_KINDS, ReportSpec, emit_plot_data, run_report
from .series import FilterConfig, iqr_filter, monthly_rollup, splice, write_series_csv
from .store import SnapshotStore


class _Date(click.ParamType):
    name = "date"

    def convert(self, value, param, ctx):
        try:
            return date.fromisoformat(value)
        except ValueError:
            self.fail(f"{value!r} is not a YYYY-MM-DD date", param, ctx)


DATE = _Date()


def _data_errors(fn):
    """Map package errors to exit code 1 with a message on stderr."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except HubtrendsError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(1)
        except OSError as err:
            click.echo(f"error: {err}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.option("--store", "store_dir", type=click.Path(), default=None, help="Snapshot store directory.")
@click.option("--registry", "registry_path", type=click.Path(), default=None, help="Registry CSV.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="key=value config file.")
@click.option("--format", "output_format", type=click.Choice(["csv", "json"]), default=None, help="Artifact format.")
@click.pass_context
def cli(ctx, store_dir, registry_path, config_path, output_format):
    """Adoption analytics over model-hub download snapshots."""
    ctx.obj = load_config(
        config_path,
        overrides={
            "store_dir": store_dir,
            "registry_path": registry_path,
            "output_format": output_format,
        },
    )


def _registry(config: Config) -> Registry:
    if config.registry_path is None:
        raise click.UsageError("--registry (or config/env) is required")
    region_map = RegionMap.from_csv(config.alias_table) if config.alias_table else None
    registry, report = Registry.load(config.registry_path, region_map)
    for issue in report.errors:
        click.echo(f"registry {issue}", err=True)
    return registry


def _store(config: Config, create: bool = False) -> SnapshotStore:
    if config.store_dir is None:
        raise click.UsageError("--store (or config/env) is required")
    return SnapshotStore(config.store_dir, create=create)


# -- ingest --------------------------------------------------------------


@cli.group()
def ingest():
    """Acquire snapshots."""


@ingest.command("fetch")
@click.option("--base-url", default=None, help="Hub API root; overrides config.")
@click.option("--max-parallel", type=int, default=8, show_default=True)
@click.option("--retry-limit", type=int, default=3, show_default=True)
@click.option("--min-interval-ms", type=int, default=50, show_default=True)
@click.option("--run-date", type=DATE, default=None, help="Stamp for fetched points (default: today UTC).")
@click.pass_obj
@_data_errors
def ingest_fetch(config, base_url, max_parallel, retry_limit, min_interval_ms, run_date):
    """Fetch current download counters for every registry model."""
    registry = _registry(config)
    store = _store(config, create=True)
    policy = ingest_mod.FetchPolicy(
        max_parallel=max_parallel,
        retry_limit=retry_limit,
        min_request_interval=min_interval_ms / 1000.0,
    )
    points, report = ingest_mod.fetch_snapshots(
        registry.ids(), base_url or config.base_url, policy, run_date=run_date
    )
    result = store.append(points)
    for failure in report.failures:
        click.echo(f"fetch {failure.model_id}: {failure.cause}", err=True)
    for model_id, when, old, new in result.conflicts:
        click.echo(f"conflict {model_id} {when}: store has {old}, fetched {new}", err=True)
    click.echo(
        f"fetched {len(points)} of {len(registry.ids())} models; "
        f"stored {result.added} new, {result.skipped} duplicate, "
        f"{len(result.conflicts)} conflicting, {len(report.failures)} failed"
    )


@ingest.command("import")
@click.option("--file", "history_path", type=click.Path(exists=True), required=True)
@click.pass_obj
@_data_errors
def ingest_import(config, history_path):
    """Import historical monthly cumulative downloads into the store.

    A month label holds downloads through the end of the previous month,
    so each value is stored as a snapshot dated the month label minus one
    day.  Re-importing the same file is a no-op.
    """
    registry = None
    if config.registry_path:
        registry = _registry(config)
    store = _store(config, create=True)
    records, report = ingest_mod.import_history(history_path, registry)
    for issue in report.errors:
        click.echo(f"import {issue}", err=True)
    for issue in report.warnings:
        click.echo(f"import warning: {issue}", err=True)
    result = store.append(ingest_mod.history_points(records))
    click.echo(
        f"imported {result.added} points ({result.skipped} already stored, "
        f"{len(result.conflicts)} conflicting, {len(report.errors)} bad rows)"
    )
    if result.conflicts:
        for model_id, when, old, new in result.conflicts:
            click.echo(f"conflict {model_id} {when}: store has {old}, file has {new}", err=True)
        sys.exit(1)


# -- series ---------------------------------------------------------------


@cli.group()
def series():
    """Clean and reshape download series."""


@series.command("filter")
@click.option("--model", "models", multiple=True, help="Model id; repeatable. Default: all.")
@click.option("--iqr-multiplier", type=float, default=2.5, show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
@_data_errors
def series_filter(config, models, iqr_multiplier, out_path):
    """Remove spike artifacts from stored series; flags outlier days."""
    store = _store(config)
    ids = list(models) or store.model_ids()
    filter_config = FilterConfig(iqr_multiplier=iqr_multiplier)
    rows = []
    for model_id in sorted(ids):
        result = iqr_filter(store.load_series(model_id), filter_config)
        if result.too_short:
            click.echo(f"filter {model_id}: too short to filter, passed through", err=True)
        for d, v in result.series.points:
            row_flags = []
            if d in result.flagged:
                row_flags.append("outlier")
            if result.too_short:
                row_flags.append("too_short")
            rows.append((model_id, d, v, row_flags))
    _write_multi_series_csv(out_path, rows)
    click.echo(f"wrote {len(rows)} rows to {out_path}")


def _write_multi_series_csv(path, rows):
    import csv as _csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "date", "cumulative_downloads", "flags"])
        for model_id, d, v, row_flags in rows:
            value = int(v) if isinstance(v, float) and v.is_integer() else v
            writer.writerow([model_id, d.isoformat(), value, ";".join(row_flags)])


@series.command("splice")
@click.option("--history", "history_path", type=click.Path(exists=True), required=True,
              help="Filtered historical monthly CSV (model_id,month,cumulative_downloads).")
@click.option("--model", required=True)
@click.option("--splice-date", type=DATE, required=True, help="First-of-month label to join at.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
@_data_errors
def series_splice(config, history_path, model, splice_date, out_path):
    """Extend filtered history with raw scraper monthly deltas."""
    store = _store(config)
    records, report = ingest_mod.import_history(history_path)
    for issue in report.errors:
        click.echo(f"history {issue}", err=True)
    monthly = ingest_mod.history_to_monthly(records)
    if model not in monthly:
        raise click.UsageError(f"{model} has no rows in {history_path}")
    result = splice(monthly[model], store.load_series(model), splice_date)
    flags = {label: ["clamped"] for label in result.clamped}
    write_series_csv(out_path, model, result.series.points, flags)
    click.echo(f"wrote {len(result.series.points)} months to {out_path}")


@series.command("rollup")
@click.option("--model", required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
@_data_errors
def series_rollup(config, model, out_path):
    """Collapse a model's snapshots to month labels."""
    store = _store(config)
    rolled = monthly_rollup(store.load_series(model))
    write_series_csv(out_path, model, rolled.points)
    click.echo(f"wrote {len(rolled.points)} months to {out_path}")


# -- derivatives ------------------------------------------------------------


@cli.group()
def derivatives():
    """Derivative-model lineage."""


@derivatives.command("share")
@click.option("--file", "derivatives_path", type=click.Path(exists=True), required=True)
@click.option("--group-by", type=click.Choice(["region", "organization"]), default="region",
              show_default=True)
@click.option("--exclude-month", "exclude_months", type=DATE, multiple=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
@_data_errors
def derivatives_share(config, derivatives_path, group_by, exclude_months, out_path):
    """Monthly share of new derivatives per base organization/region."""
    spec = ReportSpec(
        kind="derivative_share",
        output_path=out_path,
        output_format=config.output_format,
        group_by=group_by,
        derivatives_path=derivatives_path,
        exclude_months=tuple(exclude_months),
    )
    result = run_report(spec, config)
    click.echo(f"wrote {len(result.rows)} rows to {result.path}")


# -- ram ---------------------------------------------------------------------


@cli.group()
def ram():
    """Relative adoption against bucket reference curves."""


@ram.command("reference")
@click.option("--bucket", type=click.Choice([b.value for b in SizeBucket]), required=True)
@click.option("--reference-date", type=DATE, required=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
@_data_errors
def ram_reference(config, bucket, reference_date, out_path):
    """Build a bucket's top-10 milestone reference curve (JSON)."""
    registry = _registry(config)
    store = _store(config)
    curve = ram_mod.build_reference_curve(
        SizeBucket(bucket), registry, store, reference_date
    )
    ram_mod.save_reference_curve(curve, out_path)
    reduced = [s.t for s in curve.milestones if s.reduced_support]
    if reduced:
        click.echo(f"reduced support at t={reduced}", err=True)
    click.echo(f"wrote {bucket} curve ({len(curve.milestones)} milestones) to {out_path}")


@ram.command("score")
@click.option("--model", required=True, help="Model id or variant-group key.")
@click.option("--reference", "reference_path", type=click.Path(exists=True), default=None,
              help="Reference curve JSON from `ram reference`.")
@click.option("--reference-date", type=DATE, default=None,
              help="Build the curve on the fly at this date instead.")
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
@_data_errors
def ram_score(config, model, reference_path, reference_date, out_path):
    """Score a model's milestone trajectory against its bucket curve."""
    registry = _registry(config)
    store = _store(config)
    if reference_path:
        curve = ram_mod.load_reference_curve(reference_path)
    elif reference_date:
        members = ram_mod._resolve_members(model, registry)
        representative = max(
            (registry.by_id[m] for m in members), key=lambda r: r.total_params
        )
        curve = ram_mod.build_reference_curve(
            representative.size_bucket, registry, store, reference_date
        )
    else:
        raise click.UsageError("provide --reference or --reference-date")
    scores = ram_mod.ram_trajectory(model, registry, store, curve)
    ram_mod.write_scores_csv(scores, out_path)
    click.echo(f"wrote {len(scores)} milestone scores to {out_path}")


# -- bench ---------------------------------------------------------------------


@cli.group()
def bench():
    """Capability benchmarks and usage shares."""


def _bench_report(config, kind, out_path, **kwargs):
    spec = ReportSpec(
        kind=kind, output_path=out_path, output_format=config.output_format, **kwargs
    )
    result = run_report(spec, config)
    click.echo(f"wrote {len(result.rows)} rows to {result.path}")


@bench.command("frontier")
@click.option("--file", "elo_path", type=click.Path(exists=True), required=True)
@click.option("--include-other", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
@_data_errors
def bench_frontier(config, elo_path, include_other, out_path):
    """Per-region best-so-far arena rating at each snapshot date."""
    _bench_report(config, "elo_frontier", out_path, elo_path=elo_path, include_other=include_other)


@bench.command("trend")
@click.option("--file", "index_path", type=click.Path(exists=True), required=True)
@click.option("--include-other", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
@_data_errors
def bench_trend(config, index_path, include_other, out_path):
    """Per-region least-squares trend through top index scores."""
    _bench_report(config, "index_trend", out_path, index_path=index_path, include_other=include_other)


@bench.command("tokens")
@click.option("--file", "tokens_path", type=click.Path(exists=True), required=True)
@click.option("--group-by", type=click.Choice(["region", "organization"]), default="region",
              show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.pass_obj
@_data_errors
def bench_tokens(config, tokens_path, group_by, out_path):
    """Monthly served-token shares by organization or region."""
    _bench_report(config, "token_share", out_path, tokens_path=tokens_path, group_by=group_by)


# -- report ---------------------------------------------------------------------


@cli.command("report")
@click.argument("kind", type=click.Choice(REPORT_KINDS))
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--file", "input_path", type=click.Path(exists=True), default=None,
              help="Input CSV for derivative/token/elo/index kinds.")
@click.option("--group-by", type=click.Choice(["region", "organization"]), default="region",
              show_default=True)
@click.option("--from", "date_from", type=DATE, default=None)
@click.option("--to", "date_to", type=DATE, default=None)
@click.option("--model", default=None)
@click.option("--bucket", type=click.Choice([b.value for b in SizeBucket]), default=None)
@click.option("--reference-date", type=DATE, default=None)
@click.option("--reference", "reference_path", type=click.Path(exists=True), default=None)
@click.option("--exclude-month", "exclude_months", type=DATE, multiple=True)
@click.option("--include-other", is_flag=True, default=False)
@click.option("--filtered", is_flag=True, default=False,
              help="Spike-filter store series before aggregating.")
@click.option("--plot-data", "plot_path", type=click.Path(), default=None,
              help="Also write long-form series,x,y plot data here.")
@click.pass_obj
@_data_errors
def report(config, kind, out_path, input_path, group_by, date_from, date_to, model, bucket,
           reference_date, reference_path, exclude_months, include_other, filtered, plot_path):
    """Build a named report artifact deterministically."""
    file_field = {
        "derivative_share": "derivatives_path",
        "token_share": "tokens_path",
        "elo_frontier": "elo_path",
        "index_trend": "index_path",
    }
    kwargs = {}
    if kind in file_field:
        if input_path is None:
            raise click.UsageError(f"report {kind} requires --file")
        kwargs[file_field[kind]] = input_path
    spec = ReportSpec(
        kind=kind,
        output_path=out_path,
        output_format=config.output_format,
        group_by=group_by,
        date_range=(date_from, date_to),
        model=model,
        bucket=bucket,
        reference_date=reference_date,
        reference_path=reference_path,
        exclude_months=tuple(exclude_months),
        include_other=include_other,
        filtered=filtered,
        **kwargs,
    )
    result = run_report(spec, config)
    click.echo(f"wrote {len(result.rows)} rows to {result.path}")
    if plot_path:
        emit_plot_data(result, plot_path)
        click.echo(f"wrote plot data to {plot_path}")


def main():
    cli(prog_name="hubtrends")


if __name__ == "__main__":
    main()
