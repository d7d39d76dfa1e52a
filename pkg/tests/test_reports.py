"""Deterministic report artifacts, sidecar logs, and plot-data reshaping."""

from __future__ import annotations

import json
from datetime import date

import pytest

import fixture_tables as tables
from hubtrends.config import Config
from hubtrends.errors import DomainError
from hubtrends.ram import build_reference_curve, curve_from_dict, save_reference_curve
from hubtrends.registry import SizeBucket
from hubtrends.reports import (
    ReportResult,
    ReportSpec,
    emit_plot_data,
    plot_rows,
    run_report,
)
from hubtrends.series import DownloadSeries
from hubtrends.store import InMemoryStore

REF = tables.REFERENCE_DATE


@pytest.fixture()
def config(registry_path) -> Config:
    return Config(registry_path=str(registry_path))


def _report_store() -> InMemoryStore:
    store = InMemoryStore()
    store.add_series(DownloadSeries("Qwen/Qwen3-0.6B", (
        (date(2025, 6, 20), 100.0),
        (date(2025, 7, 15), 150.0),
        (date(2025, 8, 10), 210.0),
    )))
    store.add_series(DownloadSeries("meta-llama/Llama-3.1-8B-Instruct", (
        (date(2025, 6, 25), 50.0),
        (date(2025, 7, 20), 80.0),
    )))
    store.add_series(DownloadSeries("tiiuae/falcon-7b-instruct", (
        (date(2025, 6, 22), 10.0),
        (date(2025, 7, 22), 20.0),
    )))
    return store


def test_region_downloads_rollup_with_carry_and_other_hidden(tmp_path, config):
    spec = ReportSpec(kind="region_downloads", output_path=str(tmp_path / "r.csv"))
    result = run_report(spec, config, store=_report_store())
    assert result.columns == ["month", "region", "downloads"]
    assert result.rows == [
        ["2025-07-01", "China", "100"],
        ["2025-07-01", "USA", "50"],
        ["2025-08-01", "China", "150"],
        ["2025-08-01", "USA", "80"],
        ["2025-09-01", "China", "210"],
        ["2025-09-01", "USA", "80"],  # carried forward past its last snapshot
    ]
    assert (tmp_path / "r.csv").read_text() == (
        "month,region,downloads\n"
        "2025-07-01,China,100\n"
        "2025-07-01,USA,50\n"
        "2025-08-01,China,150\n"
        "2025-08-01,USA,80\n"
        "2025-09-01,China,210\n"
        "2025-09-01,USA,80\n"
    )


def test_region_downloads_include_other_and_date_clipping(tmp_path, config):
    spec = ReportSpec(
        kind="region_downloads",
        output_path=str(tmp_path / "r.csv"),
        include_other=True,
        date_range=(date(2025, 8, 1), date(2025, 8, 31)),
    )
    result = run_report(spec, config, store=_report_store())
    assert result.rows == [
        ["2025-08-01", "China", "150"],
        ["2025-08-01", "Other", "20"],
        ["2025-08-01", "USA", "80"],
    ]


def test_org_downloads_never_hides_groups(tmp_path, config):
    spec = ReportSpec(kind="org_downloads", output_path=str(tmp_path / "o.csv"))
    result = run_report(spec, config, store=_report_store())
    assert result.columns == ["month", "organization", "downloads"]
    assert [r[1] for r in result.rows] == ["Alibaba", "Meta", "TII"] * 3


def test_filtered_rollups_correct_spikes_and_warn(tmp_path, config):
    store = InMemoryStore()
    store.add_series(DownloadSeries("Qwen/Qwen3-0.6B", (
        (date(2025, 6, 1), 0.0),
        (date(2025, 6, 2), 10.0),
        (date(2025, 6, 3), 20.0),
        (date(2025, 6, 4), 5000.0),  # one-day spike artifact
        (date(2025, 6, 5), 5010.0),
        (date(2025, 6, 6), 5020.0),
    )))
    store.add_series(DownloadSeries("meta-llama/Llama-3.1-8B-Instruct", (
        (date(2025, 6, 1), 5.0),
        (date(2025, 6, 2), 6.0),
        (date(2025, 6, 3), 7.0),
    )))
    spec = ReportSpec(
        kind="region_downloads", output_path=str(tmp_path / "r.csv"), filtered=True
    )
    result = run_report(spec, config, store=store)
    assert ["2025-07-01", "China", "50"] in result.rows
    assert "Qwen/Qwen3-0.6B: 1 outlier day(s) corrected" in result.warnings
    assert (
        "meta-llama/Llama-3.1-8B-Instruct: too short to filter (3 points)"
        in result.warnings
    )


def test_size_distribution_shares_recover_fixture_totals(
    tmp_path, config, registry, incumbent_store
):
    expected_totals = {bucket: 0.0 for bucket in SizeBucket}
    for model_id, lifetime in tables.incumbent_lifetimes().items():
        expected_totals[registry.by_id[model_id].size_bucket] += lifetime
    grand = sum(expected_totals.values())

    incumbent_store.add_series(DownloadSeries("ghost/model", ((date(2025, 1, 1), 5.0),)))
    spec = ReportSpec(kind="size_distribution", output_path=str(tmp_path / "s.csv"))
    result = run_report(spec, config, store=incumbent_store)
    assert result.columns == ["bucket", "downloads", "share"]
    assert [r[0] for r in result.rows] == [b.value for b in SizeBucket]
    shares = {row[0]: float(row[2]) for row in result.rows}
    assert sum(shares.values()) == pytest.approx(1.0, abs=1e-5)
    for row in result.rows:
        bucket = SizeBucket(row[0])
        assert row[1] == str(round(expected_totals[bucket]))
        assert float(row[2]) == pytest.approx(expected_totals[bucket] / grand, abs=5e-7)
    # The 7-9B bucket is the modal one in this corpus.
    assert max(shares, key=shares.get) == "B7to9"
    assert "ghost/model: in store but not in registry; skipped" in result.warnings


def _derivatives_csv(tmp_path) -> str:
    path = tmp_path / "derivatives.csv"
    path.write_text(
        "child_id,base_tag,lifetime_downloads,format_tags,created_at\n"
        "t/a,base_model:Qwen/Qwen3-0.6B,100,,2025-07-03\n"
        "t/b,base_model:Qwen/Qwen3-0.6B,50,lora,2025-07-10\n"
        "t/c,base_model:meta-llama/Llama-3.1-8B-Instruct,80,,2025-07-20\n"
        "t/d,base_model:unknown/base,99,,2025-07-21\n"
        "t/e,base_model:Qwen/Qwen3-0.6B,3,,2025-07-22\n"
        "t/f,base_model:Qwen/Qwen3-0.6B,500,gguf,2025-07-23\n"
        "t/g,base_model:meta-llama/Llama-3.1-8B-Instruct,70,,2025-08-02\n",
        encoding="utf-8",
    )
    return str(path)


def test_derivative_share_report_and_rejection_summary(tmp_path, config):
    spec = ReportSpec(
        kind="derivative_share",
        output_path=str(tmp_path / "d.csv"),
        derivatives_path=_derivatives_csv(tmp_path),
    )
    result = run_report(spec, config)
    assert result.columns == ["month", "group", "share", "count"]
    assert result.rows == [
        ["2025-07-01", "China", "0.666667", "2"],
        ["2025-07-01", "USA", "0.333333", "1"],
        ["2025-08-01", "USA", "1.000000", "1"],
    ]
    assert (
        "derivatives accepted 4 of 7 records (untracked_base=1, low_downloads=1, "
        "excluded_format=1)" in result.warnings
    )


def test_derivative_share_exclude_months(tmp_path, config):
    spec = ReportSpec(
        kind="derivative_share",
        output_path=str(tmp_path / "d.csv"),
        derivatives_path=_derivatives_csv(tmp_path),
        exclude_months=(date(2025, 7, 15),),
    )
    result = run_report(spec, config)
    assert result.rows == [["2025-08-01", "USA", "1.000000", "1"]]


def test_token_share_report_logs_the_caveat_once(tmp_path, config):
    tokens = tmp_path / "tokens.csv"
    tokens.write_text(
        "month,model_id,tokens\n"
        "2025-07-01,Qwen/Qwen3-0.6B,600\n"
        "2025-07-01,openai/gpt-oss-120b,400\n"
        "2025-08-01,Qwen/Qwen3-0.6B,250\n",
        encoding="utf-8",
    )
    spec = ReportSpec(
        kind="token_share", output_path=str(tmp_path / "t.csv"), tokens_path=str(tokens)
    )
    result = run_report(spec, config)
    assert result.rows == [
        ["2025-07-01", "China", "600", "0.600000"],
        ["2025-07-01", "USA", "400", "0.400000"],
        ["2025-08-01", "China", "250", "1.000000"],
    ]
    caveats = [w for w in result.warnings if w.startswith("tokens caveat:")]
    assert caveats == [
        "tokens caveat: monthly provider feed lists only the top 10 models; "
        "groups with usage outside the top 10 are undercounted"
    ]


def test_elo_frontier_report(tmp_path, config):
    elo = tmp_path / "elo.csv"
    elo.write_text(
        "date,model_id,elo\n"
        "2025-05-18,Qwen/Qwen3-0.6B,1300\n"
        "2025-06-01,Qwen/Qwen3-0.6B,1310\n"
        "2025-06-01,meta-llama/Llama-3.1-8B-Instruct,1342\n",
        encoding="utf-8",
    )
    spec = ReportSpec(
        kind="elo_frontier", output_path=str(tmp_path / "e.csv"), elo_path=str(elo)
    )
    result = run_report(spec, config)
    assert result.columns == ["region", "date", "elo"]
    assert result.rows == [
        ["China", "2025-05-18", "1359.2"],  # recalibrated onto the new scale
        ["China", "2025-06-01", "1359.2"],
        ["USA", "2025-06-01", "1342.0"],
    ]


def test_index_trend_report_fits_and_skips(tmp_path, config):
    index = tmp_path / "index.csv"
    index.write_text(
        "date,model_id,score\n"
        "2024-05-01,meta-llama/Llama-3.1-8B-Instruct,5\n"
        "2024-05-03,meta-llama/Llama-3.1-8B-Instruct,9\n"
        "2024-05-05,meta-llama/Llama-3.1-8B-Instruct,13\n"
        "2024-05-02,Qwen/Qwen3-0.6B,7\n",
        encoding="utf-8",
    )
    spec = ReportSpec(
        kind="index_trend", output_path=str(tmp_path / "i.csv"), index_path=str(index)
    )
    result = run_report(spec, config)
    assert result.columns == ["region", "series", "date", "value"]
    assert result.rows == [
        ["USA", "fitted", "2024-05-01", "5.0000"],
        ["USA", "observed", "2024-05-01", "5.0000"],
        ["USA", "fitted", "2024-05-03", "9.0000"],
        ["USA", "observed", "2024-05-03", "9.0000"],
        ["USA", "fitted", "2024-05-05", "13.0000"],
        ["USA", "observed", "2024-05-05", "13.0000"],
    ]
    assert (
        "index_trend USA: slope_per_day=2.000000 intercept=5.0000 rms=0.0000 "
        "epoch=2024-05-01 n=3" in result.warnings
    )
    assert "index_trend China: too few observations, skipped" in result.warnings


def test_ram_reference_report_warns_on_reduced_support(
    tmp_path, config, registry, incumbent_store
):
    spec = ReportSpec(
        kind="ram_reference",
        output_path=str(tmp_path / "curve.csv"),
        bucket="B250plus",
        reference_date=REF,
    )
    result = run_report(spec, config, store=incumbent_store)
    curve = build_reference_curve(SizeBucket.B250_PLUS, registry, incumbent_store, REF)
    assert result.columns == ["bucket", "t", "median", "q1", "q3", "support"]
    assert result.rows == [
        [
            "B250plus",
            str(s.t),
            f"{s.median:.2f}",
            f"{s.q1:.2f}",
            f"{s.q3:.2f}",
            str(s.support),
        ]
        for s in curve.milestones
    ]
    assert (
        "ram_reference B250plus t=60: reduced support (8 of 10 members)"
        in result.warnings
    )


def test_ram_reference_json_is_a_loadable_curve(
    tmp_path, config, registry, incumbent_store
):
    out = tmp_path / "curve.json"
    spec = ReportSpec(
        kind="ram_reference",
        output_path=str(out),
        output_format="json",
        bucket="B1to5",
        reference_date=REF,
    )
    run_report(spec, config, store=incumbent_store)
    loaded = curve_from_dict(json.loads(out.read_text(encoding="utf-8")))
    assert loaded == build_reference_curve(SizeBucket.B1_TO_5, registry, incumbent_store, REF)


def test_reports_are_byte_identical_across_runs(tmp_path, config):
    spec_a = ReportSpec(kind="region_downloads", output_path=str(tmp_path / "a.csv"))
    spec_b = ReportSpec(kind="region_downloads", output_path=str(tmp_path / "b.csv"))
    run_report(spec_a, config, store=_report_store())
    run_report(spec_b, config, store=_report_store())
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv.log").read_bytes() == (tmp_path / "b.csv.log").read_bytes()


def test_ram_trajectory_report_from_a_saved_reference(tmp_path, config):
    model_id = "openai/gpt-oss-120b"
    cells = next(c for mid, _, c in tables.CASE_STUDY if mid == model_id)
    curve_path = tmp_path / "reference.json"
    from test_ram import _implied_curve

    save_reference_curve(_implied_curve(model_id, "B100to250"), curve_path)
    store = InMemoryStore()
    store.add_series(tables.case_study_series(model_id))
    spec = ReportSpec(
        kind="ram_trajectory",
        output_path=str(tmp_path / "traj.csv"),
        model=model_id,
        reference_path=str(curve_path),
    )
    result = run_report(spec, config, store=store)
    assert result.columns == ["model", "bucket", "t", "downloads", "score", "reference_date"]
    assert result.rows == [
        [
            model_id,
            "B100to250",
            str(t),
            str(round(tables.parse_downloads(dstr)[0])),
            sstr,
            REF.isoformat(),
        ]
        for t, dstr, sstr in cells
    ]


def test_ram_trajectory_report_builds_a_curve_for_variant_groups(
    tmp_path, config, incumbent_store
):
    spec = ReportSpec(
        kind="ram_trajectory",
        output_path=str(tmp_path / "traj.csv"),
        model="zai-org/GLM-5",
        reference_date=REF,
    )
    result = run_report(spec, config, store=incumbent_store)
    # Only the FP8 re-release has store data; its 50-day history supports
    # exactly the first three milestones of the group trajectory.
    assert [r[2] for r in result.rows] == ["7", "14", "30"]
    assert all(r[0] == "zai-org/GLM-5" and r[1] == "B250plus" for r in result.rows)


def test_empty_trajectory_warns(tmp_path, config):
    curve_path = tmp_path / "reference.json"
    from test_ram import _implied_curve

    save_reference_curve(_implied_curve("openai/gpt-oss-120b", "B100to250"), curve_path)
    spec = ReportSpec(
        kind="ram_trajectory",
        output_path=str(tmp_path / "traj.csv"),
        model="openai/gpt-oss-120b",
        reference_path=str(curve_path),
    )
    result = run_report(spec, config, store=InMemoryStore())
    assert result.rows == []
    assert "ram_trajectory openai/gpt-oss-120b: no milestone reachable" in result.warnings


def test_sidecar_log_is_always_written(tmp_path, config):
    out = tmp_path / "r.csv"
    spec = ReportSpec(kind="region_downloads", output_path=str(out))
    result = run_report(spec, config, store=_report_store())
    log = tmp_path / "r.csv.log"
    assert log.exists()
    assert log.read_text(encoding="utf-8") == "".join(f"{w}\n" for w in result.warnings)


def test_report_spec_validation():
    with pytest.raises(DomainError, match="unknown report kind"):
        ReportSpec(kind="weather", output_path="x.csv")
    with pytest.raises(DomainError, match="csv or json"):
        ReportSpec(kind="region_downloads", output_path="x.csv", output_format="xml")


def test_missing_required_inputs_are_reported(tmp_path, config):
    spec = ReportSpec(kind="derivative_share", output_path=str(tmp_path / "d.csv"))
    with pytest.raises(DomainError, match="requires --file"):
        run_report(spec, config)
    spec = ReportSpec(kind="region_downloads", output_path=str(tmp_path / "r.csv"))
    with pytest.raises(DomainError, match="requires --store"):
        run_report(spec, config, store=None)


def test_plot_rows_reshapes_each_kind(tmp_path, config, incumbent_store):
    spec = ReportSpec(kind="size_distribution", output_path=str(tmp_path / "s.csv"))
    result = run_report(spec, config, store=incumbent_store)
    rows = plot_rows(result.kind, result.columns, result.rows)
    assert len(rows) == 7
    assert {r[0] for r in rows} == {"share"}
    assert [r[1] for r in rows] == [b.value for b in SizeBucket]

    spec = ReportSpec(
        kind="ram_reference",
        output_path=str(tmp_path / "c.csv"),
        bucket="B250plus",
        reference_date=REF,
    )
    result = run_report(spec, config, store=incumbent_store)
    rows = plot_rows(result.kind, result.columns, result.rows)
    assert len(rows) == 3 * len(result.rows)
    assert [r[0] for r in rows[:7]] == ["median"] * 7

    with pytest.raises(DomainError, match="no plot-data mapping"):
        plot_rows("weather", ["a"], [])


def test_plot_rows_join_multi_column_series(tmp_path, config):
    index = tmp_path / "index.csv"
    index.write_text(
        "date,model_id,score\n"
        "2024-05-01,meta-llama/Llama-3.1-8B-Instruct,5\n"
        "2024-05-03,meta-llama/Llama-3.1-8B-Instruct,9\n",
        encoding="utf-8",
    )
    spec = ReportSpec(
        kind="index_trend", output_path=str(tmp_path / "i.csv"), index_path=str(index)
    )
    result = run_report(spec, config)
    rows = plot_rows(result.kind, result.columns, result.rows)
    assert rows[0] == ["USA/fitted", "2024-05-01", "5.0000"]
    assert rows[1] == ["USA/observed", "2024-05-01", "5.0000"]


def test_emit_plot_data_writes_header_even_when_empty(tmp_path):
    result = ReportResult(
        kind="elo_frontier",
        path=tmp_path / "e.csv",
        columns=["region", "date", "elo"],
        rows=[],
    )
    out = emit_plot_data(result, tmp_path / "plot.csv")
    assert out.read_text(encoding="utf-8") == "series,x,y\n"
