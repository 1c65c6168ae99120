from __future__ import annotations

import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from evacwatch import synth
from evacwatch.cli import build_parser, run
from evacwatch.records import RawRecord, RecordBatch, write_records
from evacwatch.seg import Seg

SUBCOMMANDS = ("aggregate", "baseline", "warned", "seg", "rex", "cdf", "thresholds", "its", "cits", "delay-sweep", "synth", "report")


def _error(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("golden")
    assert run(["synth", "--preset", "golden", "--out", str(d)]) == 0
    return d


class TestHelp:
    @pytest.mark.parametrize("cmd", SUBCOMMANDS)
    def test_help_exits_zero_and_lists_flags(self, cmd, capsys):
        with pytest.raises(SystemExit) as info:
            run([cmd, "--help"])
        assert info.value.code == 0
        text = capsys.readouterr().out
        sub = build_parser()._subparsers._group_actions[0].choices[cmd]
        for action in sub._actions:
            for flag in action.option_strings:
                assert flag in text

    def test_unknown_subcommand_is_usage_error(self, capsys):
        assert run(["frobnicate"]) == 1
        assert _error(capsys)["error"] == "UsageError"


class TestValidation:
    @pytest.mark.parametrize(
        "argv",
        [
            ["cits", "--delay-min", "70"],
            ["cits", "--hac-lag", "-2"],
            ["warned", "--radius-km", "0"],
            ["thresholds", "--thresholds", "50,120"],
            ["thresholds", "--window-start", "2024-02-02 00:00"],
            ["delay-sweep", "--delays", "30,50"],
        ],
    )
    def test_bad_flags_fail_before_work(self, argv, capsys, tmp_path):
        assert run(argv + ["--in", str(tmp_path)]) == 1
        assert _error(capsys)["exit_code"] == 1

    def test_missing_input_dir(self, capsys, tmp_path):
        assert run(["cits", "--in", str(tmp_path / "nope")]) == 2

    def test_unknown_timezone(self, capsys, tmp_path):
        assert run(["seg", "--in", str(tmp_path), "--tz", "Mars/Olympus"]) != 0


class TestAggregate:
    def test_empty_file(self, tmp_path, capsys):
        (tmp_path / "empty.csv").write_text("")
        assert run(["aggregate", "--records", str(tmp_path / "empty.csv"), "--out", str(tmp_path / "s.csv")]) == 2
        assert "zero valid rows" in _error(capsys)["message"]

    def test_counts_and_summary(self, tmp_path):
        t0 = 1706788800
        recs = [RawRecord("a", t0, "T1", 1.0), RawRecord("a", t0 + 60, "T1", 1.0), RawRecord("b", t0 + 5, "T1", 1.0), RawRecord("a", t0 + 900, "T2", 1.0)]
        write_records(tmp_path / "r.csv", RecordBatch.from_records(recs))
        out = tmp_path / "series.csv"
        assert run(["aggregate", "--records", str(tmp_path / "r.csv"), "--out", str(out), "--summary", str(tmp_path / "sum.json")]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "tower_id,bin_start_iso8601,count"
        assert lines[1:] == [
            "T1,2024-02-01T09:00:00-03:00,2",
            "T1,2024-02-01T09:15:00-03:00,0",
            "T2,2024-02-01T09:00:00-03:00,0",
            "T2,2024-02-01T09:15:00-03:00,1",
        ]
        assert json.loads((tmp_path / "sum.json").read_text())["total_records"] == 4


class TestGoldenPipeline:
    def test_cits_recovers_injected(self, workspace):
        assert run(["cits", "--in", str(workspace), "--delay", "75"]) == 0
        result = json.loads((workspace / "cits.json").read_text())
        for seg in Seg:
            injected = synth.GOLDEN_DAY1[seg]
            est = [result[seg.label]["coef"][n]["est"] for n in ("Intercept", "T", "I0", "T_I0", "G", "GT", "GI0", "GT_I0")]
            assert np.max(np.abs(np.subtract(est, injected))) < 0.02
            assert result[seg.label]["lag"] == 3 and result[seg.label]["delay_minutes"] == 75
        assert "GI0" in (workspace / "cits_table.txt").read_text()

    def test_second_day_window(self, workspace, tmp_path):
        argv = ["cits", "--in", str(workspace), "--out", str(tmp_path), "--window-start", "2024-02-03 00:00", "--window-end", "2024-02-04 00:00"]
        assert run(argv) == 0
        result = json.loads((tmp_path / "cits.json").read_text())
        assert abs(result["High"]["coef"]["I0"]["est"] - synth.GOLDEN_DAY2[Seg.HIGH][2]) < 0.02

    def test_delay_sweep_picks_75(self, workspace, capsys):
        assert run(["delay-sweep", "--in", str(workspace)]) == 0
        assert json.loads(capsys.readouterr().out)["best_delay_minutes"] == 75
        rows = (workspace / "delay_sweep.csv").read_text().splitlines()
        assert [r.split(",")[0] for r in rows[1:]] == ["30", "45", "60", "75", "90", "105", "120"]

    def test_intermediate_stages(self, workspace):
        for cmd in ("baseline", "warned", "seg", "rex"):
            assert run([cmd, "--in", str(workspace)]) == 0
        for name in ("baseline.csv", "warned.csv", "zone_seg.csv", "tower_seg.csv", "seg_cuts.json", "rex.csv", "group_rex.csv", "differential_rex.csv"):
            assert (workspace / name).exists(), name
        header = (workspace / "group_rex.csv").read_text().splitlines()[0]
        assert header == "seg,warned_flag,bin_iso,mean,ci_lo,ci_hi,n"
        # derived and materialized intermediates give the same fit
        assert run(["its", "--in", str(workspace), "--seg", "high"]) == 0
        assert "High" in json.loads((workspace / "its.json").read_text())

    def test_distributions(self, workspace):
        assert run(["cdf", "--in", str(workspace), "--offsets-min", "90"]) == 0
        assert (workspace / "cdf_evac_rate_20240202T1815.csv").read_text().startswith("seg,x,cum_fraction")
        assert run(["thresholds", "--in", str(workspace), "--mode", "ever", "--thresholds", "50,85"]) == 0
        assert (workspace / "thresholds_ever.csv").read_text().startswith("seg,threshold,bin_iso,fraction")

    def test_report(self, workspace, tmp_path):
        assert run(["report", "--in", str(workspace), "--out", str(tmp_path)]) == 0
        names = sorted(p.name for p in tmp_path.iterdir())
        assert names == ["cdf.svg", "connectivity.svg", "delay_sweep.svg", "differential_rex.svg", "group_rex.svg", "thresholds.svg"]
        for p in tmp_path.iterdir():
            ET.parse(p)

    def test_statistical_failure_exit_code(self, workspace, tmp_path, capsys):
        argv = ["its", "--in", str(workspace), "--out", str(tmp_path), "--hac-lag", "200", "--seg", "low"]
        assert run(argv) == 3
        assert _error(capsys)["error"] == "StatisticalError"


def test_records_volume_guard(tmp_path, capsys):
    assert run(["synth", "--preset", "golden", "--records", "--out", str(tmp_path)]) == 1
    assert "throughput" in _error(capsys)["message"]


def test_env_timezone_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("EVACWATCH_TZ", "UTC")
    assert run(["synth", "--preset", "null", "--out", str(tmp_path)]) == 0
    first = (tmp_path / "event_series.csv").read_text().splitlines()[1]
    assert first.split(",")[1] == "2024-02-02T00:00:00+00:00"
