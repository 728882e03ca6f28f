"""CLI subcommands: validate-config, replay (with figures), bench."""

import json
from pathlib import Path

import pytest

from padfuse.cli import main

DATA = Path(__file__).parent / "data"


class TestValidateConfig:
    def test_valid_config_exits_zero(self, tmp_path, capsys):
        path = tmp_path / "good.json"
        path.write_text(json.dumps({"fusion": {"approach_speed": 2.0}}))
        assert main(["validate-config", str(path)]) == 0
        assert "config_hash=" in capsys.readouterr().out

    def test_invalid_config_exits_nonzero(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"fusion": {"tick_interval": 0}}))
        assert main(["validate-config", str(path)]) == 1
        assert "fusion.tick_interval" in capsys.readouterr().err

    def test_missing_file_exits_nonzero(self, tmp_path):
        assert main(["validate-config", str(tmp_path / "nope.json")]) == 1


class TestReplay:
    def test_emit_csv_with_figures(self, tmp_path, capsys):
        out = tmp_path / "trajectory.csv"
        code = main(
            ["replay", str(DATA / "session_60s.jsonl"), "--fast", "--emit", "csv", "--out", str(out)]
        )
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "t,p,a,d,label"
        assert len(lines) > 3000
        # the report path renders figures alongside the delimited output
        assert (tmp_path / "trajectory.csv.channels.png").exists()
        assert (tmp_path / "trajectory.csv.plane.png").exists()

    def test_emit_jsonl_no_plot(self, tmp_path):
        out = tmp_path / "trajectory.jsonl"
        code = main(
            [
                "replay",
                str(DATA / "session_60s.jsonl"),
                "--emit",
                "jsonl",
                "--out",
                str(out),
                "--no-plot",
            ]
        )
        assert code == 0
        first = json.loads(out.read_text().split("\n")[0])
        assert set(first) == {"t", "p", "a", "d", "label"}
        assert not (tmp_path / "trajectory.jsonl.channels.png").exists()

    def test_config_hash_mismatch_refused(self, tmp_path, capsys):
        config_path = tmp_path / "other.json"
        config_path.write_text(json.dumps({"fusion": {"tick_interval": 0.05}}))
        code = main(
            [
                "replay",
                str(DATA / "session_60s.jsonl"),
                "--config",
                str(config_path),
                "--out",
                str(tmp_path / "t.csv"),
                "--no-plot",
            ]
        )
        assert code == 2
        assert "config" in capsys.readouterr().err

    def test_hash_override_flag(self, tmp_path):
        config_path = tmp_path / "other.json"
        config_path.write_text(json.dumps({"fusion": {"tick_interval": 0.05}}))
        code = main(
            [
                "replay",
                str(DATA / "session_60s.jsonl"),
                "--config",
                str(config_path),
                "--ignore-config-hash",
                "--out",
                str(tmp_path / "t.csv"),
                "--no-plot",
            ]
        )
        assert code == 0

    def test_corrupt_log_names_line(self, tmp_path, capsys):
        source = (DATA / "session_60s.jsonl").read_bytes().split(b"\n")
        source[16] = b"{corrupt"
        bad = tmp_path / "bad.jsonl"
        bad.write_bytes(b"\n".join(source))
        code = main(["replay", str(bad), "--out", str(tmp_path / "t.csv"), "--no-plot"])
        assert code == 2
        assert "line 17" in capsys.readouterr().err


class TestBench:
    def test_reports_percentiles(self, capsys):
        assert main(["bench", "--events", "50", "--ticks", "50"]) == 0
        out = capsys.readouterr().out
        assert "median" in out and "p99" in out
