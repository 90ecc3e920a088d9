import json
from pathlib import Path

import numpy as np
import pytest

from coptraj.cli import main


def write_tiny_cfg(path):
    path.write_text("""\
[trajectory]
duration = 6.0
n_pieces = 2

[integration]
fixed_step = 0.002

[sensitivity]
step = 0.01

[observability]
segments = 8

[optimizer]
evals_per_stage = 12

[campaign]
flights = 4
""")
    return path


@pytest.fixture
def tiny_cfg(tmp_path):
    return write_tiny_cfg(tmp_path / "tiny.cfg")


@pytest.fixture
def pipeline_run(tmp_path, tiny_cfg):
    out = tmp_path / "run"
    code = main(["optimize", "--objective", "pipeline",
                 "--config", str(tiny_cfg), "--seed", "3",
                 "--target", "2.5,2.0,0.4", "--out", str(out)])
    assert code == 0
    return out


class TestUsage:
    def test_help_exits_zero(self, capsys):
        assert main(["--help"]) == 0
        assert "precondition" in capsys.readouterr().out

    def test_no_command_prints_help(self, capsys):
        assert main([]) == 0
        assert "usage" in capsys.readouterr().out

    def test_unknown_flag_is_usage_error(self, capsys):
        assert main(["optimize", "--objective", "pi", "--frobnicate"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_bad_objective_is_usage_error(self):
        assert main(["optimize", "--objective", "nope"]) == 1

    def test_bad_target_is_usage_error(self, tiny_cfg, capsys):
        assert main(["precondition", "--config", str(tiny_cfg),
                     "--target", "1,2"]) == 1

    def test_missing_config_is_runtime_error(self, capsys):
        assert main(["precondition", "--config", "/nonexistent.cfg"]) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_run_dir_is_runtime_error(self, capsys):
        assert main(["report", "--run", "/nonexistent/run"]) == 2


class TestPrecondition:
    def test_writes_artifacts_and_json(self, tmp_path, tiny_cfg, capsys):
        out = tmp_path / "pre"
        code = main(["precondition", "--config", str(tiny_cfg), "--seed", "1",
                     "--target", "2.5,2.0,0.4", "--out", str(out), "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["terminal_error"] < 0.01
        assert payload["rotor_violation"] <= 0.0
        assert (out / "trajectories" / "init.csv").exists()
        assert (out / "waypoints" / "init.json").exists()
        assert (out / "precondition.json").exists()


class TestOptimizeEvaluateExportReport:
    def test_run_layout(self, pipeline_run):
        for stage in ("init", "pi", "theta", "e2log", "sis", "cop"):
            assert (pipeline_run / "trajectories" / f"{stage}.csv").exists()
        assert (pipeline_run / "summary.json").exists()
        assert (pipeline_run / "verdict.json").exists()
        assert (pipeline_run / "stages" / "pi.json").exists()

    def test_evaluate_writes_stats(self, pipeline_run, capsys):
        code = main(["evaluate", "--run", str(pipeline_run), "--seed", "7",
                     "--flights", "4", "--amplitude", "0.01", "--json"])
        assert code == 0
        stats = json.loads(capsys.readouterr().out)
        assert set(stats["tracking"]) == {"init", "sis", "e2log", "cop"}
        assert (pipeline_run / "campaign" / "campaign_stats.json").exists()

    def test_export_measurements(self, pipeline_run, tmp_path, capsys):
        out_file = tmp_path / "meas.csv"
        code = main(["export", "--run", str(pipeline_run), "--stage", "cop",
                     "--rate", "50", "--noise-position", "0.01",
                     "--seed", "2", "--out", str(out_file), "--json"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["file"] == str(out_file)
        header = out_file.read_text().splitlines()[0].split(",")
        assert header[0] == "t"
        assert "rotor_speed_1" in header and "quat_w" in header

    def test_report_is_read_only(self, pipeline_run, capsys):
        before = {p: p.read_bytes() for p in pipeline_run.rglob("*")
                  if p.is_file()}
        code = main(["report", "--run", str(pipeline_run)])
        assert code == 0
        out = capsys.readouterr().out
        assert "accepted" in out
        after = {p: p.read_bytes() for p in pipeline_run.rglob("*")
                 if p.is_file()}
        assert before == after

    def test_export_unknown_stage_in_partial_run(self, tmp_path, tiny_cfg):
        out = tmp_path / "partial"
        assert main(["optimize", "--objective", "pi", "--config",
                     str(tiny_cfg), "--seed", "3",
                     "--target", "2.5,2.0,0.4", "--out", str(out)]) == 0
        assert main(["export", "--run", str(out), "--stage", "cop"]) == 2


class TestDeterminism:
    def test_identical_runs_identical_artifacts(self, tmp_path, tiny_cfg):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = main(["optimize", "--objective", "sis", "--config",
                         str(tiny_cfg), "--seed", "11", "--out", str(out)])
            assert code == 0
            outs.append(out)
        for rel in ("summary.json", "trajectories/init.csv",
                    "trajectories/sis.csv"):
            assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes()
