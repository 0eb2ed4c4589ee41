import json

import pytest

from veriloop.harness import cli
from veriloop.harness.cli import main
from veriloop.harness.validate import PointResult, ValidationPoint


def simulate_args(tmp_path, *extra):
    return [
        "simulate",
        "--out",
        str(tmp_path / "run"),
        "--loops",
        "1",
        "--samples",
        "3",
        "--seed",
        "3",
        *extra,
    ]


class TestArgumentParsing:
    def test_no_subcommand_exits(self):
        with pytest.raises(SystemExit):
            main([])

    def test_run_requires_config(self):
        with pytest.raises(SystemExit):
            main(["run"])

    def test_unknown_subcommand_exits(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])


class TestSimulate:
    def test_end_to_end(self, tmp_path, capsys):
        assert main(simulate_args(tmp_path)) == 0
        out = capsys.readouterr().out
        assert "accuracy:" in out
        assert "report:" in out
        assert (tmp_path / "run" / "report.json").exists()
        assert (tmp_path / "run" / "trace.jsonl").exists()
        assert (tmp_path / "run" / "config.json").exists()

    def test_forces_oracle_backend(self, tmp_path, capsys):
        config = {
            "backend": {"kind": "remote", "base_url": "http://nowhere/v1", "model": "m"},
            "pipeline": {"loops": 0, "samples_per_loop": 2},
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config), "utf-8")
        code = main(
            ["simulate", "--config", str(path), "--out", str(tmp_path / "run"), "--seed", "1"]
        )
        assert code == 0
        report = json.loads((tmp_path / "run" / "report.json").read_text("utf-8"))
        assert report["run"]["backend"] == "oracle"

    def test_resume_mix_returns_failure(self, tmp_path, capsys):
        assert main(simulate_args(tmp_path)) == 0
        assert main(simulate_args(tmp_path, "--ablation", "no_loop")) == cli.RUN_FAILURE
        assert "error:" in capsys.readouterr().err

    def test_fresh_discards(self, tmp_path):
        assert main(simulate_args(tmp_path)) == 0
        assert main(simulate_args(tmp_path, "--ablation", "no_loop", "--fresh")) == 0


class TestRun:
    def test_with_config_file(self, tmp_path, capsys):
        config = {
            "seed": 2,
            "output_dir": str(tmp_path / "run"),
            "pipeline": {"loops": 0, "samples_per_loop": 2},
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config), "utf-8")
        assert main(["run", "--config", str(path)]) == 0
        assert "queries:" in capsys.readouterr().out

    def test_missing_config_file_fails_cleanly(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "absent.json")])
        assert code == cli.RUN_FAILURE
        assert "error:" in capsys.readouterr().err


class TestReport:
    def test_rebuild(self, tmp_path, capsys):
        assert main(simulate_args(tmp_path)) == 0
        before = (tmp_path / "run" / "report.json").read_bytes()
        assert main(["report", "--out", str(tmp_path / "run")]) == 0
        assert (tmp_path / "run" / "report.json").read_bytes() == before

    def test_not_a_run_dir(self, tmp_path, capsys):
        assert main(["report", "--out", str(tmp_path)]) == cli.RUN_FAILURE
        assert "error:" in capsys.readouterr().err


class TestValidateModel:
    def test_small_grid_passes(self, tmp_path, capsys):
        grid = {
            "points": [
                {
                    "p_correct": 0.5,
                    "tpr": 0.9,
                    "fpr": 0.1,
                    "s_present": 0.95,
                    "s_absent": 0.1,
                    "n_total": 8,
                }
            ],
            "trials": 2000,
        }
        grid_path = tmp_path / "grid.json"
        grid_path.write_text(json.dumps(grid), "utf-8")
        csv_path = tmp_path / "out.csv"
        code = main(
            [
                "validate-model",
                "--grid",
                str(grid_path),
                "--pipeline-check",
                "4",
                "--out",
                str(csv_path),
            ]
        )
        assert code == 0
        assert "1/1 points within tolerance" in capsys.readouterr().out
        assert csv_path.read_text("utf-8").splitlines()[1].endswith(",ok")

    def test_failure_exits_with_validation_code(self, tmp_path, capsys, monkeypatch):
        point = ValidationPoint(0.5, 0.9, 0.1, 0.95, 0.1, 8)
        failed = PointResult(
            point=point,
            analytical=0.9,
            mc_estimate=0.5,
            mc_stderr=0.01,
            abs_diff=0.4,
            sigmas=40.0,
            pipeline_checked=0,
            pipeline_mismatches=0,
            status="fail",
        )
        monkeypatch.setattr(cli, "validate_model", lambda *a, **kw: [failed])
        code = main(["validate-model", "--trials", "10"])
        assert code == cli.VALIDATION_FAILURE
        assert "FAIL" in capsys.readouterr().err

    def test_bad_grid_file(self, tmp_path, capsys):
        bad = tmp_path / "grid.json"
        bad.write_text("[]", "utf-8")
        assert main(["validate-model", "--grid", str(bad)]) == cli.RUN_FAILURE


class TestSweep:
    def test_stdout(self, capsys, tmp_path):
        grid = {
            "axes": {
                "p_correct": [0.2, 0.8],
                "tpr": [0.9],
                "fpr": [0.1],
                "s_present": [0.95],
                "s_absent": [0.1],
                "n_total": [8],
            }
        }
        grid_path = tmp_path / "grid.json"
        grid_path.write_text(json.dumps(grid), "utf-8")
        assert main(["sweep", "--grid", str(grid_path)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("p_correct,")
        assert len(out.splitlines()) == 3

    def test_to_file(self, capsys, tmp_path):
        target = tmp_path / "sweep.csv"
        assert main(["sweep", "--out", str(target)]) == 0
        assert "wrote" in capsys.readouterr().out
        assert target.exists()
        assert len(target.read_text("utf-8").splitlines()) == 13
