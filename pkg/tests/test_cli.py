"""Command-line interface: commands, exit codes, file products."""

import csv
import shutil
from pathlib import Path

import pytest

from morphevo.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_OK, build_parser, main

SMOKE_TOML = """
[run]
env = "cartpole_vary"
max_generations = 5
master_seed = 17
episode_steps = 20

[schedule]
kind = "beta"
"""


@pytest.fixture
def smoke_config(tmp_path):
    path = tmp_path / "smoke.toml"
    path.write_text(SMOKE_TOML)
    return path


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


class TestTrain:
    def test_writes_expected_row_count(self, smoke_config, tmp_path):
        out = tmp_path / "run"
        code = main(["train", "--config", str(smoke_config), "--output", str(out), "--quiet"])
        assert code == EXIT_OK
        assert len(read_rows(out / "generations.csv")) == 5

    def test_override_changes_generations(self, smoke_config, tmp_path):
        out = tmp_path / "run"
        main([
            "train", "--config", str(smoke_config), "--output", str(out),
            "--override", "run.max_generations=3", "--quiet",
        ])
        assert len(read_rows(out / "generations.csv")) == 3

    def test_missing_env_key_exits_2_naming_env(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text("[run]\nmax_generations = 2\n")
        code = main(["train", "--config", str(bad), "--output", str(tmp_path / "o")])
        assert code == EXIT_CONFIG
        assert "env" in capsys.readouterr().err

    def test_unknown_key_exits_2(self, smoke_config, tmp_path, capsys):
        code = main([
            "train", "--config", str(smoke_config), "--output", str(tmp_path / "o"),
            "--override", "run.warp_speed=9",
        ])
        assert code == EXIT_CONFIG
        assert "warp_speed" in capsys.readouterr().err

    def test_same_seed_byte_identical(self, smoke_config, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["train", "--config", str(smoke_config), "--output", str(out_a), "--quiet"])
        main(["train", "--config", str(smoke_config), "--output", str(out_b), "--quiet"])
        assert (out_a / "generations.csv").read_bytes() == (out_b / "generations.csv").read_bytes()

    def test_refuses_overwrite_without_force(self, smoke_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--config", str(smoke_config), "--output", str(out), "--quiet"])
        code = main(["train", "--config", str(smoke_config), "--output", str(out), "--quiet"])
        assert code == EXIT_CONFIG
        assert "--force" in capsys.readouterr().err
        code = main([
            "train", "--config", str(smoke_config), "--output", str(out), "--quiet", "--force",
        ])
        assert code == EXIT_OK

    def test_progress_lines_go_to_stderr(self, smoke_config, tmp_path, capsys):
        main(["train", "--config", str(smoke_config), "--output", str(tmp_path / "r")])
        captured = capsys.readouterr()
        assert "gen 0:" in captured.err
        assert captured.out == ""


class TestBatchEvaluateCompareReport:
    @pytest.fixture
    def batch_dir(self, smoke_config, tmp_path):
        out = tmp_path / "batch"
        code = main([
            "batch", "--config", str(smoke_config), "--output", str(out), "--runs", "2",
        ])
        assert code == EXIT_OK
        return out

    def test_batch_creates_run_directories(self, batch_dir):
        assert (batch_dir / "run_000" / "generations.csv").exists()
        assert (batch_dir / "run_001" / "generations.csv").exists()
        assert (batch_dir / "batch.json").exists()

    def test_evaluate_train_set(self, batch_dir):
        code = main(["evaluate", "--batch", str(batch_dir), "--set", "train"])
        assert code == EXIT_OK
        rows = read_rows(batch_dir / "evaluation_train.csv")
        assert len(rows) == 2
        assert rows[0]["set"] == "train"
        float(rows[0]["mean_cost"])

    def test_evaluate_missing_archive_exits_3(self, batch_dir, capsys):
        shutil.rmtree(batch_dir / "run_001" / "archive")
        code = main(["evaluate", "--batch", str(batch_dir), "--set", "test"])
        assert code == EXIT_MISSING
        assert "run_001" in capsys.readouterr().err

    def test_evaluate_nonexistent_batch_exits_3(self, tmp_path):
        assert main(["evaluate", "--batch", str(tmp_path / "ghost"), "--set", "train"]) == EXIT_MISSING

    def test_compare_batch_with_itself(self, batch_dir, tmp_path):
        report = tmp_path / "report.csv"
        code = main([
            "compare", "--batch-a", str(batch_dir), "--batch-b", str(batch_dir),
            "--metric", "test_mean", "--output", str(report),
        ])
        assert code == EXIT_OK
        rows = read_rows(report)
        assert len(rows) == 1
        assert float(rows[0]["p_value"]) == 1.0
        assert rows[0]["stars"] == ""

    def test_report_continuous_schedule_skips_frequency(self, batch_dir, tmp_path, capsys):
        out = tmp_path / "report"
        code = main(["report", "--batch", str(batch_dir), "--output", str(out)])
        assert code == EXIT_OK
        err = capsys.readouterr().err
        assert "skipped" in err
        assert not (out / "heatmap_frequency_batch.svg").exists()
        assert (out / "heatmap_performance_batch.svg").exists()
        assert (out / "heatmap_performance_batch.csv").exists()
        rows = read_rows(out / "summary.csv")
        assert rows[0]["schedule"] == "beta"

    def test_report_bandit_batch_emits_frequency(self, smoke_config, tmp_path):
        out = tmp_path / "bbatch"
        main([
            "batch", "--config", str(smoke_config), "--output", str(out), "--runs", "1",
            "--override", "schedule.kind=bandit",
        ])
        rep = tmp_path / "brep"
        code = main(["report", "--batch", str(out), "--output", str(rep)])
        assert code == EXIT_OK
        assert (rep / "heatmap_frequency_bbatch.svg").exists()
        assert (rep / "heatmap_frequency_bbatch.csv").exists()


class TestListingAndHelp:
    def test_list_envs(self, capsys):
        assert main(["list-envs"]) == EXIT_OK
        out = capsys.readouterr().out
        for name in ("cartpole_vary", "reacher_vary", "acrobot_vary"):
            assert name in out

    def test_list_schedules(self, capsys):
        assert main(["list-schedules"]) == EXIT_OK
        out = capsys.readouterr().out
        for kind in ("discrete_random", "beta", "bandit"):
            assert kind in out

    def test_help_enumerates_config_keys(self):
        text = build_parser().format_help()
        for key in ("run.env", "run.max_generations", "schedule.kind",
                    "schedule.gamma", "xnes.population", "xnes.sigma0"):
            assert key in text
