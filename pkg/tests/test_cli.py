"""Tests for the command-line front end.

Each subcommand runs in-process through main(argv). Exit codes follow the
documented mapping: 0 success, 2 configuration, 3 numerical, 4 file I/O.
"""

import csv
import io
import json

import numpy as np
import pytest

from fedntc.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from fedntc.oracle import fed_rd
from fedntc.sources import Dataset, save_raw_f64

TINY = """
regime = "local"
[source]
latent_dim = 2
ambient_dim = 2
clients = 2
samples_per_client = 16
eval_samples_per_client = 16
[model]
latent_channels = 2
hidden_widths = [4]
[training]
rounds = 2
lambdas = [0.5]
batch_size = 4
entropy_steps = 2
transform_steps = 2
[seeds]
master = 33
[eval]
precision = 12
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(TINY)
    return path


@pytest.fixture
def labeled_dataset(tmp_path):
    rng = np.random.default_rng(0)
    ds = Dataset(rng.standard_normal((40, 3)), np.arange(40) % 4)
    path = tmp_path / "toy.fnds"
    save_raw_f64(path, ds)
    return path


class TestOracleCommand:
    def test_stdout_matches_analytic_curve(self, capsys):
        code = main(
            ["oracle", "--variances", "1,4;2,2", "--dmin", "0.2", "--dmax", "1.0",
             "--points", "5"]
        )
        assert code == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
        assert len(rows) == 5
        for row in rows:
            d = float(row["distortion"])
            expect = fed_rd([np.array([1.0, 4.0]), np.array([2.0, 2.0])], d).rate
            assert float(row["rate_bits_per_dim"]) == pytest.approx(expect, abs=1e-9)

    def test_out_file(self, tmp_path, capsys):
        out = tmp_path / "curve.csv"
        code = main(
            ["oracle", "--variances", "1,4", "--dmin", "0.1", "--dmax", "0.5",
             "--points", "3", "--out", str(out)]
        )
        assert code == EXIT_OK
        assert "wrote" in capsys.readouterr().out
        assert out.read_text().startswith("distortion,rate_bits_per_dim")

    def test_bad_variances_is_config_error(self, capsys):
        assert main(
            ["oracle", "--variances", "1,spam", "--dmin", "0.1", "--dmax", "1.0"]
        ) == EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err

    def test_bad_grid_is_config_error(self):
        assert main(
            ["oracle", "--variances", "1,4", "--dmin", "0.5", "--dmax", "0.5"]
        ) == EXIT_CONFIG


class TestGradcheckCommand:
    def test_passes_and_reports_groups(self, capsys):
        assert main(["gradcheck", "--seed", "1"]) == EXIT_OK
        out = capsys.readouterr().out
        for group in ("analysis", "synthesis", "entropy"):
            assert group in out
        assert "all gradients match" in out


class TestPartitionCommand:
    def test_summary_lines(self, labeled_dataset, capsys):
        code = main(
            ["partition", "--data", str(labeled_dataset), "--format", "raw-f64",
             "--clients", "4", "--shards-per-client", "2", "--seed", "1"]
        )
        assert code == EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        entries = [json.loads(l) for l in lines]
        assert len(entries) == 4
        assert all(e["samples"] == 10 for e in entries)

    def test_json_plan_is_complete(self, labeled_dataset, tmp_path, capsys):
        plan_path = tmp_path / "plan.json"
        code = main(
            ["partition", "--data", str(labeled_dataset), "--format", "raw-f64",
             "--clients", "4", "--json", str(plan_path)]
        )
        assert code == EXIT_OK
        plan = json.loads(plan_path.read_text())
        merged = sorted(i for a in plan["assignments"] for i in a)
        assert merged == list(range(40))

    def test_trim_handles_indivisible_totals(self, tmp_path, capsys):
        ds = Dataset(np.zeros((41, 2)), np.arange(41) % 4)
        path = tmp_path / "odd.fnds"
        save_raw_f64(path, ds)
        args = ["partition", "--data", str(path), "--format", "raw-f64",
                "--clients", "4"]
        assert main(args) == EXIT_IO  # 41 does not shard evenly
        capsys.readouterr()
        assert main(args + ["--trim"]) == EXIT_OK

    def test_unlabeled_dataset_is_io_error(self, tmp_path, capsys):
        path = tmp_path / "plain.fnds"
        save_raw_f64(path, Dataset(np.zeros((8, 2))))
        assert main(
            ["partition", "--data", str(path), "--format", "raw-f64", "--clients", "2"]
        ) == EXIT_IO
        assert "file error" in capsys.readouterr().err

    def test_missing_file_is_io_error(self, tmp_path):
        assert main(
            ["partition", "--data", str(tmp_path / "nope.bin"), "--format", "raw-f64",
             "--clients", "2"]
        ) == EXIT_IO


class TestTrainAndEval:
    def test_train_writes_run_directory(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["train", "--config", str(tiny_config), "--out", str(out)])
        assert code == EXIT_OK
        stdout = capsys.readouterr().out
        assert "wrote" in stdout
        row = json.loads(stdout.strip().splitlines()[0])
        assert row["regime"] == "local"
        assert (out / "results.csv").exists()
        assert (out / "config.toml").read_text() == TINY

    def test_regime_override(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(
            ["train", "--config", str(tiny_config), "--out", str(out),
             "--regime", "fed"]
        )
        assert code == EXIT_OK
        row = json.loads(capsys.readouterr().out.strip().splitlines()[0])
        assert row["regime"] == "fed"

    def test_eval_reads_back_checkpoint(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--config", str(tiny_config), "--out", str(out)])
        capsys.readouterr()
        code = main(
            ["eval", "--config", str(tiny_config),
             "--checkpoint", str(out / "ckpt_local_lam0.5_seed33.fntc"),
             "--lam", "0.5"]
        )
        assert code == EXIT_OK
        result = json.loads(capsys.readouterr().out)
        assert result["regime"] == "local"
        assert result["R_n"] > 0

    def test_eval_missing_checkpoint_is_io_error(self, tiny_config, tmp_path):
        assert main(
            ["eval", "--config", str(tiny_config),
             "--checkpoint", str(tmp_path / "nope.fntc"), "--lam", "0.5"]
        ) == EXIT_IO

    def test_bad_config_is_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.toml"
        bad.write_text('regime = "warp"\n[seeds]\nmaster = 1\n')
        assert main(["train", "--config", str(bad)]) == EXIT_CONFIG
        assert "configuration error" in capsys.readouterr().err


class TestPlotCommand:
    def test_renders_svg_and_points_csv(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--config", str(tiny_config), "--out", str(out)])
        capsys.readouterr()
        curve = tmp_path / "oracle.csv"
        main(["oracle", "--variances", "1,4", "--dmin", "0.1", "--dmax", "1.0",
              "--points", "5", "--out", str(curve)])
        capsys.readouterr()
        svg = tmp_path / "rd.svg"
        code = main(
            ["plot", "--results", str(out / "results.csv"),
             "--oracle", str(curve), "--out", str(svg)]
        )
        assert code == EXIT_OK
        text = svg.read_text()
        assert text.startswith("<svg")
        assert "local" in text  # legend entry for the regime series
        mirror = tmp_path / "rd_points.csv"
        assert mirror.exists()
        rows = list(csv.DictReader(io.StringIO(mirror.read_text())))
        assert {"series", "distortion", "rate_bits_per_dim"} <= set(rows[0])

    def test_malformed_results_is_io_error(self, tmp_path):
        bad = tmp_path / "results.csv"
        bad.write_text("alpha,beta\n1,2\n")
        assert main(
            ["plot", "--results", str(bad), "--out", str(tmp_path / "x.svg")]
        ) == EXIT_IO
