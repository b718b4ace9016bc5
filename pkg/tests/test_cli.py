"""Tests for the main.py commands: files written, summaries and exit codes."""

import pytest
import yaml

from main import EXIT_CONFIG, EXIT_OK, EXIT_UNSTABLE, main
from spatial_rc.core import read_csv


SMALL_CONFIG = """\
experiment: small
seed: 2
threads: 1
reservoir:
  model: tanh_lattice
  rows: 3
  cols: 3
  gain_gradient: [0.5, 3.0]
  warmup: 20
signal:
  kind: random
  n: 300
  mackey_glass:
    t_end: 700.0
metrics:
  k: 5
  threshold_distance: 1.0
  washout: 50
task:
  k_max: 5
  washout: 50
  ridge: 1.0e-08
"""


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(SMALL_CONFIG)
    return path


def _run(config_path, command, out, *extra):
    return main([command, "--config", str(config_path), "--out", str(out), *extra])


def _summary(out):
    stats = {}
    for line in (out / "summary.txt").read_text().splitlines():
        name, sep, rest = line.partition(": mean=")
        if sep:
            stats[name] = float(rest.split()[0])
    return stats


class TestGenerate:
    def test_random_signal(self, config_path, tmp_path):
        out = tmp_path / "gen"
        assert _run(config_path, "generate", out, "--set", "signal.n=1500") == EXIT_OK
        meta, header, data = read_csv(out / "signal.csv")
        assert header == ["t", "random"]
        assert data.shape == (1500, 2)
        assert data[:, 1].min() >= -1.0 and data[:, 1].max() <= 1.0
        assert (out / "config.yaml").exists()

    def test_mackey_glass_header(self, config_path, tmp_path):
        out = tmp_path / "mg"
        assert _run(config_path, "generate", out, "--set", "signal.kind=mackey_glass") == EXIT_OK
        meta, _, data = read_csv(out / "signal.csv")
        assert float(meta["a"]) == 0.2
        assert float(meta["b"]) == 0.1
        assert float(meta["tau"]) == 23.0
        assert len(data) == 501

    def test_missing_config_with_seed_uses_defaults(self, tmp_path):
        out = tmp_path / "defaults"
        code = main(["generate", "--config", str(tmp_path / "absent.yaml"), "--seed", "3", "--out", str(out)])
        assert code == EXIT_OK
        _, header, data = read_csv(out / "signal.csv")
        assert header == ["t", "random"]
        assert data.shape == (1500, 2)
        assert yaml.safe_load((out / "config.yaml").read_text())["seed"] == 3

    def test_zero_length_signal(self, config_path, tmp_path, capsys):
        assert _run(config_path, "generate", tmp_path / "x", "--set", "signal.n=0") == EXIT_CONFIG
        assert "signal.n" in capsys.readouterr().err


class TestAnalyze:
    def test_writes_maps_and_is_reproducible(self, config_path, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        assert _run(config_path, "analyze", first) == EXIT_OK
        assert _run(config_path, "analyze", second) == EXIT_OK
        names = ["nl.csv", "mc.csv", "stability.csv", "nl.pgm", "mc.pgm", "stability.pgm",
                 "heatmap_ranges.yaml", "summary.txt"]
        for name in names:
            assert (first / name).read_bytes() == (second / name).read_bytes(), name
        assert (first / "config.yaml").exists()

        meta, header, data = read_csv(first / "mc.csv")
        assert header == ["node_id", "x", "y", "value"]
        assert data.shape == (9, 4)
        assert meta["metric"] == "memory_capacity"
        ranges = yaml.safe_load((first / "heatmap_ranges.yaml").read_text())
        assert set(ranges) == {"nl", "mc", "stability"}

    def test_grain_map_exported_when_grains_set(self, config_path, tmp_path):
        plain, grained = tmp_path / "plain", tmp_path / "grained"
        assert _run(config_path, "analyze", plain) == EXIT_OK
        assert not (plain / "grains.csv").exists()
        assert _run(config_path, "analyze", grained, "--set", "reservoir.grain_size=1.5") == EXIT_OK
        meta, header, data = read_csv(grained / "grains.csv")
        assert header == ["row", "col", "grain", "multiplier"]
        assert data.shape == (9, 4)
        assert float(meta["mean_grain_size"]) == 1.5

    def test_seed_changes_maps(self, config_path, tmp_path):
        assert _run(config_path, "analyze", tmp_path / "a") == EXIT_OK
        assert _run(config_path, "analyze", tmp_path / "b", "--seed", "3") == EXIT_OK
        assert (tmp_path / "a" / "nl.csv").read_bytes() != (tmp_path / "b" / "nl.csv").read_bytes()

    def test_lti_bank_summary_is_linear(self, config_path, tmp_path):
        out = tmp_path / "lti"
        code = _run(config_path, "analyze", out, "--set", "reservoir.model=lti_filter_bank",
                    "--set", "metrics.k=10")
        assert code == EXIT_OK
        assert _summary(out)["nonlinearity"] < 0.05

    def test_k_zero_rejected(self, config_path, tmp_path, capsys):
        assert _run(config_path, "analyze", tmp_path / "x", "--set", "metrics.k=0") == EXIT_CONFIG
        assert "k >= 1" in capsys.readouterr().err

    def test_unstable_regime(self, config_path, tmp_path, capsys):
        code = _run(config_path, "analyze", tmp_path / "x",
                    "--set", "reservoir.model=delay_line",
                    "--set", "reservoir.drive.input_gain=10000000.0")
        assert code == EXIT_UNSTABLE
        assert "unstable regime" in capsys.readouterr().err

    def test_missing_signal_section(self, tmp_path, capsys):
        path = tmp_path / "nosignal.yaml"
        path.write_text("seed: 1\nmetrics:\n  k: 5\n")
        assert _run(path, "analyze", tmp_path / "x") == EXIT_CONFIG
        assert "signal" in capsys.readouterr().err

    def test_broken_yaml(self, tmp_path, capsys):
        path = tmp_path / "broken.yaml"
        path.write_text("seed: 1\nsignal: {kind: random\n")
        assert _run(path, "analyze", tmp_path / "x") == EXIT_CONFIG
        assert str(path) + ":" in capsys.readouterr().err


class TestBenchmark:
    def test_table_rows(self, config_path, tmp_path):
        out = tmp_path / "bench"
        assert _run(config_path, "benchmark", out) == EXIT_OK
        lines = (out / "mse.csv").read_text().splitlines()
        assert "# mg_tau=23" in lines
        body = [line for line in lines if not line.startswith("#")]
        assert body[0] == "model,k,mse,baseline_mse"

        rows = body[1:]
        assert len(rows) == 3 * 5 + 5
        models = {row.split(",")[0] for row in rows}
        assert models == {"low", "high", "gradient", "persistence"}
        assert "mixture advantage gradient" in (out / "summary.txt").read_text()
