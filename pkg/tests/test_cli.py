"""Tests for configuration parsing and the command-line harness."""

import subprocess
import sys

import pytest

from fastslow.cli import EXIT_OK, EXIT_USAGE, EXIT_VERDICT, main
from fastslow.config import ExperimentConfig, load_config, parse_config
from fastslow.errors import ConfigError
from fastslow.presets import PRESETS

SMALL = """[experiment]
preset = hopf
epsilon = 0.2
T = 0.2
theta = 0.1
paths = 300
block_size = 64
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for key in ("CONFIG", "SEED", "WORKERS", "OUT"):
        monkeypatch.delenv("FASTSLOW_" + key, raising=False)


class TestConfig:
    def test_defaults(self):
        cfg = load_config(None)
        assert cfg == ExperimentConfig() and len(cfg.digest) == 64

    def test_digest_ignores_formatting(self):
        a = parse_config("[experiment]\npreset = hopf\nepsilon = 0.1\npaths = 500\n")
        b = parse_config("# comment\n[experiment]\n\npaths=500   ; inline\nEPSILON = 1e-1\npreset=hopf\n")
        assert a.digest == b.digest

    def test_digest_sees_values(self):
        a = parse_config("[experiment]\nepsilon = 0.1\n")
        b = parse_config("[experiment]\nepsilon = 0.2\n")
        assert a.digest != b.digest

    def test_field_and_line_reported(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[experiment]\npreset = hopf\ntheta = 0.9\n")
        assert info.value.line == 3 and info.value.field == "theta"
        assert str(info.value).startswith("line 3, field 'theta'")

    def test_unparseable_value(self):
        with pytest.raises(ConfigError) as info:
            parse_config("[experiment]\n\npaths = many\n")
        assert info.value.line == 3 and info.value.field == "paths"

    @pytest.mark.parametrize("text", [
        "[experiment]\nbogus = 1\n",
        "[other]\nepsilon = 0.1\n",
        "epsilon = 0.1\n",
        "[experiment]\neps_grid = 0.1, 0.2\n",
        "[experiment]\nepsilon = 0\n",
    ])
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "absent.ini"))


class TestPresetCommands:
    def test_list(self, capsys):
        assert main(["preset", "list"]) == EXIT_OK
        assert capsys.readouterr().out.split() == list(PRESETS)

    def test_show(self, capsys):
        assert main(["preset", "show", "hopf"]) == EXIT_OK
        assert "expected.a_bar" in capsys.readouterr().out

    def test_show_unknown(self):
        assert main(["preset", "show", "nope"]) == EXIT_USAGE


class TestExitCodes:
    def test_bad_command(self):
        assert main(["frobnicate"]) == EXIT_USAGE

    def test_bad_config(self, tmp_path, capsys):
        cfg = write(tmp_path, "[experiment]\npreset = hopf\ntheta = 0.9\n")
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_USAGE
        assert "line 3, field 'theta'" in capsys.readouterr().err

    def test_unknown_preset(self, tmp_path):
        cfg = write(tmp_path, "[experiment]\npreset = nope\n")
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path)]) == EXIT_USAGE

    def test_converge_needs_three_eps(self, tmp_path):
        cfg = write(tmp_path, SMALL + "eps_grid = 0.1\n")
        assert main(["converge", "--config", cfg, "--out", str(tmp_path)]) == EXIT_USAGE

    def test_wasserstein_needs_two_eps(self, tmp_path):
        cfg = write(tmp_path, SMALL + "eps_grid = 0.1\n")
        assert main(["wasserstein", "--config", cfg, "--out", str(tmp_path)]) == EXIT_USAGE

    def test_bad_workers(self, tmp_path):
        cfg = write(tmp_path, SMALL)
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path), "--workers", "0"]) == EXIT_USAGE

    def test_hormander_satisfied(self, tmp_path, capsys):
        cfg = write(tmp_path, "[experiment]\npreset = so4_hypoelliptic\n")
        assert main(["hormander", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
        assert "satisfied, dim 3" in capsys.readouterr().out
        assert "result = satisfied, dim 3" in (tmp_path / "hormander.txt").read_text()


class TestOutputs:
    def run(self, tmp_path, sub, *extra, config=SMALL):
        cfg = write(tmp_path, config)
        out = tmp_path / sub
        assert main(["simulate", "--config", cfg, "--out", str(out), *extra]) == EXIT_OK
        return (out / "simulate.csv").read_bytes()

    def test_header(self, tmp_path):
        text = self.run(tmp_path, "a").decode()
        cfg = parse_config(SMALL)
        assert text.startswith("# fastslow 0.1.0\n# command = simulate\n")
        assert f"# config_digest = {cfg.digest}" in text and "# master_seed = 0" in text

    def test_worker_count_invariance(self, tmp_path):
        a = self.run(tmp_path, "w1", "--workers", "1")
        b = self.run(tmp_path, "w4", "--workers", "4")
        c = self.run(tmp_path, "w3", "--workers", "3")
        assert a == b == c

    def test_seed_changes_output(self, tmp_path):
        assert self.run(tmp_path, "s1", "--seed", "1") != self.run(tmp_path, "s2", "--seed", "2")

    def test_env_overrides(self, tmp_path, monkeypatch):
        direct = self.run(tmp_path, "flag", "--seed", "5")
        monkeypatch.setenv("FASTSLOW_SEED", "5")
        monkeypatch.setenv("FASTSLOW_WORKERS", "2")
        monkeypatch.setenv("FASTSLOW_CONFIG", write(tmp_path, SMALL, "env.ini"))
        monkeypatch.setenv("FASTSLOW_OUT", str(tmp_path / "env"))
        assert main(["simulate"]) == EXIT_OK
        assert (tmp_path / "env" / "simulate.csv").read_bytes() == direct

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        direct = self.run(tmp_path, "flag", "--seed", "5")
        monkeypatch.setenv("FASTSLOW_SEED", "9")
        assert self.run(tmp_path, "both", "--seed", "5") == direct

    def test_invalid_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FASTSLOW_SEED", "abc")
        assert main(["simulate", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_console_script(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "fastslow.cli", "preset", "list"], capture_output=True, text=True)
        assert res.returncode == 0 and "hopf" in res.stdout
