"""Tests for the command-line entry point (in-process via main)."""

import json
import os

import pytest

from lfpf.cli import main

CONFIG_TOML = """
label = "cli-case"

[model]
A = [[-1.0]]
B = [[1.0]]
C = [[1.0]]
mu0 = [0.0]
P0 = [[1.0]]

[grid]
dt = 1e-3
T = 0.1

[filter]
preset = "slfpf"

[ensemble]
N = 2000
seed = 21
"""

REPORT_FILES = ("summary.json", "ensemble.csv", "kalman.csv", "transport.csv", "cost.csv")
FIGURE_FILES = ("mean_tracking.png", "covariance_trace.png", "error_trace.png", "cost_trace.png")


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "case.toml"
    path.write_text(CONFIG_TOML)
    return str(path)


def test_simulate_writes_report_and_figures(config_path, tmp_path, capsys):
    out_dir = str(tmp_path / "out")
    code = main(["simulate", "--config", config_path, "--out", out_dir])
    assert code == 0
    for name in REPORT_FILES + FIGURE_FILES:
        assert os.path.exists(os.path.join(out_dir, name))
    lines = capsys.readouterr().out.strip().split("\n")
    verdicts = [line for line in lines if line.startswith(("PASS", "FAIL"))]
    assert verdicts and all(line.startswith("PASS") for line in verdicts)
    # every written file is echoed for scripting
    for name in REPORT_FILES + FIGURE_FILES:
        assert any(line.endswith(name) for line in lines)


def test_simulate_no_plots(config_path, tmp_path):
    out_dir = str(tmp_path / "out")
    code = main(["simulate", "--config", config_path, "--out", out_dir, "--no-plots"])
    assert code == 0
    for name in REPORT_FILES:
        assert os.path.exists(os.path.join(out_dir, name))
    assert not [name for name in os.listdir(out_dir) if name.endswith(".png")]


def test_simulate_nonzero_exit_on_failed_check(config_path, tmp_path, capsys):
    # two particles cannot meet the 0.1 covariance tolerance
    out_dir = str(tmp_path / "out")
    code = main(["simulate", "--config", config_path, "--out", out_dir,
                 "--particles", "2", "--no-plots"])
    assert code == 1
    assert "FAIL cov_rel_err_at_T" in capsys.readouterr().out
    with open(os.path.join(out_dir, "summary.json")) as fh:
        summary = json.load(fh)
    assert summary["config_echo"]["overrides"]["particles"] == 2


def test_kalman_prints_csv(config_path, capsys):
    code = main(["kalman", "--config", config_path])
    assert code == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "t,mu_1,P_11"
    assert len(lines) == 1 + 101
    t, mu, p = (float(x) for x in lines[-1].split(","))
    assert abs(t - 0.1) < 1e-12 and p > 0


def test_kalman_out_flag_writes_file(config_path, tmp_path, capsys):
    out_dir = str(tmp_path / "oracle")
    code = main(["kalman", "--config", config_path, "--out", out_dir])
    assert code == 0
    path = os.path.join(out_dir, "kalman.csv")
    assert capsys.readouterr().out.strip() == path
    assert open(path).readline().strip() == "t,mu_1,P_11"


def test_cost_prints_trace(config_path, capsys):
    code = main(["cost", "--config", config_path])
    assert code == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert lines[0] == "t,L"
    assert len(lines) == 1 + 101
    values = [float(line.split(",")[1]) for line in lines[1:]]
    assert all(v >= 0.0 for v in values)


def test_dt_override_changes_row_count(config_path, capsys):
    code = main(["kalman", "--config", config_path, "--dt", "2e-3"])
    assert code == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert len(lines) == 1 + 51


def test_closed_stdout_pipe_exits_quietly(config_path, monkeypatch):
    import sys

    class ClosedPipe:
        def write(self, *_):
            raise BrokenPipeError

        def flush(self):
            pass

    monkeypatch.setattr(sys, "stdout", ClosedPipe())
    assert main(["kalman", "--config", config_path]) == 141


def test_missing_config_flag_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["nosuch"])
    assert info.value.code == 2
