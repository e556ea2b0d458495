import json
import subprocess
import sys

import pytest

from puregauss import cli
from puregauss.bounds import BoundedQueryParams, RnmNoise, rnm_pure_epsilon
from puregauss.errors import QuadratureNotConverged


@pytest.fixture
def series(tmp_path):
    out = tmp_path / "s.csv"
    assert cli.main(["synth", "--length", "40", "--n-users", "200", "--seed",
                     "3", "-o", str(out)]) == 0
    return out


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_bound_rnm(capsys):
    code, out, _ = run(capsys, "bound", "rnm", "--d", "5", "--delta-sens",
                       "0.05", "--sigma", "0.3", "--delta", "1e-5")
    assert code == 0
    payload = json.loads(out)
    expected = rnm_pure_epsilon(5, BoundedQueryParams(0, 1, 0.05),
                                RnmNoise(0.3))
    assert payload["epsilon"] == expected
    assert payload["classical"]["kind"] == "approximate"


def test_config_file_with_flag_override(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("d = 5\ndelta-sens = 0.05\nsigma = 0.9\n")
    code, out, _ = run(capsys, "bound", "rnm", "--config", str(cfg),
                       "--sigma", "0.3")
    assert code == 0
    assert json.loads(out)["sigma"] == 0.3
    assert json.loads(out)["d"] == 5


def test_bound_at_expost_range(capsys):
    code, out, _ = run(capsys, "bound", "at-expost", "--delta-sens", "1e-3",
                       "--sigma-x", "0.15", "--rho", "0.5", "--t", "1:4")
    assert code == 0
    eps = json.loads(out)["epsilon"]
    assert list(eps) == ["1", "2", "3", "4"]


def test_bound_at_rdp_condition_is_config_error(capsys):
    code, _, err = run(capsys, "bound", "at-rdp", "--delta-sens", "1e-3",
                       "--sigma-x", "0.15", "--sigma-z", "0.1", "--rho",
                       "0.5", "--alpha", "2")
    assert code == cli.EXIT_CONFIG
    assert "sqrt(3)" in err


def test_missing_seed_is_config_error(capsys):
    code, _, err = run(capsys, "synth", "--length", "10", "--n-users", "5")
    assert code == cli.EXIT_CONFIG
    assert "--seed" in err


def test_bad_config_value(capsys, tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("d = five\n")
    code, _, _ = run(capsys, "bound", "rnm", "--config", str(cfg),
                     "--delta-sens", "0.1", "--sigma", "0.3")
    assert code == cli.EXIT_CONFIG


def test_data_errors(capsys, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1\n-4\n")
    args = ["run", "fsrc", "--n-users", "10", "--sigma-x", "0.1", "--rho",
            "0.5", "--epsilon", "1", "--delta", "1e-5", "--seed", "0"]
    assert run(capsys, *args, "--input", str(bad))[0] == cli.EXIT_DATA
    assert run(capsys, *args, "--input",
               str(tmp_path / "none.csv"))[0] == cli.EXIT_DATA


def test_non_convergence_exit_code(capsys, monkeypatch):

    def boom(*args, **kwargs):
        raise QuadratureNotConverged(1.0, 2.0, 10)

    monkeypatch.setattr(cli.bounds, "rnm_pure_epsilon", boom)
    code, _, _ = run(capsys, "bound", "rnm", "--d", "3", "--delta-sens",
                     "0.1", "--sigma", "0.3")
    assert code == cli.EXIT_NONCONVERGED


@pytest.mark.parametrize("command", ["fsrc", "filter-baseline"])
def test_run_commands_write_reports(tmp_path, series, command):
    out = tmp_path / f"{command}.json"
    assert cli.main(["run", command, "--input", str(series), "--n-users",
                     "200", "--sigma-x", "0.1", "--rho", "0.5", "--epsilon",
                     "3", "--delta", "1e-4", "--seed", "1", "-o",
                     str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["config"]["n_users"] == 200
    assert report["publishable_spend"] == (command == "fsrc")


def test_experiments_emit_csv(tmp_path, series, capsys):
    code, out, _ = run(capsys, "experiment", "offline", "--input",
                       str(series), "--n-users", "200", "--sigma-grid",
                       "0.1,0.3", "--trials", "5", "--seed", "0",
                       "--mechanisms", "gaussian_pure,laplace")
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0].startswith("arm,epsilon_spent")
    assert len(lines) == 1 + 4

    code, out, _ = run(capsys, "experiment", "online", "--input", str(series),
                       "--n-users", "200", "--rho", "0.5", "--sigma-x-grid",
                       "0.1", "--epsilon", "3", "--delta", "1e-4",
                       "--trials", "2", "--seed", "0")
    assert code == 0 and len(out.strip().splitlines()) == 1 + 4

    code, out, _ = run(capsys, "experiment", "heatmap", "--delta-sens", "1e-3",
                       "--delta", "1e-5", "--sigma-x-grid", "0.1,0.2",
                       "--t-grid", "1,5", "--rho", "0.5", "--trials", "200",
                       "--seed", "0")
    assert code == 0 and len(out.strip().splitlines()) == 1 + 4


def test_simulate_stopping(capsys):
    code, out, _ = run(capsys, "simulate", "stopping", "--sigma-x", "0.15",
                       "--rho", "0.1,0.5,0.9", "--trials", "500", "--seed",
                       "2")
    assert code == 0
    rows = out.strip().splitlines()[1:]
    medians = [int(r.split(",")[5]) for r in rows]
    assert medians == sorted(medians)


def test_synth_is_byte_identical(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        cli.main(["synth", "--length", "25", "--n-users", "90", "--seed", "5",
                  "-o", str(p)])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_console_script_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "puregauss.cli", "bound", "rnm", "--d", "2",
         "--delta-sens", "0.1", "--sigma", "0.5"],
        capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "epsilon" in json.loads(proc.stdout)


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        cli.main(["bound", "nope"])
    assert info.value.code == 2
