import csv
import subprocess
import sys

import pytest

from melanprager.cli import EXIT_INPUT, EXIT_INVARIANT, EXIT_OK, EXIT_SOLVER, RunReport, main


def test_run_reports_and_writes_manifest(tmp_path, capsys):
    assert main(["run", "zero", "--output-dir", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr()
    assert "scenario   zero" in out.out
    assert "PASS  yield constraint" in out.out
    assert (tmp_path / "energy.csv").exists()
    assert out.err == ""


def test_quiet_suppresses_report(tmp_path, capsys):
    assert main(["run", "zero", "--quiet", "--output-dir", str(tmp_path)]) == EXIT_OK
    assert capsys.readouterr().out == ""


def test_missing_scenario_is_bad_input(capsys):
    assert main(["run", "missing.toml"]) == EXIT_INPUT
    err = capsys.readouterr().err
    assert "missing.toml" in err


@pytest.mark.parametrize("argv", [["run", "zero", "--frobnicate"], ["explode"], []])
def test_usage_errors_exit_4(argv, capsys):
    assert main(argv) == EXIT_INPUT
    assert "usage" in capsys.readouterr().err


def test_converge_writes_one_row_per_level(tmp_path, capsys):
    assert main(["converge", "viscoelastic", "--levels", "3", "--output-dir", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert list(rows[0]) == ["level", "dt", "diff_v", "diff_sigma", "diff_alpha", "sigma_gap"]
    assert main(["converge", "viscoelastic", "--levels", "1", "--output-dir", str(tmp_path)]) == EXIT_INPUT


@pytest.mark.slow
def test_converge_flagship_three_levels(tmp_path):
    assert main(["converge", "flagship", "--levels", "3", "--quiet", "--output-dir", str(tmp_path)]) == EXIT_OK
    with open(tmp_path / "convergence.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 3


def test_mpoint_writes_curve(tmp_path, capsys):
    assert main(["mpoint", "bauschinger", "--output-dir", str(tmp_path)]) == EXIT_OK
    assert "reverse yield gap" in capsys.readouterr().out
    header = (tmp_path / "mpoint.csv").read_text().splitlines()[0]
    assert header.startswith("t,strain_0")


def test_check_passes_on_correct_build(capsys):
    assert main(["check", "--seed", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and "checks passed" in out


def test_invalid_scenario_file_exit_4(tmp_path, capsys):
    p = tmp_path / "s.toml"
    p.write_text('name = "x"\n[mesh]\nnx = 2\n[material]\nE = 1.0\nnu = 0.3\neta = 0.1\na = 0.1\n'
                 '[time]\nT = -1.0\nN = 3\n')
    assert main(["run", str(p)]) == EXIT_INPUT
    assert "T > 0" in capsys.readouterr().err


def test_solver_failure_exit_3(monkeypatch, capsys):
    import melanprager.cli as cli
    from melanprager.step import ConvergenceError

    def fail(*args, **kwargs):
        raise ConvergenceError("CG did not converge", 1.0, 5)

    monkeypatch.setattr(cli, "run", fail)
    assert main(["run", "zero"]) == EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err


def test_constraint_violation_exit_2(monkeypatch, capsys):
    import melanprager.cli as cli
    from melanprager.step import ConstraintViolation

    def fail(*args, **kwargs):
        raise ConstraintViolation("step 3: cell 0 violates the yield constraint", 3, 0, 1.0)

    monkeypatch.setattr(cli, "run", fail)
    assert main(["run", "zero"]) == EXIT_INVARIANT
    assert "step 3" in capsys.readouterr().err


def test_run_report_format():
    rep = RunReport("s", 3, 0.5, {"m": (False, "bad")}, ["a.csv"])
    assert not rep.passed
    assert "FAIL  m" in rep.format() and "a.csv" in rep.format()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "melanprager", "run", "nowhere.toml"], capture_output=True, text=True)
    assert proc.returncode == EXIT_INPUT
    assert proc.stdout == "" and "nowhere.toml" in proc.stderr
