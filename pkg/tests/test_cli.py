import json
from unittest.mock import MagicMock, patch

import pytest
from click.testing import CliRunner

from nodal_forge.cli import main, parse_key_value_arg
from nodal_forge.oracle import OracleResult
from nodal_forge.utils import EigenConvergenceError, ScenarioError, ScenarioRunError


@pytest.fixture
def runner():
    try:
        return CliRunner(mix_stderr=False)
    except TypeError:
        # click >= 8.2 always keeps stderr apart
        return CliRunner()


def _result(**verdicts):
    verdicts = verdicts or {"mesh_audit": True, "census": True}
    return MagicMock(verdicts=verdicts, passed=all(verdicts.values()))


def test_parse_key_value_arg(tmp_path):
    """Test overrides are parsed as YAML, with @file references loaded."""
    assert parse_key_value_arg("l=2") == ("l", 2)
    assert parse_key_value_arg("tolerances.gap_min=0.1") == ("tolerances.gap_min", 0.1)
    assert parse_key_value_arg("model=torus") == ("model", "torus")
    assert parse_key_value_arg("eps_list=[0.2, 0.1]") == ("eps_list", [0.2, 0.1])
    collars = tmp_path / "collars.yaml"
    collars.write_text("- sigma_model: sphere2\n  r: 0.3\n")
    assert parse_key_value_arg(f"collars=@{collars}") == ("collars", [{"sigma_model": "sphere2", "r": 0.3}])
    with pytest.raises(ValueError):
        parse_key_value_arg("refinement")
    with pytest.raises(IOError):
        parse_key_value_arg(f"collars=@{tmp_path / 'missing.yaml'}")


@patch('nodal_forge.cli.render_summary', return_value="# summary")
@patch('nodal_forge.cli.run_lab')
def test_run_prints_summary(mock_run_lab, mock_summary, runner):
    """Test a passing run prints the summary and exits 0."""
    mock_run_lab.return_value = _result()
    result = runner.invoke(main, ["run", "main_s3"])
    assert result.exit_code == 0
    assert result.stdout.strip() == "# summary"
    args, kwargs = mock_run_lab.call_args
    assert args == ("main_s3", {})
    assert kwargs["out"] is None


@patch('nodal_forge.cli.render_summary', return_value="# summary")
@patch('nodal_forge.cli.run_lab')
def test_run_collects_overrides(mock_run_lab, mock_summary, runner):
    """Test options and key=value pairs become scenario overrides."""
    mock_run_lab.return_value = _result()
    result = runner.invoke(main, [
        "run", "payne_ball", "--eps", "0.2", "--eps", "0.1", "--refine", "1", "--seed", "5",
        "tolerances.gap_min=0.02", "collars.0.layers=8",
    ])
    assert result.exit_code == 0
    overrides = mock_run_lab.call_args[0][1]
    assert overrides == {
        "tolerances.gap_min": 0.02,
        "collars.0.layers": 8,
        "eps_list": [0.2, 0.1],
        "refinement": 1,
        "seed": 5,
    }


@patch('nodal_forge.cli.render_summary')
@patch('nodal_forge.cli.run_lab')
def test_run_with_out_directory(mock_run_lab, mock_summary, runner, tmp_path):
    """Test --out passes the directory through and prints nothing."""
    mock_run_lab.return_value = _result()
    out = tmp_path / "results"
    result = runner.invoke(main, ["run", "main_s3", "--out", str(out), "--emit-mesh", "--name", "trial",
                                  "--logdir", str(tmp_path / "logs")])
    assert result.exit_code == 0
    assert result.stdout == ""
    assert out.is_dir()
    kwargs = mock_run_lab.call_args[1]
    assert kwargs["out"] == str(out)
    assert kwargs["emit_mesh"] is True
    assert kwargs["emit_nodal"] is False
    assert kwargs["emit_operators"] is False
    assert kwargs["name"] == "trial"
    mock_summary.assert_not_called()


@patch('nodal_forge.cli.render_summary', return_value="# summary")
@patch('nodal_forge.cli.run_lab')
def test_failed_verdict_exit_code(mock_run_lab, mock_summary, runner):
    """Test a completed run with a failed verdict exits 2 and names the verdict."""
    mock_run_lab.return_value = _result(mesh_audit=True, census=False)
    result = runner.invoke(main, ["run", "main_s3"])
    assert result.exit_code == 2
    assert "Failed verdicts: census" in result.stderr


@patch('nodal_forge.cli.run_lab')
def test_quiet_failed_run(mock_run_lab, runner):
    """Test --quiet keeps stdout and stderr empty even on a failed verdict."""
    mock_run_lab.return_value = _result(census=False)
    result = runner.invoke(main, ["run", "main_s3", "--quiet"])
    assert result.exit_code == 2
    assert result.stdout == ""
    assert result.stderr == ""


@patch('nodal_forge.cli.render_summary', return_value="# summary")
@patch('nodal_forge.cli.run_lab')
def test_verbose_reports_progress(mock_run_lab, mock_summary, runner):
    """Test --verbose writes [INFO] lines to stderr, including the verdicts."""
    def fake_run(scenario, overrides, **kwargs):
        kwargs["echo"]("eps=0.2: guard=pass")
        return _result()

    mock_run_lab.side_effect = fake_run
    result = runner.invoke(main, ["run", "main_s3", "--verbose", "l=1"])
    assert result.exit_code == 0
    assert "[INFO] Override: l=1" in result.stderr
    assert "[INFO] eps=0.2: guard=pass" in result.stderr
    assert "[INFO] census: pass" in result.stderr
    assert "[INFO]" not in result.stdout


def test_verbose_and_quiet_conflict(runner):
    """Test --verbose and --quiet together are rejected."""
    result = runner.invoke(main, ["run", "main_s3", "--verbose", "--quiet"])
    assert result.exit_code == 1
    assert "cannot be used together" in result.stderr


def test_invalid_override(runner):
    """Test a pair without '=' is rejected."""
    result = runner.invoke(main, ["run", "main_s3", "refinement"])
    assert result.exit_code == 1
    assert "Invalid key-value pair" in result.stderr


@patch('nodal_forge.cli.run_lab', side_effect=ScenarioError("eps_list", "must be strictly decreasing"))
def test_scenario_error(mock_run_lab, runner):
    """Test configuration errors exit 1 with the field named."""
    result = runner.invoke(main, ["run", "main_s3", "--eps", "0.1", "--eps", "0.2"])
    assert result.exit_code == 1
    assert "eps_list" in result.stderr


@patch('nodal_forge.cli.run_lab')
def test_run_error_with_traceback(mock_run_lab, runner):
    """Test module failures exit 1 and show the cause's traceback with --verbose."""
    cause = EigenConvergenceError("LOBPCG did not reach tol")
    mock_run_lab.side_effect = ScenarioRunError("main_s3", 0.05, cause)
    result = runner.invoke(main, ["run", "main_s3", "--verbose"])
    assert result.exit_code == 1
    assert "at eps=0.05" in result.stderr
    assert "EigenConvergenceError" in result.stderr


@patch('nodal_forge.cli.run_lab', side_effect=KeyboardInterrupt)
def test_interrupt(mock_run_lab, runner):
    """Test an interrupted run exits 130."""
    result = runner.invoke(main, ["run", "main_s3"])
    assert result.exit_code == 130
    assert "cancelled" in result.stderr


@patch('nodal_forge.cli.run_lab', side_effect=RuntimeError("boom"))
def test_unexpected_error(mock_run_lab, runner):
    """Test anything else is reported as unexpected."""
    result = runner.invoke(main, ["run", "main_s3"])
    assert result.exit_code == 1
    assert "An unexpected error occurred: boom" in result.stderr


@patch('nodal_forge.cli.check_oracle')
def test_oracle_command(mock_check, runner):
    """Test oracle results are printed as JSON and failures exit 2."""
    mock_check.return_value = OracleResult("cayley-menger", True, {"triangle": 0.4330127})
    result = runner.invoke(main, ["oracle", "cayley-menger"])
    assert result.exit_code == 0
    assert json.loads(result.stdout)["passed"] is True

    mock_check.return_value = OracleResult("flat-torus", False, {"order": 1.2})
    result = runner.invoke(main, ["oracle", "flat-torus", "--quiet"])
    assert result.exit_code == 2
    assert result.stdout == ""


def test_oracle_rejects_unknown_name(runner):
    """Test click refuses an oracle name outside the choices."""
    result = runner.invoke(main, ["oracle", "bogus"])
    assert result.exit_code == 2
    assert "bogus" in result.stderr


def test_version(runner):
    """Test the version option."""
    with patch('importlib.metadata.version', return_value="0.1.0"):
        result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0


@patch('nodal_forge.cli.render_summary')
@patch('nodal_forge.cli.run_lab')
def test_run_emit_operators(mock_run_lab, mock_summary, runner, tmp_path):
    """Test --emit-operators is handed to the run."""
    mock_run_lab.return_value = _result()
    result = runner.invoke(main, ["run", "main_s3", "--out", str(tmp_path), "--emit-operators"])
    assert result.exit_code == 0
    assert mock_run_lab.call_args[1]["emit_operators"] is True
