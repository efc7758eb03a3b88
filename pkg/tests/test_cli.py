import json
import subprocess
import sys
from pathlib import Path
from unittest.mock import MagicMock, patch

from click.testing import CliRunner

from src import experiments
from src.cli import cli
from src.reports import ExperimentConfig, ExperimentReport, StatisticResult

ROOT = Path(__file__).resolve().parents[1]


def _invoke(*args):
    return CliRunner().invoke(cli, list(args))


def test_wg_table_writes_report(tmp_path):
    result = _invoke("--out", str(tmp_path), "wg-table", "--d", "10")
    assert result.exit_code == 0, result.output
    assert "✅ closed_form:wg:id" in result.output
    raw = json.loads((tmp_path / "wg_table.json").read_text())
    assert raw["config"]["params"] == {"p": 2, "d": 10, "kind": "unitary"}
    assert raw["config"]["out"] == str(tmp_path)
    assert (tmp_path / "wg_table_statistics.csv").exists()


def test_reruns_are_byte_identical(tmp_path):
    _invoke("--out", str(tmp_path), "axioms-check", "--p-max", "3")
    first = (tmp_path / "axioms_check.json").read_bytes()
    _invoke("--out", str(tmp_path), "axioms-check", "--p-max", "3")
    assert (tmp_path / "axioms_check.json").read_bytes() == first
    assert b"wall_time" not in first


def test_timing_flag_records_wall_time(tmp_path):
    result = _invoke("--out", str(tmp_path), "--timing", "wg-table", "--kind", "orthogonal")
    assert result.exit_code == 0, result.output
    assert json.loads((tmp_path / "wg_table.json").read_text())["wall_time"] >= 0


def test_config_file_supplies_defaults(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"scenario": "wg-table", "out": str(tmp_path / "from_file"), "params": {"d": 12}}))
    result = _invoke("--config", str(config), "wg-table")
    assert result.exit_code == 0, result.output
    raw = json.loads((tmp_path / "from_file" / "wg_table.json").read_text())
    assert raw["config"]["params"]["d"] == 12

    result = _invoke("--config", str(config), "--out", str(tmp_path), "wg-table", "--d", "11")
    assert result.exit_code == 0, result.output
    assert json.loads((tmp_path / "wg_table.json").read_text())["config"]["params"]["d"] == 11


def test_bad_dims_is_a_usage_error(tmp_path):
    result = _invoke("--out", str(tmp_path), "--dims", "16by16", "lui-freeness")
    assert result.exit_code == 2


def test_degenerate_sign_vector_is_a_usage_error(tmp_path):
    result = _invoke("--out", str(tmp_path), "--dims", "4x4", "--trials", "2", "pt-semicircle", "--t", "1,1")
    assert result.exit_code == 2
    assert "degenerate" in result.output


def test_failing_report_exits_one(tmp_path, monkeypatch):
    def failing(p=2, d=10, kind="unitary"):
        report = ExperimentReport(config=ExperimentConfig(scenario="wg-table"))
        report.add(StatisticResult.compare("always_off", 1.0, 0.0, 0.0, 4.0))
        return report

    monkeypatch.setattr(experiments, "run_wg_table", failing)
    result = _invoke("--out", str(tmp_path), "wg-table")
    assert result.exit_code == 1
    assert "❌ always_off" in result.output


def test_track_logs_report_to_mlflow(tmp_path):
    with patch("src.mlflow_tracking.mlflow") as mock_mlflow:
        mock_mlflow.start_run.return_value = MagicMock()
        result = _invoke("--out", str(tmp_path), "--track", "wg-table", "--p", "1")
    assert result.exit_code == 0, result.output
    mock_mlflow.start_run.assert_called_once()
    metrics = mock_mlflow.log_metrics.call_args[0][0]
    assert metrics["passed"] == 1.0
    assert "closed_form_wg_id.estimate" in metrics
    assert mock_mlflow.log_artifact.call_count == 2
    mock_mlflow.end_run.assert_called_once()


def test_cli_module_entry_point(tmp_path):
    """The package runs as a module, as the console script does."""
    result = subprocess.run(
        [sys.executable, "-m", "src.cli", "--out", str(tmp_path), "wg-table"],
        capture_output=True,
        text=True,
        cwd=ROOT,
    )
    assert result.returncode == 0, result.stderr
    assert "wg-table passed" in result.stdout


def test_config_file_picks_lui_ensembles(tmp_path):
    wishart = {"kind": "wishart", "local_conjugation": True}
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "scenario": "lui-freeness",
        "dims": [[2, 2], [3, 3]],
        "trials": 3,
        "params": {"p_max": 2, "specs": [wishart, {**wishart, "aspect": 0.5}]},
    }))
    result = _invoke("--config", str(config), "--out", str(tmp_path), "lui-freeness")
    assert result.exit_code in (0, 1), result.output
    params = json.loads((tmp_path / "lui_freeness.json").read_text())["config"]["params"]
    assert [s["kind"] for s in params["specs"]] == ["wishart", "wishart"]
    assert params["specs"][1]["aspect"] == 0.5


def test_specs_flag_reads_a_json_list(tmp_path):
    specs = tmp_path / "specs.json"
    specs.write_text(json.dumps([{"kind": "gue", "local_conjugation": True}, {"kind": "wishart"}]))
    result = _invoke("--out", str(tmp_path), "--dims", "2x2,3x3", "--trials", "3",
                     "lui-freeness", "--p-max", "2", "--specs", str(specs))
    assert result.exit_code in (0, 1), result.output
    params = json.loads((tmp_path / "lui_freeness.json").read_text())["config"]["params"]
    assert [s["kind"] for s in params["specs"]] == ["gue", "wishart"]

    specs.write_text(json.dumps({"kind": "gue"}))
    result = _invoke("--out", str(tmp_path), "--dims", "2x2", "--trials", "2", "lui-freeness", "--specs", str(specs))
    assert result.exit_code == 2
