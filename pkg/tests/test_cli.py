import csv
import io
import json

import pytest
from typer.testing import CliRunner

from spinflux_cli import __version__
from spinflux_cli.main import app

runner = CliRunner()


def _csv(text):
    return list(csv.reader(io.StringIO(text)))


def _experiment(tmp_path, **overrides):
    document = {
        "model": "leroux",
        "initial": "const:0,0.4",
        "t": 0.02,
        "sizes": [64, 128],
        "replicas": 2,
        "pde": {"cells": 32},
        "outputs": {"rows": "rows.csv", "summary": "summary.json"},
    }
    document.update(overrides)
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


def test_version():
    result = runner.invoke(app, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output


def test_no_command_shows_help():
    result = runner.invoke(app, [])
    assert result.exit_code == 0
    assert "validate" in result.output
    assert "converge" in result.output


class TestValidate:
    def test_builtin_passes(self):
        result = runner.invoke(app, ["validate", "--builtin", "leroux"])
        assert result.exit_code == 0, result.output
        assert "Validation Complete" in result.output

    def test_json_output(self):
        result = runner.invoke(app, ["--log-level", "ERROR", "validate", "--builtin", "bricklayer", "--json"])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["passed"] is True
        assert [r["condition"] for r in payload["reports"]] == ["A", "B", "C", "D", "R"]

    def test_broken_model_exits_with_validation_code(self, broken_model_file):
        result = runner.invoke(app, ["--log-level", "ERROR", "validate", "--model", str(broken_model_file), "--json"])
        assert result.exit_code == 2
        assert json.loads(result.output)["passed"] is False

    def test_needs_exactly_one_model(self):
        missing = runner.invoke(app, ["validate"])
        assert missing.exit_code == 1
        assert "exactly one of --model or --builtin" in missing.output
        both = runner.invoke(app, ["validate", "--builtin", "leroux", "--model", "x.json"])
        assert both.exit_code == 1

    def test_unknown_builtin(self):
        result = runner.invoke(app, ["validate", "--builtin", "zrp"])
        assert result.exit_code == 1
        assert "unknown built-in" in result.output

    def test_irreducibility_table_starts_at_three(self):
        result = runner.invoke(app, ["--log-level", "ERROR", "validate", "--builtin", "leroux", "--sites", "5", "--json"])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert [r["n_sites"] for r in payload["irreducibility"]] == [3, 4, 5]
        assert payload["irreducibility"][0] == payload["reports"][1]

    def test_unreadable_model_document(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{\n  \"states\": [\n", encoding="utf-8")
        result = runner.invoke(app, ["--log-level", "ERROR", "validate", "--model", str(path), "--json"])
        assert result.exit_code == 1
        assert "error" in json.loads(result.output)


class TestThermo:
    def test_csv_to_file(self, tmp_path):
        out = tmp_path / "thermo.csv"
        result = runner.invoke(app, ["thermo", "--builtin", "leroux", "--points", "5", "--out", str(out)])
        assert result.exit_code == 0, result.output
        rows = _csv(out.read_text(encoding="utf-8"))
        assert rows[0] == ["u_1", "u_2", "theta_1", "theta_2", "S", "eigmin"]
        assert len(rows) > 1
        assert all(float(row[-1]) > 0 for row in rows[1:])

    def test_user_box(self):
        result = runner.invoke(app, ["thermo", "--builtin", "leroux", "--points", "3",
                                     "--lower", "-0.1,0.3", "--upper", "0.1,0.5"])
        assert result.exit_code == 0, result.output
        assert len(_csv(result.output)) == 1 + 9


class TestCertify:
    def test_json_report(self):
        result = runner.invoke(app, ["--log-level", "ERROR", "certify", "--builtin", "leroux", "--points", "8", "--json"])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert {"onsager_residual", "sym_residual_max", "lax_residual_max", "speeds_min_gap", "checks"} <= set(report)
        assert report["passed"] is True

    def test_broken_model_fails(self, broken_model_file):
        result = runner.invoke(app, ["--log-level", "ERROR", "certify", "--model", str(broken_model_file), "--points", "8", "--json"])
        assert result.exit_code == 2


class TestPde:
    def test_snapshot_rows(self, tmp_path):
        out = tmp_path / "pde.csv"
        result = runner.invoke(app, ["pde", "--builtin", "leroux", "--cells", "32", "--t-end", "0.1",
                                     "--snapshots", "4", "--initial", "sine:0,0,0.4,0.1", "--out", str(out)])
        assert result.exit_code == 0, result.output
        rows = _csv(out.read_text(encoding="utf-8"))
        assert rows[0] == ["time", "x", "u_1", "u_2"]
        assert len(rows) - 1 == 5 * 32
        assert float(rows[-1][0]) == pytest.approx(0.1)

    def test_csv_to_stdout(self):
        result = runner.invoke(app, ["pde", "--builtin", "leroux", "--cells", "16", "--t-end", "0.05",
                                     "--snapshots", "1", "--initial", "const:0,0.4"])
        assert result.exit_code == 0, result.output
        rows = _csv(result.output)
        assert rows[0] == ["time", "x", "u_1", "u_2"]
        assert len(rows) - 1 == 2 * 16

    def test_bad_profile(self):
        result = runner.invoke(app, ["pde", "--builtin", "leroux", "--t-end", "0.1", "--initial", "gauss:1"])
        assert result.exit_code == 1
        assert "Error" in result.output

    def test_inadmissible_initial_data(self):
        result = runner.invoke(app, ["pde", "--builtin", "leroux", "--cells", "16", "--t-end", "0.1",
                                     "--initial", "const:0.6,0.6"])
        assert result.exit_code == 1
        assert "Error" in result.output


class TestSimulate:
    def test_block_averaged_csv(self):
        result = runner.invoke(app, ["simulate", "--builtin", "leroux", "--sites", "100", "--t", "0.05",
                                     "--initial", "const:0,0.5", "--block", "10", "--replicas", "2", "--seed", "3"])
        assert result.exit_code == 0, result.output
        rows = _csv(result.output)
        assert rows[0] == ["replica", "x_cell", "u_1", "u_2"]
        assert len(rows) - 1 == 2 * 10
        assert {row[0] for row in rows[1:]} == {"0", "1"}

    def test_bad_block(self):
        result = runner.invoke(app, ["simulate", "--builtin", "leroux", "--sites", "100", "--t", "0.05",
                                     "--initial", "const:0,0.5", "--block", "power:3"])
        assert result.exit_code == 1


class TestConverge:
    def test_writes_outputs(self, tmp_path):
        path = _experiment(tmp_path)
        result = runner.invoke(app, ["converge", str(path)])
        assert result.exit_code == 0, result.output
        rows = _csv((tmp_path / "rows.csv").read_text(encoding="utf-8"))
        assert rows[0] == ["N", "l", "replicas", "l1_u_1", "l1_u_2", "se_u_1", "se_u_2"]
        assert [row[0] for row in rows[1:]] == ["64", "128"]
        summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
        assert summary["model"].startswith("leroux")
        assert len(summary["rows"]) == 2

    def test_summary_to_stdout(self, tmp_path):
        path = _experiment(tmp_path, outputs={"rows": "rows.csv"})
        result = runner.invoke(app, ["--log-level", "ERROR", "converge", str(path)])
        assert result.exit_code == 0, result.output
        summary = json.loads(result.output)
        assert [row["N"] for row in summary["rows"]] == [64, 128]

    def test_post_shock_refusal(self, tmp_path):
        path = _experiment(tmp_path, initial="sine:0,0.2,0.4,0.2", t=3.0, sizes=[64], pde={"cells": 1024})
        result = runner.invoke(app, ["converge", str(path)])
        assert result.exit_code == 3
        assert not (tmp_path / "rows.csv").exists()

    def test_invalid_experiment(self, tmp_path):
        path = _experiment(tmp_path, sizes=[128, 64])
        result = runner.invoke(app, ["converge", str(path)])
        assert result.exit_code == 1
        assert "Error" in result.output
