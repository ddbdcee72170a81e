"""
コマンドラインのテスト
"""

import csv
import json

import numpy as np
import pytest

from src.fieldio import read_field, write_field
from src.geometry import dk_array, node_points
from src.main import HadamardConfig, SolveConfig, StudyConfig, main, run


def _rows(path):
    with path.open(encoding="utf-8", newline="") as f:
        return list(csv.reader(f))


def _error(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])


@pytest.fixture(scope="module")
def solved(tmp_path_factory):
    out = tmp_path_factory.mktemp("solve")
    code = main(
        [
            "solve",
            "--output-dir", str(out),
            "--quiet",
            "--p", "2",
            "--cells", "64",
            "--boundary", "perturbed-barrier:1.0,1",
            "--name", "pert",
        ]
    )
    return code, out


class TestBarrierCommand:
    """barrier サブコマンド。"""

    def test_table(self, tmp_path):
        code = main(["barrier", "--output-dir", str(tmp_path), "--quiet", "--p", "3", "--samples", "5"])
        assert code == 0
        rows = _rows(tmp_path / "barrier.csv")
        assert rows[0] == ["t", "u0", "du0_dt"]
        assert len(rows) == 6
        assert rows[1][:2] == ["1.0", "0.0"]
        assert rows[-1][:2] == ["2.0", "1.0"]
        summary = json.loads((tmp_path / "barrier.json").read_text(encoding="utf-8"))
        assert summary["spec"]["p"] == 3.0

    def test_output_is_deterministic(self, tmp_path):
        args = ["barrier", "--quiet", "--p", "1.7", "--k", "3", "--n", "3", "--samples", "33"]
        assert main(args + ["--output-dir", str(tmp_path / "a")]) == 0
        assert main(args + ["--output-dir", str(tmp_path / "b")]) == 0
        first = (tmp_path / "a" / "barrier.csv").read_bytes()
        assert first == (tmp_path / "b" / "barrier.csv").read_bytes()

    def test_invalid_exponent(self, tmp_path, capsys):
        assert main(["barrier", "--output-dir", str(tmp_path), "--p", "0.5"]) == 2
        error = _error(capsys)
        assert error["error"] == "ValidationError"
        assert error["command"] == "barrier"

    def test_codimension(self, tmp_path, capsys):
        assert main(["barrier", "--output-dir", str(tmp_path), "--n", "2", "--k", "3"]) == 2
        assert "k=3" in _error(capsys)["message"]

    def test_config_file_with_override(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"p": 3.0, "samples": 7, "output_dir": str(tmp_path / "out")}), encoding="utf-8")
        assert main(["barrier", "--config", str(config), "--samples", "4", "--quiet"]) == 0
        assert len(_rows(tmp_path / "out" / "barrier.csv")) == 5

    def test_unknown_config_key(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"bogus": 1}), encoding="utf-8")
        assert main(["barrier", "--config", str(config), "--output-dir", str(tmp_path)]) == 2
        assert _error(capsys)["error"] == "ValidationError"

    def test_unreadable_config(self, tmp_path, capsys):
        assert main(["barrier", "--config", str(tmp_path / "missing.json")]) == 2
        assert _error(capsys)["error"] == "ConfigurationError"

    def test_session_log(self, tmp_path):
        assert main(["barrier", "--output-dir", str(tmp_path), "--quiet", "--seed", "9"]) == 0
        logs = list(tmp_path.glob("*-session.log"))
        assert len(logs) == 1
        text = logs[0].read_text(encoding="utf-8")
        assert "command=barrier" in text
        assert "kind=verdict" in text


class TestDispatch:
    """run と引数なしの実行。"""

    def test_missing_command(self):
        assert main([]) == 2

    def test_unknown_command(self, capsys):
        assert run("nope", {}) == 2
        assert _error(capsys)["command"] == "nope"

    def test_validated_model_is_accepted(self, tmp_path):
        cfg = HadamardConfig(coefficients=[1.0, 2.0], output_dir=tmp_path, quiet=True)
        assert run("hadamard", cfg) == 0


class TestInequalityScanCommand:
    """inequality-scan サブコマンド。"""

    def test_scan_is_reproducible(self, tmp_path):
        args = ["inequality-scan", "--quiet", "--samples", "3000", "--envelope-samples", "40", "--seed", "3"]
        assert main(args + ["--output-dir", str(tmp_path / "a")]) == 0
        assert main(args + ["--output-dir", str(tmp_path / "b")]) == 0
        first = (tmp_path / "a" / "inequality_scan.csv").read_bytes()
        assert first == (tmp_path / "b" / "inequality_scan.csv").read_bytes()
        rows = _rows(tmp_path / "a" / "inequality_scan.csv")
        assert len(rows) == 1 + 6 + 4
        assert all(row[2] == "0" for row in rows[1:])
        assert (tmp_path / "a" / "envelope.json").exists()

    def test_range_must_be_ordered(self, tmp_path, capsys):
        assert main(["inequality-scan", "--output-dir", str(tmp_path), "--p-min", "3", "--p-max", "2"]) == 2
        assert _error(capsys)["error"] == "ValidationError"


class TestHadamardCommand:
    """hadamard サブコマンド。"""

    def test_inline_coefficients(self, tmp_path):
        assert main(["hadamard", "--output-dir", str(tmp_path), "--coefficients", "1", "0.5", "2+1j"]) == 0
        result = json.loads((tmp_path / "hadamard.json").read_text(encoding="utf-8"))
        assert result["holds"] is True
        assert result["coefficients"][2] == [2.0, 1.0]

    def test_csv_coefficients(self, tmp_path):
        source = tmp_path / "coefficients.csv"
        source.write_text("re,im\n1,0\n0,0\n0.25,-1\n", encoding="utf-8")
        assert main(["hadamard", "--output-dir", str(tmp_path), "--coefficients-csv", str(source)]) == 0

    def test_monomial_with_power(self, tmp_path):
        args = ["hadamard", "--output-dir", str(tmp_path), "--coefficients", "1", "--min-power", "4"]
        assert main(args) == 0
        result = json.loads((tmp_path / "hadamard.json").read_text(encoding="utf-8"))
        assert abs(result["log_gap"]) <= 1e-12

    @pytest.mark.parametrize("extra", [[], ["--coefficients", "1", "--coefficients-csv", "c.csv"]])
    def test_exactly_one_source(self, tmp_path, capsys, extra):
        assert main(["hadamard", "--output-dir", str(tmp_path)] + extra) == 2
        assert _error(capsys)["error"] == "ValidationError"

    def test_bad_coefficient(self, tmp_path):
        assert main(["hadamard", "--output-dir", str(tmp_path), "--coefficients", "1", "abc"]) == 2

    def test_zero_polynomial(self, tmp_path, capsys):
        assert main(["hadamard", "--output-dir", str(tmp_path), "--coefficients", "0"]) == 2
        assert _error(capsys)["error"] == "DegeneracyError"


class TestSolveVerifyPipeline:
    """solve の出力を verify に渡す。"""

    def test_solve_artifacts(self, solved):
        code, out = solved
        assert code == 0
        for name in ("pert.bin", "pert.json", "pert-report.json"):
            assert (out / name).exists()
        report = json.loads((out / "pert-report.json").read_text(encoding="utf-8"))
        assert report["converged"] is True
        field = read_field(out / "pert")
        assert field.metadata["p"] == 2.0
        assert field.metadata["boundary"] == "perturbed-barrier:1.0,1"

    def test_verify_passes(self, solved, tmp_path):
        _, out = solved
        args = ["verify", "--output-dir", str(tmp_path), "--field", str(out / "pert"), "--t-list", "1.25", "1.5", "1.75"]
        assert main(args) == 0
        rows = _rows(tmp_path / "bound.csv")
        assert rows[0] == ["t", "M", "bound", "margin", "normalized_margin", "analytic_margin", "unresolved"]
        assert len(rows) == 4
        assert all(float(row[4]) > 0 for row in rows[1:])
        report = json.loads((tmp_path / "bound_report.json").read_text(encoding="utf-8"))
        assert report["verdict"] is True
        assert report["comparison"] == "discrete-barrier"
        assert report["limits"] == "boundary-data"
        conditions = json.loads((tmp_path / "conditions.json").read_text(encoding="utf-8"))
        assert "h_divergence" in conditions and "growth_decay" in conditions
        assert conditions["capacity"] > 0

    def test_barrier_solve_then_verify(self, tmp_path):
        """既定の障壁データで解いた場は、そのまま verify を通る。"""
        assert main(["solve", "--output-dir", str(tmp_path), "--quiet", "--p", "2", "--cells", "64"]) == 0
        report = json.loads((tmp_path / "field-report.json").read_text(encoding="utf-8"))
        assert report["stop_reason"] == "gradient"
        args = [
            "verify", "--output-dir", str(tmp_path / "verify"), "--field", str(tmp_path / "field"),
            "--t-list", "1.25", "1.5", "1.75", "--no-conditions",
        ]
        assert main(args) == 0
        bound = json.loads((tmp_path / "verify" / "bound_report.json").read_text(encoding="utf-8"))
        assert bound["comparison"] == "discrete-barrier"
        assert all(abs(row["normalized_margin"]) <= 1e-12 for row in bound["rows"])

    def test_analytic_comparison_flag(self, solved, tmp_path):
        _, out = solved
        args = [
            "verify", "--output-dir", str(tmp_path), "--field", str(out / "pert"),
            "--t-list", "1.5", "--no-conditions", "--analytic-comparison",
        ]
        assert main(args) == 0
        report = json.loads((tmp_path / "bound_report.json").read_text(encoding="utf-8"))
        assert report["comparison"] == "analytic"
        assert report["limits"] == "boundary-data"

    def test_tampered_field_fails(self, solved, tmp_path):
        _, out = solved
        field = read_field(out / "pert")
        d = dk_array(node_points(field.grid), 2)
        values = field.filled(0.0)
        values[field.interior & (d > 1.4) & (d < 1.6)] += 0.5
        write_field(tmp_path / "tampered", field.with_values(values))
        args = [
            "verify", "--output-dir", str(tmp_path), "--field", str(tmp_path / "tampered"),
            "--t-list", "1.25", "1.5", "1.75", "--no-conditions",
        ]
        assert main(args) == 1
        assert not (tmp_path / "conditions.json").exists()

    def test_radii_outside_annulus(self, solved, tmp_path, capsys):
        _, out = solved
        args = ["verify", "--output-dir", str(tmp_path), "--field", str(out / "pert"), "--R", "2.5", "--no-conditions"]
        assert main(args) == 2
        assert _error(capsys)["error"] == "DomainError"

    def test_missing_field(self, tmp_path, capsys):
        assert main(["verify", "--output-dir", str(tmp_path), "--field", str(tmp_path / "none")]) == 2
        assert _error(capsys)["error"] == "ConfigurationError"

    def test_unconverged_solve_keeps_best_iterate(self, tmp_path):
        args = ["solve", "--output-dir", str(tmp_path), "--quiet", "--p", "3", "--cells", "16", "--max-iterations", "1"]
        assert main(args) == 1
        report = json.loads((tmp_path / "field-report.json").read_text(encoding="utf-8"))
        assert report["converged"] is False
        assert np.isfinite(read_field(tmp_path / "field").values).any()

    def test_bad_boundary_selector(self, tmp_path, capsys):
        assert main(["solve", "--output-dir", str(tmp_path), "--boundary", "wobbly", "--cells", "16"]) == 2
        assert _error(capsys)["error"] == "ConfigurationError"


class TestStudyCommand:
    """study サブコマンド。"""

    def test_refinement_table(self, tmp_path):
        assert main(["study", "--output-dir", str(tmp_path), "--quiet", "--p", "2", "--cells", "16", "32", "64"]) == 0
        rows = _rows(tmp_path / "study.csv")
        assert rows[0] == ["cells", "h", "max_error", "observed_order", "iterations", "weak_residual", "converged", "stop_reason"]
        assert [row[0] for row in rows[1:]] == ["16", "32", "64"]
        assert all(row[7] == "gradient" for row in rows[1:])
        assert rows[1][3] == "nan"
        errors = [float(row[2]) for row in rows[1:]]
        assert errors[0] > errors[1] > errors[2]

    def test_cells_must_increase(self, tmp_path, capsys):
        assert main(["study", "--output-dir", str(tmp_path), "--cells", "32", "16"]) == 2
        assert _error(capsys)["error"] == "ValidationError"

    def test_default_cells_follow_dimension(self):
        assert StudyConfig(n=3, k=3).resolved_cells() == [16, 24, 32]
        assert SolveConfig().cells == 64


class TestGrowthCommand:
    """growth サブコマンド。"""

    def test_outer_radius_family(self, tmp_path):
        args = [
            "growth", "--output-dir", str(tmp_path), "--quiet",
            "--outer-radii", "3", "4", "6", "--cells", "32", "--density", "64", "--condition-samples", "8",
        ]
        assert main(args) == 0
        rows = _rows(tmp_path / "growth.csv")
        assert rows[0] == [
            "S", "cells", "h", "converged", "M_r", "M_R", "worst_margin", "inverse_integral", "discrepancy", "Q",
        ]
        assert [row[0] for row in rows[1:]] == ["3.0", "4.0", "6.0"]
        assert [row[1] for row in rows[1:]] == ["32", "43", "64"]
        assert all(row[3] == "1" for row in rows[1:])
        result = json.loads((tmp_path / "growth.json").read_text(encoding="utf-8"))
        assert "h_divergence" in result and "growth_decay" in result
        assert result["t"][-1] < 6.0

    def test_outer_radii_must_exceed_beta(self, tmp_path, capsys):
        assert main(["growth", "--output-dir", str(tmp_path), "--outer-radii", "2", "3"]) == 2
        assert _error(capsys)["error"] == "ValidationError"
