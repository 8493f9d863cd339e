"""Tests for experiment configs, suites and reports."""

import json
import math
from pathlib import Path
from typing import Any

import pytest

from conftest import reference_raw, single_raw
from disorder.errors import ConfigError, UnknownExperimentError, UnsupportedModelError
from disorder.experiments import (
    ExperimentReport,
    ReportRow,
    load_experiment_config,
    parse_experiment_config,
    run_experiment,
    write_report,
)

SMALL = {"dt": 0.02, "horizon": 10.0, "scan_points": 11, "refine_iterations": 0, "seed": 3}


def config(name: str, **extra: Any) -> dict[str, Any]:
    return {"name": name, "model": reference_raw(), **SMALL, **extra}


class TestConfig:
    """Config validation."""

    def test_unknown_experiment(self) -> None:
        with pytest.raises(UnknownExperimentError):
            parse_experiment_config({"name": "nonsense", "model": reference_raw()})

    def test_unsorted_sweep(self) -> None:
        with pytest.raises(ConfigError):
            parse_experiment_config(config("monotonicity_sigma", sweep=[2.0, 1.0]))

    def test_budget_minimum(self) -> None:
        with pytest.raises(ConfigError):
            parse_experiment_config(config("robustness_sandwich", n_paths=10))

    def test_unknown_key(self) -> None:
        with pytest.raises(ConfigError):
            parse_experiment_config(config("concavity", n_paths=0, colour="red"))

    def test_defaults_fill_missing_fields(self) -> None:
        parsed = parse_experiment_config(
            {"name": "concavity", "model": reference_raw()},
            {"n_paths": 5, "ci_z": 2.5, "shiryaev_resolution": 2001},
        )
        assert parsed.n_paths == 5
        assert parsed.ci_z == 2.5

    def test_allowance(self) -> None:
        parsed = parse_experiment_config(config("concavity", dt=0.01, n_paths=0))
        assert parsed.allowance == pytest.approx(2e-3 + 0.25 * 0.1)

    def test_load_file(self, tmp_path: Path) -> None:
        path = tmp_path / "exp.json"
        path.write_text(json.dumps(config("concavity", n_paths=0)))
        assert load_experiment_config(path).name == "concavity"
        path.write_text("{not json")
        with pytest.raises(ConfigError):
            load_experiment_config(path)


class TestSuites:
    """Small-budget runs of the suites."""

    def test_cost_sweep_is_pathwise(self) -> None:
        report = run_experiment(config("monotonicity_cost", sweep=[0.5, 1.0, 2.0], n_paths=200, threshold=0.8))
        pathwise = [r for r in report.rows if r.check == "loss-pathwise-increasing-in-cost"]
        assert len(pathwise) == 2
        assert all(r.passed and r.gating for r in pathwise)
        assert report.passed

    def test_single_point_sweep_passes_vacuously(self) -> None:
        report = run_experiment(config("monotonicity_sigma", sweep=[1.0], n_paths=1000))
        assert len(report.rows) == 1
        assert report.rows[0].check == ""
        assert report.passed

    def test_expectation_identity(self) -> None:
        report = run_experiment(
            config("expectation_identity", n_paths=500, checkpoints=[0.0, 1.0, 5.0], ci_z=4.0)
        )
        checks = [r for r in report.rows if r.check]
        assert len(checks) == 3
        assert report.passed

    def test_filter_consistency_rows(self) -> None:
        report = run_experiment(
            config("filter_consistency", n_paths=10, filter_paths=20, dt_levels=[0.02, 0.01], horizon=5.0)
        )
        assert {r.check for r in report.rows if r.check} == {"discrepancy-ratio-lower", "discrepancy-ratio-upper"}

    def test_dp_suites_on_one_atom_model(self) -> None:
        model = single_raw(b=1.0, rate=0.2)
        report = run_experiment(
            {"name": "boundary_strip", "model": model, "n_paths": 0, "dp_h": 0.05, "dp_dt": 0.02}
        )
        assert {"dp-matches-solver", "stop-onset-near-threshold"} <= {r.check for r in report.rows}
        assert "value" in report.artifacts
        report = run_experiment({"name": "concavity", "model": model, "n_paths": 0, "dp_h": 0.05, "dp_dt": 0.02})
        assert "value-concave" in {r.check for r in report.rows}

    def test_dp_rows_declare_time_step_allowance(self) -> None:
        raw = {"name": "boundary_strip", "model": single_raw(b=1.0, rate=0.2), "n_paths": 0, "dp_h": 0.05, "dp_dt": 0.02}
        allowance = parse_experiment_config(raw).dp_allowance
        assert allowance == pytest.approx(2e-3 + 0.25 * math.sqrt(0.02))
        rows = {r.check: r for r in run_experiment(raw).rows if r.check}
        for name in ("dp-matches-solver", "stop-onset-near-threshold"):
            assert rows[name].margin == pytest.approx(allowance)

    def test_solver_oracle(self) -> None:
        raw = {
            "name": "solver_oracle", "model": single_raw(b=1.0, rate=0.1), **SMALL, "n_paths": 1000,
            "horizon": 60.0, "pi_values": [0.0], "grid_b": [0.5, 2.0], "grid_sigma": [0.5, 2.0],
            "grid_lambda": [0.05, 0.2], "grid_cost": [0.5, 2.0],
        }
        report = run_experiment(raw)
        rows = {}
        for row in report.rows:
            rows.setdefault(row.check, []).append(row)
        for name in ("threshold-increasing-in-magnitude", "threshold-decreasing-in-sigma", "threshold-decreasing-in-cost"):
            assert rows[name][0].passed and rows[name][0].gating
        assert not rows["threshold-increasing-in-lambda"][0].gating
        assert len(rows["solver-value-vs-mc"]) == 2
        assert len(rows["solver-threshold-vs-mc"]) == 1
        assert report.artifacts["thresholds"][1].shape == (16, 5)

    def test_solver_oracle_needs_one_atom(self) -> None:
        with pytest.raises(UnsupportedModelError):
            run_experiment(config("solver_oracle", n_paths=1000, grid_b=[1.0], grid_sigma=[1.0],
                                  grid_lambda=[0.1], grid_cost=[1.0]))

    def test_grid_sorted_by_magnitude(self) -> None:
        with pytest.raises(ConfigError):
            parse_experiment_config(config("solver_oracle", n_paths=1000, grid_b=[-2.0, 1.0]))

    def test_intensity_comparison_needs_one_atom(self) -> None:
        with pytest.raises(UnsupportedModelError):
            run_experiment(config("intensity_comparison", n_paths=1000))

    def test_intensity_must_be_weaker(self) -> None:
        raw = {"name": "intensity_comparison", "model": single_raw(rate=0.1), **SMALL, "n_paths": 1000,
               "laws": [{"type": "exponential", "rate": 0.5}]}
        with pytest.raises(ConfigError):
            run_experiment(raw)


class TestReport:
    """Report plumbing."""

    def test_reproducible_without_timing(self) -> None:
        raw = config("monotonicity_cost", sweep=[1.0, 2.0], n_paths=300, threshold=0.7)
        first = run_experiment(raw)
        second = run_experiment(raw)
        assert first.to_dict(include_timing=False) == second.to_dict(include_timing=False)
        assert first.to_csv() == second.to_csv()
        assert "timing" in first.to_dict()["metadata"]

    def test_rows_name_their_anchor(self) -> None:
        report = run_experiment(config("monotonicity_cost", sweep=[1.0, 2.0], n_paths=300, threshold=0.7))
        checked = [r for r in report.rows if r.check]
        assert checked
        assert all(r.anchor.startswith("monotonicity:") for r in checked)
        assert report.to_csv().startswith("point,statistic,value,ci,check,anchor,")
        assert all("anchor" in row for row in report.to_dict()["rows"])

    def test_pass_requires_gating_rows(self) -> None:
        report = ExperimentReport(
            name="x",
            rows=[
                ReportRow("1", "a", 1.0, 0.0, check="c", passed=False, gating=False),
                ReportRow("1", "b", 1.0, 0.0, check="d", passed=True, gating=True),
            ],
        )
        assert report.passed
        report.rows.append(ReportRow("2", "b", 1.0, 0.0, check="d", passed=False, gating=True))
        assert not report.passed
        assert len(report.failures) == 1

    def test_write_report(self, tmp_path: Path) -> None:
        report = run_experiment(config("monotonicity_cost", sweep=[1.0, 2.0], n_paths=300, threshold=0.7))
        target = tmp_path / "report.json"
        write_report(report, target)
        document = json.loads(target.read_text())
        assert document["name"] == "monotonicity_cost"
        assert len(document["rows"]) == len(report.rows)
        assert (tmp_path / "report.scan-1.csv").exists()
        write_report(report, tmp_path / "report.csv", "csv")
        assert (tmp_path / "report.csv").read_text().startswith("point,statistic,value")
