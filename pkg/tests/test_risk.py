"""Tests for Monte Carlo risk estimation and threshold optimization."""

import math

import numpy as np
import pytest

from conftest import reference_raw, single_raw
from disorder.errors import FlatObjectiveError, ParameterError, UnsupportedModelError
from disorder.filtering import ExactFilter
from disorder.model import ModelSpec, Schedule, validate
from disorder.risk import (
    FixedTime,
    ThresholdMismatched,
    ThresholdOnTrue,
    estimate_risk,
    first_passage,
    optimize_threshold,
    parse_strategy,
    robustness_risks,
    simulate_losses,
)
from disorder.shiryaev import ClassicalParams, solve_shiryaev
from disorder.sim import TimeGrid, simulate_batch


class TestStrategies:
    """Strategy descriptions."""

    def test_parse(self) -> None:
        assert parse_strategy("threshold:0.8") == ThresholdOnTrue(0.8)
        assert parse_strategy("fixed:2.5") == FixedTime(2.5)
        assert parse_strategy("mismatched:l=0.5,lambda=0.1,a=0.7") == ThresholdMismatched(0.5, 0.1, 0.7)

    @pytest.mark.parametrize("text", ["threshold:1.5", "mismatched:l=0.5,a=0.7", "cusum:3", "fixed:-1"])
    def test_rejects(self, text: str) -> None:
        with pytest.raises(ParameterError):
            parse_strategy(text)

    def test_label_round_trip(self) -> None:
        strategy = ThresholdMismatched(0.5, 0.1, 0.7)
        assert parse_strategy(strategy.label()) == strategy


class TestFirstPassage:
    """First hitting indices of the posterior."""

    def test_monotone_in_level(self, reference_model: ModelSpec) -> None:
        grid = TimeGrid(0.01, 20.0)
        batch = simulate_batch(reference_model, grid, 0, range(50))
        hit = first_passage(ExactFilter.from_model(reference_model, grid), batch.dY, [0.3, 0.6, 0.9])
        assert np.all(np.diff(hit, axis=1) >= 0)

    def test_level_one_never_hits(self, reference_model: ModelSpec) -> None:
        grid = TimeGrid(0.01, 2.0)
        batch = simulate_batch(reference_model, grid, 0, range(10))
        hit = first_passage(ExactFilter.from_model(reference_model, grid), batch.dY, [1.0])
        assert np.all(hit == grid.steps + 1)


class TestEstimateRisk:
    """Bayes risk estimates."""

    def test_fixed_time_zero(self, reference_model: ModelSpec) -> None:
        grid = TimeGrid(0.01, 1.0)
        estimate = estimate_risk(reference_model, FixedTime(0.0), grid, 500, 3)
        batch = simulate_batch(reference_model, grid, 3, range(500))
        assert estimate.mean_delay == 0.0
        assert estimate.mean == pytest.approx(np.mean(batch.theta > 0.0))

    def test_fixed_time_closed_form(self, single_model: ModelSpec) -> None:
        horizon = 5.0
        estimate = estimate_risk(single_model, FixedTime(horizon), TimeGrid(0.01, 6.0), 4000, 13)
        survival = math.exp(-0.1 * horizon)
        expected = survival + 1.0 * (horizon - (1.0 - survival) / 0.1)
        assert estimate.mean == pytest.approx(expected, abs=4.0 * estimate.se + 1e-3)

    def test_level_one_is_stopping_at_horizon(self, single_model: ModelSpec) -> None:
        grid = TimeGrid(0.01, 3.0)
        never = simulate_losses(single_model, ThresholdOnTrue(1.0), grid, 100, 6)
        at_horizon = simulate_losses(single_model, FixedTime(grid.horizon), grid, 100, 6)
        np.testing.assert_array_equal(never.loss, at_horizon.loss)
        assert np.all(never.truncated)

    def test_never_stopping_is_truncated(self, reference_model: ModelSpec) -> None:
        grid = TimeGrid(0.01, 2.0)
        estimate = estimate_risk(reference_model, ThresholdOnTrue(1.0), grid, 100, 3)
        assert estimate.truncated == 100
        assert estimate.horizon_too_short
        assert estimate.false_alarm_rate > 0.0

    def test_independent_of_batching(self, reference_model: ModelSpec) -> None:
        grid = TimeGrid(0.01, 10.0)
        a = estimate_risk(reference_model, ThresholdOnTrue(0.7), grid, 200, 5)
        b = estimate_risk(reference_model, ThresholdOnTrue(0.7), grid, 200, 5, batch_size=7, workers=3)
        assert a.mean == b.mean
        assert a.se == b.se

    def test_cost_monotone_pathwise(self, reference_model: ModelSpec) -> None:
        grid = TimeGrid(0.01, 20.0)
        dearer = reference_model.with_cost(Schedule.constant(2.0))
        cheap = simulate_losses(reference_model, ThresholdOnTrue(0.8), grid, 200, 1)
        dear = simulate_losses(dearer, ThresholdOnTrue(0.8), grid, 200, 1)
        assert np.all(dear.loss >= cheap.loss)
        np.testing.assert_array_equal(dear.false_alarm, cheap.false_alarm)

    def test_matches_classical_value(self) -> None:
        model = validate(single_raw(b=1.0, rate=0.1, pi_tilde=0.0))
        solution = solve_shiryaev(ClassicalParams(1.0, 1.0, 0.1, 1.0))
        grid = TimeGrid(0.01, 60.0)
        estimate = estimate_risk(model, ThresholdOnTrue(solution.threshold), grid, 2000, 7)
        assert estimate.mean == pytest.approx(solution.value(0.0), abs=4.0 * estimate.se + 0.03)
        assert estimate.half_width == pytest.approx(2.576 * estimate.se)

    def test_mismatched_equals_true_for_one_atom(self, single_model: ModelSpec) -> None:
        grid = TimeGrid(0.01, 20.0)
        true = estimate_risk(single_model, ThresholdOnTrue(0.6), grid, 100, 2)
        mismatched = estimate_risk(single_model, ThresholdMismatched(1.0, 0.1, 0.6), grid, 100, 2)
        assert true.mean == pytest.approx(mismatched.mean)


class TestOptimizeThreshold:
    """Best threshold rule on the true posterior."""

    def test_near_classical_threshold(self) -> None:
        model = validate(single_raw(b=1.0, rate=0.1, pi_tilde=0.0))
        solution = solve_shiryaev(ClassicalParams(1.0, 1.0, 0.1, 1.0))
        grid = TimeGrid(0.01, 60.0)
        optimum = optimize_threshold(model, grid, 2000, 11, points=19, refine_iterations=0)
        assert len(optimum.scan) == 19
        assert abs(optimum.a_star - solution.threshold) < 0.15
        assert optimum.estimate.mean == min(row.mean for row in optimum.scan)

    def test_expensive_delay_pulls_threshold_down(self) -> None:
        raw = single_raw(b=1.0, rate=0.1, pi_tilde=0.0)
        raw["cost"] = 100.0
        optimum = optimize_threshold(validate(raw), TimeGrid(0.01, 30.0), 400, 3, points=9, refine_iterations=0)
        assert optimum.a_star < 0.15

    def test_flat_objective(self) -> None:
        raw = reference_raw()
        raw["pi_tilde"] = 1.0
        model = validate(raw)
        with pytest.raises(FlatObjectiveError) as info:
            optimize_threshold(model, TimeGrid(0.01, 1.0), 50, 0, points=5, refine_iterations=0)
        assert len(info.value.scan) == 5

    def test_bad_bracket(self, reference_model: ModelSpec) -> None:
        with pytest.raises(ParameterError):
            optimize_threshold(reference_model, TimeGrid(0.01, 1.0), 10, 0, bracket=(0.5, 0.4))


class TestRobustness:
    """Risks entering the robustness inequalities."""

    def test_report(self, reference_model: ModelSpec) -> None:
        grid = TimeGrid(0.01, 30.0)
        result = robustness_risks(
            reference_model, 0.5, 0.1, 300, grid, 4, r=2.0, lambda_r=0.3, refine_iterations=0
        )
        expected_a = solve_shiryaev(ClassicalParams(0.5, 1.0, 0.1, 1.0)).threshold
        assert result.a_l == pytest.approx(expected_a)
        assert result.correction == pytest.approx(1.0 * (0.2 - 0.1) / (0.2 * 0.1) * 0.9)
        assert result.coupling_violations == 0
        names = {c.check for c in result.checks}
        assert {"mismatch-upper-bound", "threshold-upper-bound", "coupled-stopping-order",
                "mismatch-suboptimal", "mismatch-suboptimal-r"} <= names
        assert set(result.bound_slack) == names

    def test_requires_constant_model(self) -> None:
        raw = reference_raw()
        raw["sigma"] = {"breaks": [5.0], "values": [1.0, 2.0]}
        with pytest.raises(UnsupportedModelError):
            robustness_risks(validate(raw), 0.5, 0.1, 10, TimeGrid(0.01, 1.0), 0)
