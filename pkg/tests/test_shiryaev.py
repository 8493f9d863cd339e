"""Tests for the classical threshold and value function."""

import numpy as np
import pytest

from disorder.errors import ParameterError
from disorder.shiryaev import (
    ClassicalParams,
    derivative,
    shiryaev_threshold,
    shiryaev_value,
    solve_shiryaev,
    variational_residual,
)

BASE = ClassicalParams(b=1.0, sigma=1.0, lam=0.1, c=1.0)
PARAMETER_SETS = [
    BASE,
    ClassicalParams(b=2.0, sigma=1.0, lam=0.2, c=1.0),
    ClassicalParams(b=0.5, sigma=1.0, lam=0.2, c=1.0),
    ClassicalParams(b=1.0, sigma=0.7, lam=0.05, c=0.5),
    ClassicalParams(b=-1.5, sigma=1.3, lam=0.3, c=2.0),
]


class TestParams:
    """Parameter validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"b": 0.0, "sigma": 1.0, "lam": 0.1, "c": 1.0},
            {"b": 1.0, "sigma": 0.0, "lam": 0.1, "c": 1.0},
            {"b": 1.0, "sigma": 1.0, "lam": -0.1, "c": 1.0},
            {"b": 1.0, "sigma": 1.0, "lam": 0.1, "c": 0.0},
        ],
    )
    def test_rejects(self, kwargs: dict[str, float]) -> None:
        with pytest.raises(ParameterError):
            ClassicalParams(**kwargs)

    def test_rho(self) -> None:
        assert ClassicalParams(2.0, 1.0, 0.1, 1.0).rho == pytest.approx(2.0)


class TestThreshold:
    """Smooth fit and the position of the threshold."""

    @pytest.mark.parametrize("params", PARAMETER_SETS)
    def test_smooth_fit(self, params: ClassicalParams) -> None:
        a = shiryaev_threshold(params)
        assert params.lam / (params.lam + params.c) <= a < 1.0
        assert derivative(a, params) == pytest.approx(-1.0, abs=1e-6)

    def test_reference_threshold(self) -> None:
        assert shiryaev_threshold(BASE) == pytest.approx(0.12956, abs=1e-3)

    @pytest.mark.parametrize("params", PARAMETER_SETS)
    def test_derivative_blows_up_near_one(self, params: ClassicalParams) -> None:
        limit = -(params.c / params.rho) / (params.ratio + 1.0)
        for eps in (1e-4, 1e-6, 1e-8):
            assert derivative(1.0 - eps, params) * eps == pytest.approx(limit, rel=1e-2)

    def test_decreases_in_sigma(self) -> None:
        low = shiryaev_threshold(ClassicalParams(1.0, 0.5, 0.1, 1.0))
        mid = shiryaev_threshold(BASE)
        high = shiryaev_threshold(ClassicalParams(1.0, 2.0, 0.1, 1.0))
        assert low > mid > high

    def test_increases_in_magnitude(self) -> None:
        small = shiryaev_threshold(ClassicalParams(0.5, 1.0, 0.1, 1.0))
        large = shiryaev_threshold(ClassicalParams(2.0, 1.0, 0.1, 1.0))
        assert small < shiryaev_threshold(BASE) < large

    def test_sign_of_drift_irrelevant(self) -> None:
        assert shiryaev_threshold(ClassicalParams(-1.0, 1.0, 0.1, 1.0)) == pytest.approx(
            shiryaev_threshold(BASE), abs=1e-9
        )

    def test_decreases_in_cost(self) -> None:
        cheap = shiryaev_threshold(ClassicalParams(1.0, 1.0, 0.1, 0.5))
        dear = shiryaev_threshold(ClassicalParams(1.0, 1.0, 0.1, 2.0))
        assert cheap > dear


class TestValueFunction:
    """Tabulated U and U'."""

    @pytest.mark.parametrize("params", PARAMETER_SETS[:3])
    def test_shape(self, params: ClassicalParams) -> None:
        solution = solve_shiryaev(params)
        pi, u = solution.pi_grid, solution.value_table
        assert np.all(u >= -1e-12)
        assert np.all(u <= 1.0 - pi + 1e-12)
        assert np.all(np.diff(u) <= 1e-12)
        assert np.max(u[:-2] - 2 * u[1:-1] + u[2:]) <= 1e-7
        assert solution.value(solution.threshold) == pytest.approx(1.0 - solution.threshold)

    def test_continuous_at_threshold(self) -> None:
        solution = solve_shiryaev(BASE)
        a = solution.threshold
        below = solution.value(a - 1e-4)
        assert below == pytest.approx(1.0 - a + 1e-4, abs=1e-6)

    def test_table_derivative_matches_quadrature(self) -> None:
        solution = solve_shiryaev(BASE)
        for pi in np.linspace(0.1, 0.9, 5) * solution.threshold:
            assert solution.derivative(pi) == pytest.approx(derivative(pi, BASE), rel=1e-4, abs=1e-5)
        assert solution.derivative(min(solution.threshold + 0.1, 1.0)) == -1.0

    def test_cached(self) -> None:
        assert solve_shiryaev(BASE) is solve_shiryaev(BASE)
        assert shiryaev_value(0.0, BASE) == solve_shiryaev(BASE).value(0.0)

    def test_table_columns(self) -> None:
        table = solve_shiryaev(BASE).table()
        assert table.shape == (2001, 3)
        assert solve_shiryaev(BASE).header()["threshold"] == solve_shiryaev(BASE).threshold

    def test_second_derivative(self) -> None:
        solution = solve_shiryaev(BASE)
        a = solution.threshold
        for pi in (0.2 * a, 0.5 * a, 0.8 * a):
            h = 1e-4
            central = (derivative(pi + h, BASE) - derivative(pi - h, BASE)) / (2.0 * h)
            assert solution.second_derivative(pi) == pytest.approx(central, rel=1e-2, abs=1e-4)
            assert solution.second_derivative(pi) <= 0.0
        assert solution.second_derivative(min(a + 0.01, 1.0)) == 0.0


class TestVariationalInequality:
    """ODE on the continuation region, stop inequality above the threshold."""

    @pytest.mark.parametrize("params", PARAMETER_SETS)
    def test_residuals(self, params: ClassicalParams) -> None:
        solution = solve_shiryaev(params)
        a = solution.threshold
        for pi in np.linspace(0.05 * a, 0.95 * a, 7):
            assert abs(variational_residual(pi, params, solution)) <= 1e-5
        for pi in np.linspace(a + 1e-3, 0.999, 7):
            assert variational_residual(pi, params, solution) >= -1e-8
