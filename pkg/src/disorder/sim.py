"""Scenario generation on a uniform time grid.

Every path draws from its own counter-based stream keyed by
``(master_seed, path_index, stream_id)`` with one stream each for the
disorder time, the magnitude and the Brownian noise. A path is therefore a
pure function of its key: batching, thread count and the model parameters
that do not touch a stream leave it unchanged, which is what the common
random numbers comparisons rely on.
"""

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import GridError, RateOrderError
from .model import DisorderLaw, ModelSpec, mean_disorder_time

THETA_STREAM = 0
MAGNITUDE_STREAM = 1
NOISE_STREAM = 2


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    horizon: float

    def __post_init__(self) -> None:
        if not self.dt > 0 or not self.horizon > 0:
            raise GridError(f"dt and horizon must be positive, got dt={self.dt}, T={self.horizon}")
        if self.steps < 1:
            raise GridError("grid needs at least one step")
        if abs(self.dt * self.steps - self.horizon) > 1e-9:
            raise GridError(f"horizon {self.horizon} is not a multiple of dt {self.dt}")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def index_at(self, t: float) -> int:
        """First grid index whose time is >= t, capped at the horizon."""
        return min(int(math.ceil(t / self.dt - 1e-9)), self.steps)


def default_grid(
    laws: Sequence[DisorderLaw],
    dt: float,
    horizon: Optional[float] = None,
    mean_disorder_times: float = 8.0,
) -> TimeGrid:
    """Grid up to ``horizon``, or a multiple of the longest mean disorder time, rounded up to dt."""
    if horizon is None:
        horizon = mean_disorder_times * max(mean_disorder_time(law) for law in laws)
    steps = max(int(math.ceil(horizon / dt - 1e-9)), 1)
    return TimeGrid(dt, steps * dt)


@dataclass(frozen=True)
class SamplePath:
    theta: float
    magnitude: float
    dW: np.ndarray
    dY: np.ndarray
    grid: TimeGrid
    path_index: int

    @property
    def x(self) -> np.ndarray:
        """Signal at the left endpoint of every step."""
        return self.magnitude * (self.theta <= self.grid.times[:-1])


@dataclass(frozen=True)
class ScenarioBatch:
    """Several paths stacked along the first axis."""

    theta: np.ndarray
    magnitude: np.ndarray
    dW: np.ndarray
    dY: np.ndarray
    grid: TimeGrid
    path_indices: np.ndarray

    def __len__(self) -> int:
        return len(self.theta)


def stream(master_seed: int, path_index: int, stream_id: int) -> np.random.Generator:
    key = np.random.SeedSequence([int(master_seed), int(path_index), int(stream_id)])
    return np.random.Generator(np.random.Philox(key))


def drift_overlap(theta: float, grid: TimeGrid) -> np.ndarray:
    """Time each step spends after the disorder: min((t_{k+1} - theta)^+, dt)."""
    right = grid.times[1:]
    return np.minimum(np.maximum(right - theta, 0.0), grid.dt)


def observation_increments(
    magnitude: float, theta: float, dW: np.ndarray, model: ModelSpec, grid: TimeGrid
) -> np.ndarray:
    sigma = np.asarray(model.sigma(grid.times[:-1]), dtype=float)
    return magnitude * drift_overlap(theta, grid) + sigma * dW


def draw_theta(model: ModelSpec, master_seed: int, path_index: int) -> float:
    u = stream(master_seed, path_index, THETA_STREAM).random()
    return model.disorder.sample(u)


def draw_magnitude(model: ModelSpec, theta: float, master_seed: int, path_index: int) -> float:
    u = stream(master_seed, path_index, MAGNITUDE_STREAM).random()
    prior = model.prior0 if theta == 0.0 else model.prior1
    return prior.atoms[prior.sample_index(u)]


def draw_noise(grid: TimeGrid, master_seed: int, path_index: int) -> np.ndarray:
    rng = stream(master_seed, path_index, NOISE_STREAM)
    return rng.standard_normal(grid.steps) * math.sqrt(grid.dt)


def simulate_scenario(
    model: ModelSpec, grid: TimeGrid, master_seed: int, path_index: int
) -> SamplePath:
    theta = draw_theta(model, master_seed, path_index)
    magnitude = draw_magnitude(model, theta, master_seed, path_index)
    dW = draw_noise(grid, master_seed, path_index)
    dY = observation_increments(magnitude, theta, dW, model, grid)
    return SamplePath(theta, magnitude, dW, dY, grid, path_index)


def stack(paths: list[SamplePath], grid: TimeGrid) -> ScenarioBatch:
    return ScenarioBatch(
        theta=np.array([p.theta for p in paths]),
        magnitude=np.array([p.magnitude for p in paths]),
        dW=np.stack([p.dW for p in paths]) if paths else np.zeros((0, grid.steps)),
        dY=np.stack([p.dY for p in paths]) if paths else np.zeros((0, grid.steps)),
        grid=grid,
        path_indices=np.array([p.path_index for p in paths], dtype=np.int64),
    )


def simulate_batch(
    model: ModelSpec, grid: TimeGrid, master_seed: int, path_indices: Iterable[int]
) -> ScenarioBatch:
    return stack([simulate_scenario(model, grid, master_seed, i) for i in path_indices], grid)


def _check_coupling(model: ModelSpec, lambda_l: float) -> float:
    if not model.is_constant:
        raise RateOrderError("coupling needs constant sigma, cost and intensity")
    lam = model.disorder.constant_rate
    if lambda_l > lam:
        raise RateOrderError(f"lambda_l={lambda_l} exceeds the model rate {lam}")
    if not lambda_l > 0:
        raise RateOrderError(f"lambda_l must be positive, got {lambda_l}")
    return lam


def coupled_scenarios(
    model: ModelSpec,
    l_spec: tuple[float, float],
    grid: TimeGrid,
    master_seed: int,
    path_index: int,
) -> tuple[SamplePath, SamplePath]:
    """Return the true path and the (delta_l, Theta_l) path sharing its noise.

    Theta_l = Theta * lambda / lambda_l, so Theta_l >= Theta and Theta_l has
    the same atom at zero with an Exp(lambda_l) tail.
    """
    l, lambda_l = l_spec
    lam = _check_coupling(model, lambda_l)
    path = simulate_scenario(model, grid, master_seed, path_index)
    theta_l = path.theta * (lam / lambda_l)
    dY_l = observation_increments(l, theta_l, path.dW, model, grid)
    return path, SamplePath(theta_l, l, path.dW, dY_l, grid, path_index)


def coupled_batch(
    model: ModelSpec,
    l_spec: tuple[float, float],
    grid: TimeGrid,
    master_seed: int,
    path_indices: Iterable[int],
) -> tuple[ScenarioBatch, ScenarioBatch]:
    pairs = [coupled_scenarios(model, l_spec, grid, master_seed, i) for i in path_indices]
    return stack([p for p, _ in pairs], grid), stack([q for _, q in pairs], grid)


def coarsen(path: SamplePath, model: ModelSpec, factor: int) -> SamplePath:
    """Aggregate the Brownian increments of ``path`` onto a grid ``factor`` times coarser."""
    if factor < 1 or path.grid.steps % factor:
        raise GridError(f"cannot coarsen {path.grid.steps} steps by {factor}")
    grid = TimeGrid(path.grid.dt * factor, path.grid.horizon)
    dW = path.dW.reshape(-1, factor).sum(axis=1)
    dY = observation_increments(path.magnitude, path.theta, dW, model, grid)
    return SamplePath(path.theta, path.magnitude, dW, dY, grid, path.path_index)


def write_path_csv(path: SamplePath, target: Union[str, Path]) -> None:
    """Dump one path as CSV with columns t, dW, dY, X."""
    t = path.grid.times[:-1]
    table = np.column_stack([t, path.dW, path.dY, path.x])
    np.savetxt(target, table, delimiter=",", header="t,dW,dY,X", comments="", fmt="%.17g")
