"""Posterior filters for the disorder state.

Two representations of the same posterior are provided:

* :class:`ExactFilter` evaluates the Kallianpur-Striebel ratio. For every
  atom it keeps the log-likelihood since time zero and the log of the
  accumulator ``A_i(t) = int_0^t L_i(theta, t) nu(dtheta)``. Each step
  multiplies ``A_i`` by the one-step likelihood factor and adds the new
  trapezoid slice, so a trajectory costs O(n * steps).
* :class:`EulerFilter` integrates the Kushner-Stratonovich SDE with an
  Euler-Maruyama step driven by the innovation ``(dY - X_hat dt) / sigma``
  and projects back onto D^n after every step.

Both filters are streaming: ``reset`` returns the posterior at time zero and
``advance`` consumes one observation increment per path.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import FilterInputError
from .model import DisorderLaw, ExponentialTail, ModelSpec, Schedule, disorder_cdf
from .sim import SamplePath, TimeGrid, simulate_batch

CLAMP_TOLERANCE = 1e-12


def project_onto_simplex(pi: np.ndarray) -> np.ndarray:
    """Clamp components to [0, 1] and rescale rows whose sum exceeds 1."""
    pi = np.clip(pi, 0.0, 1.0)
    total = pi.sum(axis=-1, keepdims=True)
    return np.where(total > 1.0, pi / np.maximum(total, 1.0), pi)


def _check_increments(dY: np.ndarray) -> None:
    if not np.all(np.isfinite(dY)):
        raise FilterInputError("observation increments contain NaN or inf")


class PosteriorStream(Protocol):
    def reset(self, n_paths: int) -> np.ndarray: ...

    def advance(self, dY_k: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class PosteriorPath:
    grid: TimeGrid
    pi: np.ndarray

    @property
    def pi_tilde(self) -> np.ndarray:
        return self.pi.sum(axis=-1)

    def x_hat(self, atoms: np.ndarray) -> np.ndarray:
        return self.pi @ np.asarray(atoms, dtype=float)

    def table(self, atoms: np.ndarray) -> np.ndarray:
        """Columns t, pi_1..pi_n, pi_tilde, x_hat."""
        return np.column_stack([self.grid.times, self.pi, self.pi_tilde, self.x_hat(atoms)])


class ExactFilter:
    """Recursive log-space evaluation of the Kallianpur-Striebel formula."""

    def __init__(
        self,
        atoms: Sequence[float],
        weights0: Sequence[float],
        weights1: Sequence[float],
        law: DisorderLaw,
        sigma: Schedule,
        grid: TimeGrid,
    ):
        self.atoms = np.asarray(atoms, dtype=float)
        self.grid = grid
        times = grid.times
        pi_tilde = law.atom_at_zero
        cumulative = np.asarray(law.cumulative_hazard(times), dtype=float)
        with np.errstate(divide="ignore"):
            self._log_c0 = np.log(pi_tilde * np.asarray(weights0, dtype=float))
            self._log_c1 = np.log((1.0 - pi_tilde) * np.asarray(weights1, dtype=float))
            self._log_survival = math.log1p(-pi_tilde) if pi_tilde < 1 else -np.inf
            self._log_survival = self._log_survival - cumulative
            self._log_density = np.log(np.asarray(law.intensity(times), dtype=float)) - cumulative
        sig2 = np.asarray(sigma(times[:-1]), dtype=float) ** 2
        self._gain = self.atoms[None, :] / sig2[:, None]
        self._compensator = (self.atoms[None, :] ** 2) / (2.0 * sig2[:, None]) * grid.dt
        self._log_half_dt = math.log(grid.dt / 2.0)
        self._k = 0
        self.log_complement = np.zeros(0)

    @classmethod
    def from_model(cls, model: ModelSpec, grid: TimeGrid) -> "ExactFilter":
        return cls(
            model.prior1.atoms,
            model.prior0.weights,
            model.prior1.weights,
            model.disorder,
            model.sigma,
            grid,
        )

    @classmethod
    def classical(
        cls, l: float, lambda_l: float, sigma: float, pi_tilde: float, grid: TimeGrid
    ) -> "ExactFilter":
        """One-atom filter with an exponential tail of rate ``lambda_l``."""
        if l == 0 or not lambda_l > 0 or not sigma > 0:
            raise FilterInputError(f"need l != 0, lambda_l > 0, sigma > 0; got {l}, {lambda_l}, {sigma}")
        law = DisorderLaw(float(pi_tilde), ExponentialTail(float(lambda_l)))
        return cls((l,), (1.0,), (1.0,), law, Schedule.constant(sigma), grid)

    def _posterior(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            log_num = np.logaddexp(self._log_c0 + self._log_lik, self._log_c1 + self._log_acc)
        survival = np.full((log_num.shape[0], 1), self._log_survival[self._k])
        log_den = logsumexp(np.hstack([log_num, survival]), axis=1)
        self.log_complement = survival[:, 0] - log_den
        return project_onto_simplex(np.exp(log_num - log_den[:, None]))

    def reset(self, n_paths: int) -> np.ndarray:
        n = len(self.atoms)
        self._k = 0
        self._log_lik = np.zeros((n_paths, n))
        self._log_acc = np.full((n_paths, n), -np.inf)
        return self._posterior()

    def advance(self, dY_k: np.ndarray) -> np.ndarray:
        k = self._k
        step = self._gain[k] * np.asarray(dY_k)[:, None] - self._compensator[k]
        slice_ = self._log_half_dt + np.logaddexp(self._log_density[k] + step, self._log_density[k + 1])
        self._log_lik = self._log_lik + step
        self._log_acc = np.logaddexp(self._log_acc + step, slice_)
        self._k = k + 1
        return self._posterior()


class EulerFilter:
    """Euler-Maruyama scheme for the Kushner-Stratonovich equation."""

    def __init__(
        self,
        atoms: Sequence[float],
        weights1: Sequence[float],
        pi0: Sequence[float],
        hazard_values: np.ndarray,
        sigma_values: np.ndarray,
        dt: float,
    ):
        self.atoms = np.asarray(atoms, dtype=float)
        self._weights = np.asarray(weights1, dtype=float)
        self._pi0 = np.asarray(pi0, dtype=float)
        self._hazard = np.asarray(hazard_values, dtype=float)
        self._sigma = np.asarray(sigma_values, dtype=float)
        self._dt = dt
        self._k = 0

    @classmethod
    def from_model(cls, model: ModelSpec, grid: TimeGrid) -> "EulerFilter":
        left = grid.times[:-1]
        return cls(
            model.prior1.atoms,
            model.prior1.weights,
            model.initial_posterior,
            np.asarray(model.disorder.intensity(left), dtype=float),
            np.asarray(model.sigma(left), dtype=float),
            grid.dt,
        )

    def reset(self, n_paths: int) -> np.ndarray:
        self._k = 0
        self._pi = np.tile(self._pi0, (n_paths, 1))
        return self._pi

    def advance(self, dY_k: np.ndarray) -> np.ndarray:
        k, dt, pi = self._k, self._dt, self._pi
        sigma = self._sigma[k]
        x_hat = pi @ self.atoms
        innovation = (np.asarray(dY_k) - x_hat * dt) / sigma
        drift = self._weights * self._hazard[k] * (1.0 - pi.sum(axis=1))[:, None] * dt
        diffusion = pi / sigma * (self.atoms - x_hat[:, None]) * innovation[:, None]
        self._pi = project_onto_simplex(pi + drift + diffusion)
        self._k = k + 1
        return self._pi


def run_filter(stream: PosteriorStream, dY: np.ndarray) -> np.ndarray:
    """Run a streaming filter over increments of shape (paths, steps)."""
    dY = np.atleast_2d(dY)
    _check_increments(dY)
    out = [stream.reset(dY.shape[0])]
    for k in range(dY.shape[1]):
        out.append(stream.advance(dY[:, k]))
    return np.stack(out, axis=1)


def filter_exact(model: ModelSpec, path: SamplePath) -> PosteriorPath:
    pi = run_filter(ExactFilter.from_model(model, path.grid), path.dY)
    return PosteriorPath(path.grid, pi[0])


def filter_sde(model: ModelSpec, path: SamplePath) -> PosteriorPath:
    pi = run_filter(EulerFilter.from_model(model, path.grid), path.dY)
    return PosteriorPath(path.grid, pi[0])


def shiryaev_filter(
    l: float, lambda_l: float, sigma: float, pi_tilde: float, path: SamplePath
) -> np.ndarray:
    """Scalar posterior g_l computed as if the model were (delta_l, Exp(lambda_l))."""
    stream = ExactFilter.classical(l, lambda_l, sigma, pi_tilde, path.grid)
    return run_filter(stream, path.dY)[0, :, 0]


def sup_discrepancy(model: ModelSpec, dY: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Per-path sup over time and components of |exact - Euler|."""
    exact = run_filter(ExactFilter.from_model(model, grid), dY)
    euler = run_filter(EulerFilter.from_model(model, grid), dY)
    return np.abs(exact - euler).max(axis=(1, 2))


@dataclass(frozen=True)
class PosteriorMeanRow:
    t: float
    mean: float
    se: float
    cdf: float


def posterior_mean_check(
    model: ModelSpec,
    n_paths: int,
    grid: TimeGrid,
    seed: int,
    checkpoints: Optional[Sequence[float]] = None,
    batch_size: int = 256,
) -> list[PosteriorMeanRow]:
    """Monte Carlo mean of pi_tilde at checkpoints against P(Theta <= t)."""
    if checkpoints is None:
        checkpoints = [t for t in (0.0, 1.0, 5.0, 10.0, 20.0) if t <= grid.horizon]
    index = {grid.index_at(t): t for t in checkpoints}
    samples: dict[int, list[np.ndarray]] = {k: [] for k in index}
    for start in range(0, n_paths, batch_size):
        batch = simulate_batch(model, grid, seed, range(start, min(start + batch_size, n_paths)))
        _check_increments(batch.dY)
        exact = ExactFilter.from_model(model, grid)
        pi = exact.reset(len(batch))
        last = max(index)
        for k in range(last + 1):
            if k in samples:
                samples[k].append(pi.sum(axis=1))
            if k < last:
                pi = exact.advance(batch.dY[:, k])
        logging.debug(f"posterior mean check: {start + len(batch)}/{n_paths} paths")

    rows = []
    for k, t in sorted(index.items()):
        values = np.concatenate(samples[k])
        se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
        rows.append(PosteriorMeanRow(k * grid.dt, float(values.mean()), se, disorder_cdf(model.disorder, k * grid.dt)))
    return rows
