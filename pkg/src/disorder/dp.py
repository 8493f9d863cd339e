"""Value iteration for the stationary optimal stopping problem on D^n, n <= 2.

The posterior vector is approximated by a Markov chain on the grid of
multiples of ``h``: one Euler step of the posterior dynamics, the single
Brownian increment integrated with 7-node Gauss-Hermite quadrature, and the
landing point interpolated back onto the grid (linear for n = 1, on the
Freudenthal triangulation for n = 2). The transition operator is assembled
once as a sparse matrix and every sweep is a Jacobi update::

    V_{m+1} = min(1 - |pi|, c |pi| dt + P V_m)
"""

import logging
import math
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import sparse

from .errors import EmptyBoundaryError, GridError, NoConvergenceError, UnsupportedModelError
from .filtering import project_onto_simplex
from .model import ModelSpec

QUADRATURE_NODES = 7
STOP_TOLERANCE = 1e-12
MONOTONE_SLACK = 1e-12


def _gauss_hermite() -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E[f(Z)], Z ~ N(0, 1)."""
    x, w = hermgauss(QUADRATURE_NODES)
    return math.sqrt(2.0) * x, w / math.sqrt(math.pi)


class SimplexGrid:
    """All points of D^n whose coordinates are multiples of h."""

    def __init__(self, n: int, h: float):
        if n not in (1, 2):
            raise UnsupportedModelError(f"value iteration supports n in (1, 2), got n={n}")
        size = int(round(1.0 / h))
        if size < 2 or abs(size * h - 1.0) > 1e-9:
            raise GridError(f"1/h must be an integer >= 2, got h={h}")
        self.n = n
        self.h = 1.0 / size
        self.size = size
        if n == 1:
            self.index = np.arange(size + 1)[:, None]
            self.lookup = np.arange(size + 1)
        else:
            i, j = np.meshgrid(np.arange(size + 1), np.arange(size + 1), indexing="ij")
            inside = i + j <= size
            self.index = np.column_stack([i[inside], j[inside]])
            self.lookup = np.full((size + 1, size + 1), -1, dtype=np.int64)
            self.lookup[self.index[:, 0], self.index[:, 1]] = np.arange(len(self.index))
        self.nodes = self.index * self.h

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def norms(self) -> np.ndarray:
        return self.nodes.sum(axis=1)

    def node_id(self, index: np.ndarray) -> np.ndarray:
        if self.n == 1:
            return index[..., 0]
        return self.lookup[index[..., 0], index[..., 1]]

    def interpolation(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Node ids and barycentric weights, each of shape (m, n + 1).

        Points are projected onto D^n first.
        """
        scaled = project_onto_simplex(np.atleast_2d(points)) / self.h
        size = self.size
        if self.n == 1:
            u = np.clip(scaled[:, 0], 0.0, size)
            i = np.minimum(np.floor(u), size - 1).astype(np.int64)
            f = u - i
            return np.column_stack([i, i + 1]), np.column_stack([1.0 - f, f])

        u, v = scaled[:, 0], scaled[:, 1]
        i, j = np.floor(u).astype(np.int64), np.floor(v).astype(np.int64)
        fu, fv = u - i, v - j
        upper = fu + fv > 1.0
        # points on the outer face, up to rounding, snap to the nearest face node
        edge = (i + j >= size) | (upper & (i + j + 2 > size))
        i_edge = np.clip(np.rint(u), 0, size).astype(np.int64)

        a = np.where(upper[:, None], np.column_stack([i + 1, j + 1]), np.column_stack([i, j]))
        b = np.column_stack([i + 1, j])
        c = np.column_stack([i, j + 1])
        wa = np.where(upper, fu + fv - 1.0, 1.0 - fu - fv)
        wb = np.where(upper, 1.0 - fv, fu)
        wc = np.where(upper, 1.0 - fu, fv)

        snap = np.column_stack([i_edge, size - i_edge])
        a = np.where(edge[:, None], snap, a)
        b = np.where(edge[:, None], snap, b)
        c = np.where(edge[:, None], snap, c)
        wa = np.where(edge, 1.0, np.maximum(wa, 0.0))
        wb = np.where(edge, 0.0, np.maximum(wb, 0.0))
        wc = np.where(edge, 0.0, np.maximum(wc, 0.0))
        ids = np.column_stack([self.node_id(a), self.node_id(b), self.node_id(c)])
        return ids, np.column_stack([wa, wb, wc])

    def operator(self, points: np.ndarray) -> sparse.csr_matrix:
        """Sparse (m, len(grid)) matrix evaluating the interpolant at ``points``."""
        ids, weights = self.interpolation(points)
        rows = np.repeat(np.arange(len(ids)), ids.shape[1])
        return sparse.csr_matrix(
            (weights.ravel(), (rows, ids.ravel())), shape=(len(ids), len(self))
        )


def transition_matrix(model: ModelSpec, grid: SimplexGrid, dt: float) -> sparse.csr_matrix:
    """One-step Markov chain on the grid for the constant-coefficient posterior."""
    atoms = model.atoms
    weights1 = np.asarray(model.prior1.weights, dtype=float)
    lam = model.disorder.constant_rate
    sigma = model.sigma.values[0]
    pi = grid.nodes
    x_hat = pi @ atoms
    drift = lam * weights1[None, :] * (1.0 - pi.sum(axis=1))[:, None] * dt
    diffusion = pi / sigma * (atoms[None, :] - x_hat[:, None]) * math.sqrt(dt)

    z, w = _gauss_hermite()
    blocks = [w_q * grid.operator(pi + drift + diffusion * z_q) for z_q, w_q in zip(z, w)]
    return sparse.csr_matrix(sum(blocks[1:], blocks[0]))


@dataclass(frozen=True)
class DPSolution:
    grid: SimplexGrid
    value: np.ndarray
    stop_mask: np.ndarray
    iterations: int
    sup_change: float
    dt: float

    def value_at(self, points: Any) -> np.ndarray:
        p = np.asarray(points, dtype=float).reshape(-1, self.grid.n)
        return self.grid.operator(p) @ self.value

    def table(self) -> np.ndarray:
        """Columns pi_1[, pi_2], value, stop."""
        return np.column_stack([self.grid.nodes, self.value, self.stop_mask.astype(float)])

    @property
    def stop_onset(self) -> float:
        """Smallest |pi| among stop nodes."""
        return float(self.grid.norms[self.stop_mask].min())


def solve_dp(
    model: ModelSpec,
    h: Optional[float] = None,
    dt: float = 1e-3,
    tol: float = 1e-7,
    max_iterations: int = 100_000,
) -> DPSolution:
    if not model.is_constant:
        raise UnsupportedModelError("value iteration needs constant sigma, cost and intensity")
    if model.n > 2:
        raise UnsupportedModelError(f"value iteration supports n <= 2, got n={model.n}")
    if h is None:
        h = 1.0 / 2000 if model.n == 1 else 1.0 / 400
    grid = SimplexGrid(model.n, h)
    step = transition_matrix(model, grid, dt)
    norms = grid.norms
    stop = 1.0 - norms
    running = model.cost.values[0] * norms * dt
    logging.info(f"value iteration on {len(grid)} nodes, h={grid.h:g}, dt={dt:g}")

    value = stop.copy()
    change = math.inf
    for iteration in range(1, max_iterations + 1):
        new = np.minimum(stop, running + step @ value)
        if np.any(new > value + MONOTONE_SLACK):
            raise NoConvergenceError("value iteration lost monotonicity", iteration, change)
        change = float(np.max(value - new))
        value = new
        if iteration % 1000 == 0:
            logging.debug(f"sweep {iteration}: sup change {change:.3e}")
        if change < tol:
            break
    else:
        raise NoConvergenceError(
            f"sup change {change:.3e} still above {tol:g} after {max_iterations} sweeps",
            max_iterations,
            change,
        )
    logging.info(f"value iteration converged after {iteration} sweeps")
    value = np.maximum(value, 0.0)
    return DPSolution(grid, value, value >= stop - STOP_TOLERANCE, iteration, change, dt)


@dataclass(frozen=True)
class Boundary:
    """Continuation nodes next to the stop region, and their stop-side neighbours."""

    nodes: np.ndarray
    norms: np.ndarray
    stop_side: np.ndarray

    @property
    def stop_side_norms(self) -> np.ndarray:
        return self.stop_side.sum(axis=1)

    def table(self) -> np.ndarray:
        return np.column_stack([self.nodes, self.norms])


def _neighbour_offsets(n: int) -> np.ndarray:
    if n == 1:
        return np.array([[1], [-1]])
    return np.array([[1, 0], [-1, 0], [0, 1], [0, -1], [1, -1], [-1, 1]])


def extract_boundary(solution: DPSolution) -> Boundary:
    grid, stop = solution.grid, solution.stop_mask
    if stop.all() or not stop.any():
        raise EmptyBoundaryError("stop region is empty or the whole simplex")
    continuation = np.zeros(len(grid), dtype=bool)
    stop_side = np.zeros(len(grid), dtype=bool)
    for offset in _neighbour_offsets(grid.n):
        moved = grid.index + offset
        inside = np.all(moved >= 0, axis=1) & (moved.sum(axis=1) <= grid.size)
        src = np.flatnonzero(inside)
        dst = grid.node_id(moved[inside])
        crossing = ~stop[src] & stop[dst]
        continuation[src[crossing]] = True
        stop_side[dst[crossing]] = True
    if not continuation.any():
        raise EmptyBoundaryError("no continuation node borders the stop region")
    nodes = grid.nodes[continuation]
    return Boundary(nodes, nodes.sum(axis=1), grid.nodes[stop_side])


def _uniform_simplex(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n + 1), size=size)[:, :n]


def concavity_check(solution: DPSolution, n_segments: int = 200, seed: int = 0) -> float:
    """Largest positive second difference of the interpolated value on random segments."""
    rng = np.random.default_rng(seed)
    n = solution.grid.n
    ends_a = _uniform_simplex(rng, n, n_segments)
    ends_b = _uniform_simplex(rng, n, n_segments)
    s = np.linspace(0.0, 1.0, 11)
    points = ends_a[:, None, :] + s[None, :, None] * (ends_b - ends_a)[:, None, :]
    values = solution.value_at(points.reshape(-1, n)).reshape(n_segments, len(s))
    second = values[:, :-2] - 2.0 * values[:, 1:-1] + values[:, 2:]
    return float(max(second.max(), 0.0))


def ray_monotonicity_check(solution: DPSolution, n_rays: int = 50, seed: int = 0) -> float:
    """Largest increase of V along rays of fixed proportions as |pi| grows."""
    rng = np.random.default_rng(seed)
    n = solution.grid.n
    directions = rng.dirichlet(np.ones(n), size=n_rays)
    radii = np.linspace(0.0, 1.0, 41)
    points = radii[None, :, None] * directions[:, None, :]
    values = solution.value_at(points.reshape(-1, n)).reshape(n_rays, len(radii))
    return float(max(np.diff(values, axis=1).max(), 0.0))
