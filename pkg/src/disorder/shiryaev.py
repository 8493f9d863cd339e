"""Classical constant-parameter disorder problem: threshold and value function.

On the continuation region the value U solves a second-order ODE that is
first-order linear in g = U'::

    rho pi^2 (1 - pi)^2 g' + lam (1 - pi) g + c pi = 0,   rho = b^2 / (2 sigma^2)

The bounded solution is

    g(pi) = -(c / rho) * int_0^pi exp(L (psi(s) - psi(pi))) / (s (1 - s)^2) ds

with L = lam / rho and psi(s) = log(s / (1 - s)) - 1 / s. The threshold a is
the root of the smooth-fit condition g(a) = -1, and U(pi) = 1 - a -
int_pi^a g(s) ds below it.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from scipy import integrate, optimize

from .errors import NoBracketError, ParameterError

QUAD_START = 1e-12
ROOT_TOLERANCE = 1e-10
UPPER_DIGITS = 12
MESH_DIGITS = 12


@dataclass(frozen=True)
class ClassicalParams:
    b: float
    sigma: float
    lam: float
    c: float

    def __post_init__(self) -> None:
        if self.b == 0:
            raise ParameterError("drift b must be non-zero")
        for name in ("sigma", "lam", "c"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def rho(self) -> float:
        return self.b**2 / (2.0 * self.sigma**2)

    @property
    def ratio(self) -> float:
        """lam / rho, the exponent of the integrating factor."""
        return self.lam / self.rho


def _psi(s: float) -> float:
    return math.log(s / (1.0 - s)) - 1.0 / s


def _weighted_integral(lo: float, hi: float, params: ClassicalParams) -> float:
    """int_lo^hi exp(L (psi(s) - psi(hi))) / (s (1 - s)^2) ds, with L = lam / rho."""
    ratio, psi_hi = params.ratio, _psi(hi)

    def integrand(s: float) -> float:
        return math.exp(ratio * (_psi(s) - psi_hi)) / (s * (1.0 - s) ** 2)

    value, _ = integrate.quad(integrand, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=200)
    return value


def _scaled_derivative_integral(pi: float, params: ClassicalParams) -> float:
    """Integral from QUAD_START to pi on a mesh refined geometrically toward 0 and 1."""
    if pi <= QUAD_START:
        return 0.0
    toward_zero = [pi * 10.0**-k for k in range(1, MESH_DIGITS + 1)]
    toward_one = [1.0 - (1.0 - pi) * 10.0**k for k in range(1, MESH_DIGITS + 1)]
    cuts = sorted({s for s in toward_zero + toward_one if QUAD_START < s < pi})
    mesh = [QUAD_START, *cuts, pi]
    psi_pi = _psi(pi)
    total = 0.0
    for lo, hi in zip(mesh, mesh[1:]):
        # rescale each piece from its own right end to the common reference
        total += _weighted_integral(lo, hi, params) * math.exp(params.ratio * (_psi(hi) - psi_pi))
    return total


def derivative(pi: float, params: ClassicalParams) -> float:
    """g(pi) = U'(pi) on the continuation branch, by direct quadrature."""
    return -(params.c / params.rho) * _scaled_derivative_integral(pi, params)


def _upper_bracket(params: ClassicalParams, lo: float) -> float:
    """First 1 - 10^-k above lo with g < -1; g blows up like -(c / rho) / ((L + 1)(1 - pi))."""
    for k in range(1, UPPER_DIGITS + 1):
        hi = 1.0 - 10.0**-k
        if hi > lo and derivative(hi, params) + 1.0 < 0.0:
            return hi
    raise NoBracketError(f"g(pi) > -1 up to 1 - 1e-{UPPER_DIGITS} for {params}")


def shiryaev_threshold(params: ClassicalParams, tol: float = ROOT_TOLERANCE) -> float:
    """Root of g(a) = -1 by bisection above lam / (lam + c)."""
    lo = params.lam / (params.lam + params.c)
    g_lo = derivative(lo, params)
    if g_lo + 1.0 <= 0.0:
        # g(lo) = -1 only at the boundary of the admissible range
        return lo
    hi = _upper_bracket(params, lo)
    a = optimize.bisect(lambda p: derivative(p, params) + 1.0, lo, hi, xtol=tol)
    logging.info(f"shiryaev threshold a={a:.10f} for {params}")
    return float(a)


@dataclass(frozen=True)
class ShiryaevSolution:
    threshold: float
    pi_grid: np.ndarray
    value_table: np.ndarray
    derivative_table: np.ndarray
    params: ClassicalParams
    tolerances: dict[str, float] = field(default_factory=dict)

    def value(self, pi: Any) -> Any:
        p = np.asarray(pi, dtype=float)
        out = np.where(p >= self.threshold, 1.0 - p, np.interp(p, self.pi_grid, self.value_table))
        return float(out) if out.ndim == 0 else out

    def derivative(self, pi: Any) -> Any:
        p = np.asarray(pi, dtype=float)
        out = np.where(p >= self.threshold, -1.0, np.interp(p, self.pi_grid, self.derivative_table))
        return float(out) if out.ndim == 0 else out

    def second_derivative(self, pi: Any) -> Any:
        """U'' from the free-boundary ODE below the threshold, 0 above."""
        p = np.asarray(pi, dtype=float)
        params = self.params
        inside = (p > 0.0) & (p < self.threshold)
        safe = np.where(inside, p, 0.5)
        g = np.interp(safe, self.pi_grid, self.derivative_table)
        u2 = -(params.lam * (1.0 - safe) * g + params.c * safe) / (params.rho * safe**2 * (1.0 - safe) ** 2)
        out = np.where(inside, u2, 0.0)
        return float(out) if out.ndim == 0 else out

    def header(self) -> dict[str, Any]:
        return {
            "threshold": self.threshold,
            "b": self.params.b,
            "sigma": self.params.sigma,
            "lambda": self.params.lam,
            "c": self.params.c,
            "resolution": len(self.pi_grid),
            "tolerances": dict(self.tolerances),
        }

    def table(self) -> np.ndarray:
        """Columns pi, U, U_prime."""
        return np.column_stack([self.pi_grid, self.value_table, self.derivative_table])


@lru_cache(maxsize=128)
def solve_shiryaev(params: ClassicalParams, resolution: int = 2001) -> ShiryaevSolution:
    """Threshold plus U and U' tabulated on a uniform grid of [0, 1]."""
    a = shiryaev_threshold(params)
    grid = np.linspace(0.0, 1.0, resolution)
    below = grid[grid < a]

    # march J(pi) = -(rho / c) g(pi) across the grid cells, rescaling as we go
    scaled = np.zeros(len(below) + 1)
    points = np.append(below, a)
    scaled[1] = _scaled_derivative_integral(points[1], params)
    for j in range(1, len(points) - 1):
        lo, hi = points[j], points[j + 1]
        decay = math.exp(params.ratio * (_psi(lo) - _psi(hi)))
        scaled[j + 1] = scaled[j] * decay + _weighted_integral(lo, hi, params)
    g = -(params.c / params.rho) * scaled

    # U(pi) = 1 - a - int_pi^a g, integrated from the threshold downwards
    tail = integrate.cumulative_trapezoid(g[::-1], -points[::-1], initial=0.0)[::-1]
    u_below = (1.0 - a) - tail[:-1]

    value = np.where(grid >= a, 1.0 - grid, 0.0)
    deriv = np.where(grid >= a, -1.0, 0.0)
    value[: len(below)] = u_below
    deriv[: len(below)] = g[:-1]
    value.setflags(write=False)
    deriv.setflags(write=False)
    grid.setflags(write=False)
    return ShiryaevSolution(
        threshold=a,
        pi_grid=grid,
        value_table=value,
        derivative_table=deriv,
        params=params,
        tolerances={"root": ROOT_TOLERANCE, "quad_start": QUAD_START, "quad_abs": 1e-13},
    )


def shiryaev_value(pi: float, params: ClassicalParams) -> float:
    return solve_shiryaev(params).value(pi)


def variational_residual(pi: float, params: ClassicalParams, solution: ShiryaevSolution) -> float:
    """lam (1 - pi) U' + rho pi^2 (1 - pi)^2 U'' + c pi at pi != a.

    Below the threshold U' comes from direct quadrature and U'' from a central
    difference of it; above, U = 1 - pi.
    """
    a = solution.threshold
    if pi >= a:
        return -params.lam * (1.0 - pi) + params.c * pi
    h = min(1e-4, pi / 4.0, (a - pi) / 4.0)
    g = derivative(pi, params)
    g2 = (derivative(pi + h, params) - derivative(pi - h, params)) / (2.0 * h)
    return params.lam * (1.0 - pi) * g + params.rho * pi**2 * (1.0 - pi) ** 2 * g2 + params.c * pi
