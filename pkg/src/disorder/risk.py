"""Monte Carlo Bayes risk of stopping strategies.

Paths are processed in batches keyed by path index, so every call with the
same ``(master_seed, n_paths, grid)`` sees the same scenarios whatever the
strategy, model parameters, batch size or worker count.
"""

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, TypeVar, Union

import numpy as np
from scipy import optimize

from .checks import InequalityCheck, at_most
from .errors import FlatObjectiveError, ParameterError, UnsupportedModelError
from .filtering import ExactFilter
from .model import ModelSpec
from .shiryaev import ClassicalParams, solve_shiryaev
from .sim import ScenarioBatch, TimeGrid, coupled_batch, simulate_batch

Z_99 = 2.576
TRUNCATION_GATE = 0.01

T = TypeVar("T")


@dataclass(frozen=True)
class ThresholdOnTrue:
    """Stop when the correctly specified posterior reaches ``a``."""

    a: float

    def __post_init__(self) -> None:
        if not 0.0 < self.a <= 1.0:
            raise ParameterError(f"threshold must lie in (0, 1], got {self.a}")

    def label(self) -> str:
        return f"threshold:{self.a:g}"


@dataclass(frozen=True)
class ThresholdMismatched:
    """Stop when the one-atom statistic g_l reaches ``a``."""

    l: float
    lambda_l: float
    a: float

    def __post_init__(self) -> None:
        if not 0.0 < self.a <= 1.0:
            raise ParameterError(f"threshold must lie in (0, 1], got {self.a}")
        if self.l == 0 or not self.lambda_l > 0:
            raise ParameterError(f"need l != 0 and lambda_l > 0, got {self.l}, {self.lambda_l}")

    def label(self) -> str:
        return f"mismatched:l={self.l:g},lambda={self.lambda_l:g},a={self.a:g}"


@dataclass(frozen=True)
class FixedTime:
    t: float

    def __post_init__(self) -> None:
        if not self.t >= 0:
            raise ParameterError(f"fixed stopping time must be >= 0, got {self.t}")

    def label(self) -> str:
        return f"fixed:{self.t:g}"


StrategySpec = Union[ThresholdOnTrue, ThresholdMismatched, FixedTime]

_KEYED = re.compile(r"(\w+)=([-+0-9.eE]+)")


def parse_strategy(text: str) -> StrategySpec:
    """Parse ``threshold:A``, ``mismatched:l=L,lambda=R,a=A`` or ``fixed:T``."""
    kind, _, rest = text.strip().partition(":")
    try:
        if kind == "threshold":
            return ThresholdOnTrue(float(rest))
        if kind == "fixed":
            return FixedTime(float(rest))
        if kind == "mismatched":
            values = {k: float(v) for k, v in _KEYED.findall(rest)}
            return ThresholdMismatched(values["l"], values["lambda"], values["a"])
    except (KeyError, ValueError) as e:
        raise ParameterError(f"malformed strategy {text!r}: {e}") from e
    raise ParameterError(f"unknown strategy kind {kind!r} in {text!r}")


@dataclass(frozen=True)
class LossSample:
    """Per-path loss components; a trailing axis indexes scanned levels."""

    false_alarm: np.ndarray
    delay: np.ndarray
    truncated: np.ndarray

    @property
    def loss(self) -> np.ndarray:
        return self.false_alarm + self.delay

    @classmethod
    def concat(cls, parts: Sequence["LossSample"]) -> "LossSample":
        return cls(
            np.concatenate([p.false_alarm for p in parts]),
            np.concatenate([p.delay for p in parts]),
            np.concatenate([p.truncated for p in parts]),
        )


@dataclass(frozen=True)
class RiskEstimate:
    mean: float
    half_width: float
    se: float
    n_paths: int
    grid: TimeGrid
    false_alarm_rate: float
    mean_delay: float
    truncated: int = 0
    strategy: str = ""

    @property
    def horizon_too_short(self) -> bool:
        return self.truncated > TRUNCATION_GATE * self.n_paths

    def to_dict(self) -> dict[str, Union[float, int, str]]:
        return {
            "strategy": self.strategy,
            "mean": self.mean,
            "half_width": self.half_width,
            "se": self.se,
            "false_alarm": self.false_alarm_rate,
            "delay": self.mean_delay,
            "n_paths": self.n_paths,
            "truncated": self.truncated,
            "dt": self.grid.dt,
            "horizon": self.grid.horizon,
        }


def summarize(sample: LossSample, grid: TimeGrid, strategy: str = "") -> RiskEstimate:
    n = len(sample.false_alarm)
    false_alarm_rate = float(np.sum(sample.false_alarm) / n)
    mean_delay = float(np.sum(sample.delay) / n)
    se = float(np.std(sample.loss, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    truncated = int(np.sum(sample.truncated))
    estimate = RiskEstimate(
        mean=false_alarm_rate + mean_delay,
        half_width=Z_99 * se,
        se=se,
        n_paths=n,
        grid=grid,
        false_alarm_rate=false_alarm_rate,
        mean_delay=mean_delay,
        truncated=truncated,
        strategy=strategy,
    )
    if estimate.horizon_too_short:
        logging.warning(
            f"HorizonTooShort: {truncated}/{n} paths never stopped before T={grid.horizon} ({strategy})"
        )
    return estimate


def _map_batches(
    fn: Callable[[range], T], n_paths: int, batch_size: int, workers: int
) -> list[T]:
    chunks = [range(s, min(s + batch_size, n_paths)) for s in range(0, n_paths, batch_size)]
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _constant_sigma(model: ModelSpec) -> float:
    if not model.sigma.is_constant:
        raise UnsupportedModelError("the one-atom statistic needs a constant sigma")
    return model.sigma.values[0]


def _statistic(model: ModelSpec, strategy: StrategySpec, grid: TimeGrid) -> ExactFilter:
    if isinstance(strategy, ThresholdMismatched):
        return ExactFilter.classical(
            strategy.l, strategy.lambda_l, _constant_sigma(model), model.pi_tilde, grid
        )
    return ExactFilter.from_model(model, grid)


def first_passage(stat: ExactFilter, dY: np.ndarray, levels: Sequence[float]) -> np.ndarray:
    """First grid index with posterior >= level, per path and level.

    Compared through log(1 - pi_tilde) so a level of 1 is only reached when
    the complement vanishes exactly. Paths that never hit get ``steps + 1``.
    """
    n_paths, steps = dY.shape
    with np.errstate(divide="ignore"):
        bounds = np.log1p(-np.asarray(levels, dtype=float))
    hit = np.full((n_paths, len(bounds)), steps + 1, dtype=np.int64)

    def record(k: int) -> None:
        newly = (stat.log_complement[:, None] <= bounds[None, :]) & (hit > steps)
        hit[newly] = k

    stat.reset(n_paths)
    record(0)
    for k in range(steps):
        if np.all(hit <= steps):
            break
        stat.advance(dY[:, k])
        record(k + 1)
    return hit


def losses_from_indices(
    model: ModelSpec, theta: np.ndarray, hit: np.ndarray, grid: TimeGrid
) -> LossSample:
    truncated = hit > grid.steps
    tau = np.minimum(hit, grid.steps) * grid.dt
    theta_b = theta.reshape(theta.shape + (1,) * (tau.ndim - 1))
    false_alarm = (tau < theta_b).astype(float)
    cost_tau = np.asarray(model.cost.integral(tau), dtype=float)
    cost_theta = np.asarray(model.cost.integral(np.minimum(theta_b, grid.horizon)), dtype=float)
    delay = np.where(tau > theta_b, cost_tau - cost_theta, 0.0)
    return LossSample(false_alarm, delay, truncated)


def _batch_losses(
    model: ModelSpec, strategy: StrategySpec, batch: ScenarioBatch
) -> LossSample:
    grid = batch.grid
    if isinstance(strategy, FixedTime):
        hit = np.full((len(batch), 1), grid.index_at(strategy.t), dtype=np.int64)
    else:
        hit = first_passage(_statistic(model, strategy, grid), batch.dY, [strategy.a])
    sample = losses_from_indices(model, batch.theta, hit, grid)
    return LossSample(sample.false_alarm[:, 0], sample.delay[:, 0], sample.truncated[:, 0])


def simulate_losses(
    model: ModelSpec,
    strategy: StrategySpec,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    batch_size: int = 256,
    workers: int = 1,
) -> LossSample:
    def run(indices: range) -> LossSample:
        return _batch_losses(model, strategy, simulate_batch(model, grid, master_seed, indices))

    return LossSample.concat(_map_batches(run, n_paths, batch_size, workers))


def estimate_risk(
    model: ModelSpec,
    strategy: StrategySpec,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    batch_size: int = 256,
    workers: int = 1,
) -> RiskEstimate:
    sample = simulate_losses(model, strategy, grid, n_paths, master_seed, batch_size, workers)
    return summarize(sample, grid, strategy.label())


@dataclass(frozen=True)
class ScanRow:
    a: float
    mean: float
    half_width: float
    false_alarm: float
    delay: float


@dataclass(frozen=True)
class ThresholdOptimum:
    a_star: float
    estimate: RiskEstimate
    scan: list[ScanRow] = field(default_factory=list)

    def scan_table(self) -> np.ndarray:
        """Columns a, mean, half_width, false_alarm, delay."""
        return np.array([[r.a, r.mean, r.half_width, r.false_alarm, r.delay] for r in self.scan])


def scan_thresholds(
    model: ModelSpec,
    levels: Sequence[float],
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    batch_size: int = 256,
    workers: int = 1,
) -> list[RiskEstimate]:
    """Risk of ThresholdOnTrue at every level from one filter pass per batch."""
    levels = np.asarray(levels, dtype=float)

    def run(indices: range) -> LossSample:
        batch = simulate_batch(model, grid, master_seed, indices)
        hit = first_passage(ExactFilter.from_model(model, grid), batch.dY, levels)
        return losses_from_indices(model, batch.theta, hit, grid)

    sample = LossSample.concat(_map_batches(run, n_paths, batch_size, workers))
    return [
        summarize(
            LossSample(sample.false_alarm[:, j], sample.delay[:, j], sample.truncated[:, j]),
            grid,
            ThresholdOnTrue(float(a)).label(),
        )
        for j, a in enumerate(levels)
    ]


def optimize_threshold(
    model: ModelSpec,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    bracket: tuple[float, float] = (0.05, 0.95),
    points: int = 61,
    refine_iterations: int = 12,
    batch_size: int = 256,
    workers: int = 1,
) -> ThresholdOptimum:
    """Best threshold on the true posterior: CRN scan, then bounded refinement.

    The resulting risk estimates an upper bound for the optimal Bayes risk.
    """
    lo, hi = bracket
    if not 0.0 < lo < hi < 1.0:
        raise ParameterError(f"bracket must lie inside (0, 1), got {bracket}")
    levels = np.linspace(lo, hi, points)
    estimates = scan_thresholds(model, levels, grid, n_paths, master_seed, batch_size, workers)
    scan = [
        ScanRow(float(a), e.mean, e.half_width, e.false_alarm_rate, e.mean_delay)
        for a, e in zip(levels, estimates)
    ]
    means = np.array([e.mean for e in estimates])
    spread = float(means.max() - means.min())
    widest = max(e.half_width for e in estimates)
    if spread <= 2.0 * widest:
        raise FlatObjectiveError(
            f"risk varies by {spread:.3g} across the bracket, within noise {2 * widest:.3g}; "
            "raise n_paths or widen the bracket",
            scan=scan,
        )

    best = int(np.argmin(means))
    a_star, estimate = float(levels[best]), estimates[best]
    if refine_iterations > 0:
        cache: dict[float, RiskEstimate] = {}

        def objective(a: float) -> float:
            cache[a] = estimate_risk(
                model, ThresholdOnTrue(a), grid, n_paths, master_seed, batch_size, workers
            )
            return cache[a].mean

        left, right = levels[max(best - 1, 0)], levels[min(best + 1, points - 1)]
        result = optimize.minimize_scalar(
            objective,
            bounds=(left, right),
            method="bounded",
            options={"maxiter": refine_iterations, "xatol": 1e-4},
        )
        refined = cache.get(float(result.x))
        if refined is not None and refined.mean < estimate.mean:
            a_star, estimate = float(result.x), refined
    logging.info(f"best threshold a*={a_star:.4f} risk={estimate.mean:.5f} ± {estimate.half_width:.5f}")
    return ThresholdOptimum(a_star, estimate, scan)


@dataclass(frozen=True)
class RobustnessResult:
    a_l: float
    V_mu_delta_l: RiskEstimate
    V_gamma: RiskEstimate
    V_delta_l_exact: float
    correction: float
    V_delta_l_coupled: Optional[RiskEstimate] = None
    coupling_violations: Optional[int] = None
    a_r: Optional[float] = None
    V_delta_r_exact: Optional[float] = None
    V_mu_delta_r: Optional[RiskEstimate] = None
    V_mu_upper: Optional[RiskEstimate] = None
    checks: list[InequalityCheck] = field(default_factory=list)

    @property
    def bound_slack(self) -> dict[str, float]:
        return {c.check: c.slack for c in self.checks}

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.gating)


def _coupled_pass(
    model: ModelSpec,
    l: float,
    lambda_l: float,
    a_l: float,
    grid: TimeGrid,
    n_paths: int,
    master_seed: int,
    batch_size: int,
    workers: int,
) -> tuple[RiskEstimate, int]:
    """Stop both coupled paths with the delta_l statistic at a_l.

    Returns the risk of the delta_l model against Theta_l and the number of
    paths where it stopped strictly before the statistic on the true path.
    """
    sigma = _constant_sigma(model)

    def run(indices: range) -> tuple[LossSample, int]:
        true_batch, l_batch = coupled_batch(model, (l, lambda_l), grid, master_seed, indices)
        stat = ExactFilter.classical(l, lambda_l, sigma, model.pi_tilde, grid)
        hit_mu = first_passage(stat, true_batch.dY, [a_l])
        hit_l = first_passage(stat, l_batch.dY, [a_l])
        sample = losses_from_indices(model, l_batch.theta, hit_l, grid)
        return (
            LossSample(sample.false_alarm[:, 0], sample.delay[:, 0], sample.truncated[:, 0]),
            int(np.sum(hit_l < hit_mu)),
        )

    parts = _map_batches(run, n_paths, batch_size, workers)
    sample = LossSample.concat([p for p, _ in parts])
    label = ThresholdMismatched(l, lambda_l, a_l).label() + " on coupled path"
    return summarize(sample, grid, label), sum(v for _, v in parts)


def robustness_risks(
    model: ModelSpec,
    l: float,
    lambda_l: float,
    n_paths: int,
    grid: TimeGrid,
    master_seed: int,
    r: Optional[float] = None,
    lambda_r: Optional[float] = None,
    bracket: tuple[float, float] = (0.05, 0.95),
    z: float = 3.0,
    allowance: float = 0.0,
    optimize_upper: bool = True,
    refine_iterations: int = 0,
    batch_size: int = 256,
    workers: int = 1,
) -> RobustnessResult:
    """Risks entering the robustness inequalities for a constant-parameter model.

    V^mu itself is bracketed: the best threshold rule on the true posterior
    gives an upper bound and the classical value for the largest magnitude a
    lower bound. Each inequality is checked against whichever side keeps it a
    necessary condition.
    """
    if not model.is_constant:
        raise UnsupportedModelError("robustness risks need constant sigma, cost and intensity")
    sigma, c = model.sigma.values[0], model.cost.values[0]
    lam, pi_tilde = model.disorder.constant_rate, model.pi_tilde
    run = dict(grid=grid, n_paths=n_paths, master_seed=master_seed, batch_size=batch_size, workers=workers)

    sol_l = solve_shiryaev(ClassicalParams(l, sigma, lambda_l, c))
    a_l = sol_l.threshold
    v_mu_l = estimate_risk(model, ThresholdMismatched(l, lambda_l, a_l), **run)
    v_gamma = estimate_risk(model, ThresholdOnTrue(a_l), **run)
    v_l = sol_l.value(pi_tilde)
    correction = c * (lam - lambda_l) / (lam * lambda_l) * (1.0 - pi_tilde)

    atoms = model.atoms
    coupled, violations = None, None
    one_signed = bool(np.all(atoms > 0) or np.all(atoms < 0))
    if one_signed and l == atoms[np.argmin(np.abs(atoms))] and lambda_l <= lam:
        coupled, violations = _coupled_pass(model, l, lambda_l, a_l, **run)

    a_r = v_r = v_mu_r = None
    if r is not None:
        sol_r = solve_shiryaev(ClassicalParams(r, sigma, lambda_r if lambda_r is not None else lam, c))
        a_r, v_r = sol_r.threshold, sol_r.value(pi_tilde)
        v_mu_r = estimate_risk(model, ThresholdMismatched(r, sol_r.params.lam, a_r), **run)

    upper = None
    if optimize_upper:
        try:
            upper = optimize_threshold(
                model, grid, n_paths, master_seed, bracket,
                refine_iterations=refine_iterations, batch_size=batch_size, workers=workers,
            ).estimate
        except FlatObjectiveError as e:
            logging.warning(f"no upper bracket for V^mu: {e}")

    def mc(name: str, est: RiskEstimate) -> tuple[str, float, float]:
        return (name, est.mean, est.se)

    checks = [
        at_most("mismatch-upper-bound", mc("V_mu_delta_l", v_mu_l),
                ("V_delta_l + correction", v_l + correction, 0.0), z, allowance),
        at_most("threshold-upper-bound", mc("V_gamma", v_gamma), ("V_delta_l", v_l, 0.0), z, allowance),
    ]
    if violations is not None:
        checks.append(at_most("coupled-stopping-order", ("violating paths", violations, 0.0),
                              ("zero", 0.0, 0.0), z))
    if coupled is not None and lambda_l == lam:
        # discrete monitoring can only add risk to the classical optimum
        checks.append(at_most("classical-value-vs-mc", ("V_delta_l", v_l, 0.0),
                              mc("V_delta_l_mc", coupled), z, allowance, gating=False))
    if upper is not None:
        checks.append(at_most("threshold-suboptimal", mc("V_mu_upper", upper), mc("V_gamma", v_gamma), z))
    if v_r is not None:
        checks.append(at_most("mismatch-suboptimal", ("V_delta_r", v_r, 0.0), mc("V_mu_delta_l", v_mu_l), z))
        checks.append(at_most("mismatch-suboptimal-r", ("V_delta_r", v_r, 0.0), mc("V_mu_delta_r", v_mu_r), z))
        if upper is not None:
            checks.append(at_most("lower-bracket", ("V_delta_r", v_r, 0.0), mc("V_mu_upper", upper), z))

    return RobustnessResult(
        a_l=a_l,
        V_mu_delta_l=v_mu_l,
        V_gamma=v_gamma,
        V_delta_l_exact=v_l,
        correction=correction,
        V_delta_l_coupled=coupled,
        coupling_violations=violations,
        a_r=a_r,
        V_delta_r_exact=v_r,
        V_mu_delta_r=v_mu_r,
        V_mu_upper=upper,
        checks=checks,
    )
