"""Problem instance: drift priors, disorder-time law, volatility and cost.

A model file is JSON with the keys ``atoms``, ``pi_tilde``, ``disorder``,
``sigma`` and ``cost``::

    {
      "atoms": [{"b": 0.5, "p0": 0.5, "p1": 0.5}, {"b": 2.0, "p0": 0.5, "p1": 0.5}],
      "pi_tilde": 0.1,
      "disorder": {"type": "exponential", "rate": 0.2},
      "sigma": 1.0,
      "cost": {"breaks": [10.0], "values": [1.0, 2.0]}
    }

``disorder`` is either ``{"type": "exponential", "rate": r}`` or
``{"type": "piecewise", "breaks": [...], "rates": [...]}`` where ``rates``
has one more entry than ``breaks``.
"""

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from scipy import integrate

from .errors import ModelValidationError, Violation

WEIGHT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class Schedule:
    """Right-continuous piecewise-constant function on [0, inf).

    ``values[k]`` applies on ``[breaks[k-1], breaks[k])``; a constant
    schedule has no breaks.
    """

    breaks: tuple[float, ...]
    values: tuple[float, ...]

    @classmethod
    def constant(cls, value: float) -> "Schedule":
        return cls(breaks=(), values=(float(value),))

    @property
    def is_constant(self) -> bool:
        return len(set(self.values)) == 1

    @property
    def knots(self) -> np.ndarray:
        return np.concatenate(([0.0], np.asarray(self.breaks, dtype=float)))

    def _cumulative_at_knots(self) -> np.ndarray:
        widths = np.diff(self.knots)
        return np.concatenate(([0.0], np.cumsum(np.asarray(self.values[:-1]) * widths)))

    def __call__(self, t: Any) -> Any:
        idx = np.searchsorted(self.breaks, t, side="right")
        out = np.asarray(self.values, dtype=float)[idx]
        return float(out) if np.ndim(out) == 0 else out

    def integral(self, t: Any) -> Any:
        """Return the integral of the schedule over [0, t]."""
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.breaks, t_arr, side="right")
        values = np.asarray(self.values, dtype=float)
        out = self._cumulative_at_knots()[idx] + values[idx] * (t_arr - self.knots[idx])
        return float(out) if out.ndim == 0 else out

    def inverse_integral(self, level: Any) -> Any:
        """Return t with integral(t) == level (values must be positive)."""
        lv = np.asarray(level, dtype=float)
        cum = self._cumulative_at_knots()
        idx = np.searchsorted(cum, lv, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        values = np.asarray(self.values, dtype=float)
        out = self.knots[idx] + (lv - cum[idx]) / values[idx]
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor: float) -> "Schedule":
        return Schedule(self.breaks, tuple(factor * v for v in self.values))

    def dominates(self, other: "Schedule", horizon: float) -> bool:
        """Return True if self >= other pointwise on [0, horizon]."""
        points = np.unique(np.concatenate(([0.0], self.breaks, other.breaks)))
        points = points[points <= horizon]
        return bool(np.all(np.asarray(self(points)) >= np.asarray(other(points))))

    def to_raw(self) -> Union[float, dict[str, list[float]]]:
        if not self.breaks:
            return self.values[0]
        return {"breaks": list(self.breaks), "values": list(self.values)}


@dataclass(frozen=True)
class ExponentialTail:
    rate: float

    @property
    def intensity(self) -> Schedule:
        return Schedule.constant(self.rate)

    def to_raw(self) -> dict[str, Any]:
        return {"type": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class PiecewiseHazardTail:
    breaks: tuple[float, ...]
    rates: tuple[float, ...]

    @property
    def intensity(self) -> Schedule:
        return Schedule(self.breaks, self.rates)

    def to_raw(self) -> dict[str, Any]:
        return {"type": "piecewise", "breaks": list(self.breaks), "rates": list(self.rates)}


Tail = Union[ExponentialTail, PiecewiseHazardTail]


@dataclass(frozen=True)
class DisorderLaw:
    """Law of the disorder time: an atom at zero plus a hazard-driven tail."""

    atom_at_zero: float
    tail: Tail

    @property
    def intensity(self) -> Schedule:
        return self.tail.intensity

    @property
    def is_constant(self) -> bool:
        return self.intensity.is_constant

    @property
    def constant_rate(self) -> float:
        if not self.is_constant:
            raise ValueError("disorder law has a time-dependent hazard")
        return self.intensity.values[0]

    def cumulative_hazard(self, t: Any) -> Any:
        return self.intensity.integral(t)

    def tail_survival(self, t: Any) -> Any:
        """nu((t, inf))."""
        return np.exp(-np.asarray(self.cumulative_hazard(t)))

    def tail_density(self, t: Any) -> Any:
        """Density of nu at t: lambda(t) exp(-int_0^t lambda)."""
        return np.asarray(self.intensity(t)) * self.tail_survival(t)

    def cdf(self, t: Any) -> Any:
        return self.atom_at_zero + (1.0 - self.atom_at_zero) * (1.0 - self.tail_survival(t))

    def sample(self, u: float) -> float:
        """Inverse-CDF draw of the disorder time from one uniform variate."""
        if u < self.atom_at_zero:
            return 0.0
        level = -math.log1p(-(u - self.atom_at_zero) / (1.0 - self.atom_at_zero))
        return float(self.intensity.inverse_integral(level))

    def with_atom(self, atom_at_zero: float) -> "DisorderLaw":
        return replace(self, atom_at_zero=float(atom_at_zero))


@dataclass(frozen=True)
class DriftPrior:
    atoms: tuple[float, ...]
    weights: tuple[float, ...]

    def sample_index(self, u: float) -> int:
        idx = int(np.searchsorted(np.cumsum(self.weights), u, side="right"))
        return min(idx, len(self.weights) - 1)


@dataclass(frozen=True)
class ModelSpec:
    prior0: DriftPrior
    prior1: DriftPrior
    disorder: DisorderLaw
    sigma: Schedule
    cost: Schedule

    @property
    def n(self) -> int:
        return len(self.prior1.atoms)

    @property
    def atoms(self) -> np.ndarray:
        return np.asarray(self.prior1.atoms, dtype=float)

    @property
    def pi_tilde(self) -> float:
        return self.disorder.atom_at_zero

    @property
    def initial_posterior(self) -> np.ndarray:
        return self.pi_tilde * np.asarray(self.prior0.weights, dtype=float)

    @property
    def is_constant(self) -> bool:
        return self.sigma.is_constant and self.cost.is_constant and self.disorder.is_constant

    def with_sigma(self, sigma: Schedule) -> "ModelSpec":
        return replace(self, sigma=sigma)

    def with_cost(self, cost: Schedule) -> "ModelSpec":
        return replace(self, cost=cost)

    def with_disorder(self, disorder: DisorderLaw) -> "ModelSpec":
        return replace(self, disorder=disorder)

    def with_pi_tilde(self, pi_tilde: float) -> "ModelSpec":
        return replace(self, disorder=self.disorder.with_atom(pi_tilde))

    def scaled_magnitudes(self, k: float) -> "ModelSpec":
        atoms = tuple(k * b for b in self.prior1.atoms)
        return replace(
            self,
            prior0=DriftPrior(atoms, self.prior0.weights),
            prior1=DriftPrior(atoms, self.prior1.weights),
        )


# --- raw schema -------------------------------------------------------------


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class AtomEntry(_Strict):
    b: float
    p0: float
    p1: float


class ExponentialEntry(_Strict):
    type: Literal["exponential"]
    rate: float


class PiecewiseEntry(_Strict):
    type: Literal["piecewise"]
    breaks: list[float]
    rates: list[float]


class ScheduleEntry(_Strict):
    breaks: list[float]
    values: list[float]


class ModelFile(_Strict):
    atoms: list[AtomEntry] = Field(min_length=1)
    pi_tilde: float
    disorder: Union[ExponentialEntry, PiecewiseEntry] = Field(discriminator="type")
    sigma: Union[float, ScheduleEntry]
    cost: Union[float, ScheduleEntry]


def _check_schedule(
    entry: Union[float, ScheduleEntry], code: str, label: str, out: list[Violation]
) -> Schedule:
    if isinstance(entry, ScheduleEntry):
        breaks, values = tuple(entry.breaks), tuple(entry.values)
    else:
        breaks, values = (), (float(entry),)
    if len(values) != len(breaks) + 1:
        out.append(Violation(code, f"{label} needs len(values) == len(breaks) + 1"))
    if any(not v > 0 for v in values):
        out.append(Violation(code, f"{label} values must be strictly positive, got {values}"))
    if any(b1 <= b0 for b0, b1 in zip(breaks, breaks[1:])) or any(b <= 0 for b in breaks):
        out.append(Violation(code, f"{label} breakpoints must be positive and strictly increasing"))
    return Schedule(breaks, values)


def _check_weights(weights: list[float], label: str, out: list[Violation]) -> tuple[float, ...]:
    if any(w < 0 for w in weights):
        out.append(Violation("WeightSum", f"{label} weights must be non-negative"))
    total = math.fsum(weights)
    if abs(total - 1.0) > WEIGHT_TOLERANCE:
        out.append(Violation("WeightSum", f"{label} weights sum to {total!r}, not 1"))
        return tuple(weights)
    if total == 1.0:
        return tuple(float(w) for w in weights)
    return tuple(w / total for w in weights)


def model_to_dict(spec: ModelSpec) -> dict[str, Any]:
    """Serialize a ModelSpec back into the model-file document."""
    return {
        "atoms": [
            {"b": b, "p0": p0, "p1": p1}
            for b, p0, p1 in zip(spec.prior1.atoms, spec.prior0.weights, spec.prior1.weights)
        ],
        "pi_tilde": spec.pi_tilde,
        "disorder": spec.disorder.tail.to_raw(),
        "sigma": spec.sigma.to_raw(),
        "cost": spec.cost.to_raw(),
    }


def validate(raw: Union[ModelSpec, ModelFile, dict[str, Any]]) -> ModelSpec:
    """Validate a model description and return a normalized ModelSpec.

    Raises:
        ModelValidationError: listing every violated invariant.
    """
    if isinstance(raw, ModelSpec):
        if raw.prior0.atoms != raw.prior1.atoms:
            raise ModelValidationError(
                [Violation("AtomMismatch", f"prior atoms differ: {raw.prior0.atoms} vs {raw.prior1.atoms}")]
            )
        # already normalized; re-checking keeps validate idempotent
        validate(model_to_dict(raw))
        return raw
    if isinstance(raw, dict):
        try:
            raw = ModelFile.model_validate(raw)
        except ValidationError as e:
            raise ModelValidationError(
                [
                    Violation("Schema", f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}")
                    for err in e.errors()
                ]
            ) from e

    violations: list[Violation] = []
    atoms = [a.b for a in raw.atoms]
    if any(b == 0 for b in atoms):
        violations.append(Violation("ZeroMagnitude", f"drift magnitudes must be non-zero, got {atoms}"))
    if len(set(atoms)) != len(atoms):
        violations.append(Violation("DuplicateAtom", f"drift magnitudes must be distinct, got {atoms}"))
    p0 = _check_weights([a.p0 for a in raw.atoms], "p0", violations)
    p1 = _check_weights([a.p1 for a in raw.atoms], "p1", violations)

    if not 0.0 <= raw.pi_tilde <= 1.0:
        violations.append(Violation("BadPiTilde", f"pi_tilde must lie in [0, 1], got {raw.pi_tilde}"))

    tail: Tail
    if isinstance(raw.disorder, ExponentialEntry):
        if not raw.disorder.rate > 0:
            violations.append(Violation("BadHazard", f"rate must be positive, got {raw.disorder.rate}"))
        tail = ExponentialTail(float(raw.disorder.rate))
    else:
        hazard = _check_schedule(
            ScheduleEntry(breaks=raw.disorder.breaks, values=raw.disorder.rates),
            "BadHazard",
            "hazard",
            violations,
        )
        tail = PiecewiseHazardTail(hazard.breaks, hazard.values)

    sigma = _check_schedule(raw.sigma, "NonPositiveSigma", "sigma", violations)
    cost = _check_schedule(raw.cost, "NonPositiveCost", "cost", violations)

    if violations:
        raise ModelValidationError(violations)

    # collapse single-value schedules so constant checks stay cheap
    if sigma.is_constant:
        sigma = Schedule.constant(sigma.values[0])
    if cost.is_constant:
        cost = Schedule.constant(cost.values[0])

    atoms_t = tuple(float(b) for b in atoms)
    return ModelSpec(
        prior0=DriftPrior(atoms_t, p0),
        prior1=DriftPrior(atoms_t, p1),
        disorder=DisorderLaw(float(raw.pi_tilde), tail),
        sigma=sigma,
        cost=cost,
    )


def load_model(path: Union[str, Path]) -> ModelSpec:
    """Read and validate a JSON model file."""
    with open(path) as f:
        return validate(json.load(f))


def hazard(law: DisorderLaw, t: Any) -> Any:
    """Intensity lambda(t) = F'(t) / (1 - F(t)) of the disorder tail."""
    return law.intensity(t)


def disorder_cdf(law: DisorderLaw, t: Any) -> Any:
    """P(Theta <= t) = pi_tilde + (1 - pi_tilde) F_nu(t)."""
    out = law.cdf(t)
    return float(out) if np.ndim(out) == 0 else out


def mean_disorder_time(law: DisorderLaw) -> float:
    """Mean of the tail law nu (the atom at zero is ignored)."""
    if law.is_constant:
        return 1.0 / law.constant_rate
    last = law.intensity.breaks[-1]
    head, _ = integrate.quad(lambda t: float(law.tail_survival(t)), 0.0, last, limit=200)
    # beyond the last break the tail is exponential
    return head + float(law.tail_survival(last)) / law.intensity.values[-1]
