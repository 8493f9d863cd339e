"""Exception hierarchy for the disorder detection toolkit."""

from dataclasses import dataclass


class DisorderError(Exception):
    """Base class for every error raised by the toolkit."""


@dataclass(frozen=True)
class Violation:
    """One violated model invariant."""

    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ModelValidationError(DisorderError):
    """Raised when a model description breaks one or more invariants.

    All violations are collected before raising so callers can report them
    in one go.
    """

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        listing = "; ".join(str(v) for v in self.violations)
        super().__init__(f"invalid model ({len(self.violations)} violations): {listing}")

    @property
    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


class GridError(DisorderError):
    """Time grid or simplex grid is inconsistent."""


class RateOrderError(DisorderError):
    """Coupled intensity is larger than the model intensity."""


class FilterInputError(DisorderError):
    """Observation input or filter parameters are unusable."""


class ParameterError(DisorderError):
    """Classical problem parameters are out of range."""


class NoBracketError(DisorderError):
    """The smooth-fit equation could not be bracketed."""


class FlatObjectiveError(DisorderError):
    """Threshold scan is indistinguishable from Monte Carlo noise."""

    def __init__(self, message: str, scan: list | None = None):
        super().__init__(message)
        self.scan = scan or []


class NoConvergenceError(DisorderError):
    """Value iteration did not reach its tolerance."""

    def __init__(self, message: str, iterations: int, sup_change: float):
        super().__init__(message)
        self.iterations = iterations
        self.sup_change = sup_change


class UnsupportedModelError(DisorderError):
    """Model lies outside the regime an algorithm supports."""


class EmptyBoundaryError(DisorderError):
    """No continuation node borders the stopping region."""


class UnknownExperimentError(DisorderError):
    """Experiment name is not one of the registered suites."""


class ConfigError(DisorderError):
    """Experiment or toolkit configuration is malformed."""
