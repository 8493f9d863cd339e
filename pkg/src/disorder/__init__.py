"""Bayesian quickest detection of a disorder with an unknown post-change drift.

Modules: ``model`` (problem instances), ``sim`` (scenario generation),
``filtering`` (posterior filters), ``shiryaev`` (classical solver), ``risk``
(Monte Carlo Bayes risk), ``dp`` (value iteration for n <= 2) and
``experiments`` (config-driven checks).
"""

from .errors import DisorderError
from .model import ModelSpec, load_model, validate

__all__ = ["DisorderError", "ModelSpec", "load_model", "validate"]
