"""Shared fixtures: the two-atom reference model and a one-atom model."""

import sys
from pathlib import Path
from typing import Any

import pytest

# Add src to Python path
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from disorder.model import ModelSpec, validate  # noqa: E402


def reference_raw() -> dict[str, Any]:
    return {
        "atoms": [{"b": 0.5, "p0": 0.5, "p1": 0.5}, {"b": 2.0, "p0": 0.5, "p1": 0.5}],
        "pi_tilde": 0.1,
        "disorder": {"type": "exponential", "rate": 0.2},
        "sigma": 1.0,
        "cost": 1.0,
    }


def single_raw(b: float = 1.0, rate: float = 0.1, pi_tilde: float = 0.0) -> dict[str, Any]:
    return {
        "atoms": [{"b": b, "p0": 1.0, "p1": 1.0}],
        "pi_tilde": pi_tilde,
        "disorder": {"type": "exponential", "rate": rate},
        "sigma": 1.0,
        "cost": 1.0,
    }


@pytest.fixture
def reference_model() -> ModelSpec:
    return validate(reference_raw())


@pytest.fixture
def single_model() -> ModelSpec:
    return validate(single_raw())
