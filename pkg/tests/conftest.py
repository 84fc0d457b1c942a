"""Pytest configuration for local package imports and shared instances."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parents[1]

if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from core.geometry import BoxSet  # noqa: E402
from core.mpc_builder import MpcSpec, double_integrator_spec  # noqa: E402
from core.observability import Observability  # noqa: E402
from core.problem import ProblemInstance  # noqa: E402

FIXTURES = PROJECT_ROOT / "tests" / "fixtures"


@pytest.fixture
def obs() -> Observability:
    """Fresh metrics and log buffer, echoing only errors."""
    return Observability(echo_level="ERROR")


@pytest.fixture
def analytic_problem() -> ProblemInstance:
    """``min 1/2 ||z||^2  s.t.  z1 + z2 = 1`` over ``[-10, 10]^2``.

    Optimum ``z* = (1/2, 1/2)``, ``lambda* = -1/2``, ``f* = 1/4``.
    """
    return ProblemInstance(
        H=np.eye(2),
        q=np.zeros(2),
        A=np.array([[1.0, 1.0]]),
        b=np.array([1.0]),
        box=BoxSet.uniform(2, -10.0, 10.0),
    )


@pytest.fixture
def tight_box_problem() -> ProblemInstance:
    """Three variables with the upper bound of ``z1`` active at the optimum.

    Optimum ``z* = (1, -0.6, -0.4)``, ``lambda* = 0.2``, ``f* = -2.7``.
    """
    return ProblemInstance(
        H=np.diag([1.0, 2.0, 0.5]),
        q=np.array([-3.0, 1.0, 0.0]),
        A=np.array([[1.0, 1.0, 1.0]]),
        b=np.array([0.0]),
        box=BoxSet.uniform(3, -1.0, 1.0),
    )


@pytest.fixture
def double_integrator() -> MpcSpec:
    return double_integrator_spec(N=2)
