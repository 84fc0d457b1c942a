"""Tests for the problem data model and evaluation primitives."""

from __future__ import annotations

import numpy as np
import pytest
from core.geometry import BoxSet, DimensionMismatchError
from core.problem import (
    AugmentedLagrangianParams,
    BoundCheck,
    ProblemInstance,
    dual_function_value,
    eval_aug_lagrangian,
    eval_aug_lagrangian_gradient,
    eval_objective,
    eval_residual,
)


def _random_problem(seed: int, n: int = 5, m: int = 2) -> ProblemInstance:
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    return ProblemInstance(
        H=G.T @ G,
        q=rng.standard_normal(n),
        A=rng.standard_normal((m, n)),
        b=rng.standard_normal(m),
        box=BoxSet.uniform(n, -2.0, 2.0),
    )


class TestProblemInstance:
    def test_rejects_asymmetric_hessian(self) -> None:
        """H must be symmetric to define a quadratic."""
        with pytest.raises(ValueError, match="symmetric"):
            ProblemInstance(
                H=np.array([[1.0, 1.0], [0.0, 1.0]]),
                q=np.zeros(2),
                A=np.array([[1.0, 0.0]]),
                b=np.zeros(1),
                box=BoxSet.uniform(2, -1.0, 1.0),
            )

    def test_rejects_rank_deficient_coupling(self) -> None:
        with pytest.raises(ValueError, match="rank deficient"):
            ProblemInstance(
                H=np.eye(2),
                q=np.zeros(2),
                A=np.array([[1.0, 1.0], [2.0, 2.0]]),
                b=np.zeros(2),
                box=BoxSet.uniform(2, -1.0, 1.0),
            )

    def test_rejects_more_rows_than_columns(self) -> None:
        with pytest.raises(ValueError, match="m <= n"):
            ProblemInstance(
                H=np.eye(1),
                q=np.zeros(1),
                A=np.array([[1.0], [2.0]]),
                b=np.zeros(2),
                box=BoxSet.uniform(1, -1.0, 1.0),
            )

    def test_rejects_box_of_wrong_size(self) -> None:
        with pytest.raises(DimensionMismatchError):
            ProblemInstance(
                H=np.eye(2),
                q=np.zeros(2),
                A=np.array([[1.0, 0.0]]),
                b=np.zeros(1),
                box=BoxSet.uniform(3, -1.0, 1.0),
            )

    def test_rejects_non_finite_data(self) -> None:
        with pytest.raises(ValueError, match="non-finite"):
            ProblemInstance(
                H=np.eye(2),
                q=np.array([np.nan, 0.0]),
                A=np.array([[1.0, 0.0]]),
                b=np.zeros(1),
                box=BoxSet.uniform(2, -1.0, 1.0),
            )

    def test_inner_hessian_adds_penalty(
        self, analytic_problem: ProblemInstance
    ) -> None:
        expected = np.array([[3.0, 2.0], [2.0, 3.0]])
        assert np.allclose(analytic_problem.inner_hessian(2.0), expected)


def test_objective_by_hand() -> None:
    p = ProblemInstance(
        H=np.diag([2.0, 4.0]),
        q=np.array([1.0, -1.0]),
        A=np.array([[1.0, 0.0]]),
        b=np.zeros(1),
        box=BoxSet.uniform(2, -5.0, 5.0),
    )
    assert eval_objective(p, [1.0, 2.0]) == pytest.approx(8.0)


def test_augmented_lagrangian_by_hand() -> None:
    p = ProblemInstance(
        H=np.eye(1),
        q=np.zeros(1),
        A=np.eye(1),
        b=np.ones(1),
        box=BoxSet.uniform(1, -1.0, 1.0),
    )
    par = AugmentedLagrangianParams(1.0, np.ones(1))
    assert eval_aug_lagrangian(p, par, [0.0]) == pytest.approx(-0.5)
    assert eval_residual(p, [0.0]).tolist() == [-1.0]


def test_gradient_matches_central_differences() -> None:
    p = _random_problem(7)
    rng = np.random.default_rng(8)
    par = AugmentedLagrangianParams(1.5, rng.standard_normal(p.m))
    z = rng.uniform(-1.0, 1.0, size=p.n)
    grad = eval_aug_lagrangian_gradient(p, par, z)
    h = 1e-6
    for i in range(p.n):
        e = np.zeros(p.n)
        e[i] = h
        fd = (eval_aug_lagrangian(p, par, z + e) - eval_aug_lagrangian(p, par, z - e))
        assert abs(fd / (2 * h) - grad[i]) < 1e-6


def test_params_reject_non_positive_rho() -> None:
    with pytest.raises(ValueError, match="rho"):
        AugmentedLagrangianParams(0.0, np.zeros(1))


def test_params_reject_wrong_multiplier_length(
    analytic_problem: ProblemInstance,
) -> None:
    par = AugmentedLagrangianParams(1.0, np.zeros(3))
    with pytest.raises(DimensionMismatchError):
        eval_aug_lagrangian(analytic_problem, par, [0.0, 0.0])


def test_dual_value_at_optimal_multiplier_equals_primal_optimum(
    analytic_problem: ProblemInstance,
) -> None:
    tol = 1e-4
    par = AugmentedLagrangianParams(1.0, np.array([-0.5]))
    value = dual_function_value(analytic_problem, par, tol)
    assert abs(value - 0.25) <= tol**2 + 1e-10


def test_dual_value_with_inactive_box_matches_linear_solve(
    analytic_problem: ProblemInstance,
) -> None:
    lam = np.array([0.3])
    rho = 1.0
    par = AugmentedLagrangianParams(rho, lam)
    p = analytic_problem
    M = p.inner_hessian(rho)
    z = np.linalg.solve(M, -(p.q + p.A.T @ (lam - rho * p.b)))
    exact = eval_aug_lagrangian(p, par, z)
    value = dual_function_value(p, par, 1e-5)
    assert exact <= value + 1e-12
    assert value - exact <= 1e-10 + 1e-10


def test_bound_check_allows_small_slack() -> None:
    assert BoundCheck("infeasibility", 1.0, 1.0 + 5e-9).holds
    assert not BoundCheck("infeasibility", 1.0, 1.0 + 1e-6).holds
    assert BoundCheck("dual_gap", 1.0, None).holds
