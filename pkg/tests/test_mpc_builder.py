"""Tests for sparse MPC construction, generators and the closed loop."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest
from core.geometry import BoxSet, DimensionMismatchError
from core.mpc_builder import (
    LtiModel,
    MpcSpec,
    build_problem,
    double_integrator_spec,
    mpc_diameter,
    random_lti_spec,
    random_mass_spring_spec,
    rollout,
    simulate_closed_loop,
    split_trajectory,
    stack_trajectory,
    verify_strong_convexity,
)
from core.problem import eval_objective, eval_residual


def test_double_integrator_dimensions_and_right_hand_side(
    double_integrator: MpcSpec,
) -> None:
    p = build_problem(double_integrator, [1.0, 2.0])
    assert (p.n, p.m) == (6, 4)
    assert p.b.tolist() == [3.0, 2.0, 0.0, 0.0]
    assert np.allclose(p.q, 0.0)


def test_hessian_is_doubled_block_diagonal(double_integrator: MpcSpec) -> None:
    p = build_problem(double_integrator, [0.0, 0.0])
    expected = 2.0 * np.diag([1.0, 1.0, 1.0, 1.0, 1.0, 1.0])
    assert np.allclose(p.H, expected)


def test_stage_cost_scaling(double_integrator: MpcSpec) -> None:
    x0 = np.array([1.0, -1.0])
    inputs = np.array([[0.5], [-0.25]])
    p = build_problem(double_integrator, x0)
    states = rollout(double_integrator, x0, inputs)
    z = stack_trajectory(double_integrator, states, inputs)
    stage = sum(float(x @ x) for x in states) + float(np.sum(inputs**2))
    assert eval_objective(p, z) == pytest.approx(stage)


def test_simulated_trajectories_satisfy_dynamics() -> None:
    rng = np.random.default_rng(5)
    spec = random_lti_spec(3, 2, 6, seed=1)
    for _ in range(5):
        x0 = rng.uniform(-1.0, 1.0, size=3)
        inputs = rng.uniform(-1.0, 1.0, size=(6, 2))
        p = build_problem(spec, x0)
        z = stack_trajectory(spec, rollout(spec, x0, inputs), inputs)
        assert np.linalg.norm(eval_residual(p, z)) <= 1e-12


def test_split_inverts_stack(double_integrator: MpcSpec) -> None:
    z = np.arange(6, dtype=float)
    states, inputs = split_trajectory(double_integrator, z)
    assert states.shape == (2, 2)
    assert inputs.shape == (2, 1)
    assert np.array_equal(stack_trajectory(double_integrator, states, inputs), z)


def test_diameter_identity() -> None:
    spec = replace(
        double_integrator_spec(N=4), X_f=BoxSet.uniform(2, -1.0, 1.0)
    )
    p = build_problem(spec, [0.0, 0.0])
    assert mpc_diameter(spec) == pytest.approx(p.diameter, abs=1e-12)


def test_terminal_box_applies_to_last_state() -> None:
    spec = replace(double_integrator_spec(N=3), X_f=BoxSet.uniform(2, -0.5, 0.5))
    p = build_problem(spec, [0.0, 0.0])
    assert p.box.ub[:6].tolist() == [5.0, 5.0, 5.0, 5.0, 0.5, 0.5]
    assert p.box.ub[6:].tolist() == [1.0, 1.0, 1.0]


class TestMpcSpecValidation:
    def test_input_weight_must_be_definite(self) -> None:
        with pytest.raises(ValueError, match="R must be positive definite"):
            replace(double_integrator_spec(), R=np.zeros((1, 1)))

    def test_state_weight_must_be_symmetric(self) -> None:
        with pytest.raises(ValueError, match="Q is not symmetric"):
            replace(double_integrator_spec(), Q=np.array([[1.0, 1.0], [0.0, 1.0]]))

    def test_box_sizes_checked(self) -> None:
        with pytest.raises(DimensionMismatchError, match="U"):
            replace(double_integrator_spec(), U=BoxSet.uniform(2, -1.0, 1.0))

    def test_horizon_positive(self) -> None:
        with pytest.raises(ValueError, match="horizon"):
            replace(double_integrator_spec(), N=0)

    def test_model_input_rows_checked(self) -> None:
        with pytest.raises(DimensionMismatchError):
            LtiModel(np.eye(2), np.ones((3, 1)))


def test_strong_convexity_with_zero_state_weight() -> None:
    spec = random_lti_spec(3, 2, 5, seed=4, q_rank=0)
    assert np.allclose(spec.Q, 0.0)
    sigma_p, holds = verify_strong_convexity(spec, 1.0)
    assert holds
    assert sigma_p > 0.0


def test_mass_spring_generator_is_seeded() -> None:
    first = random_mass_spring_spec(3, 4, seed=9)
    second = random_mass_spring_spec(3, 4, seed=9)
    other = random_mass_spring_spec(3, 4, seed=10)
    assert (first.n_x, first.n_u) == (6, 2)
    assert np.array_equal(first.model.A_x, second.model.A_x)
    assert not np.array_equal(first.model.A_x, other.model.A_x)
    assert verify_strong_convexity(first, 1.0)[1]


def test_mass_spring_needs_two_masses() -> None:
    with pytest.raises(ValueError, match="two masses"):
        random_mass_spring_spec(1, 4, seed=0)


def test_closed_loop_applies_admissible_inputs(double_integrator: MpcSpec) -> None:
    result = simulate_closed_loop(
        double_integrator, [1.0, 0.0], 3, R_d=5.0, eps_out=1e-2
    )
    assert result.states.shape == (4, 2)
    assert result.inputs.shape == (3, 1)
    assert np.all(np.abs(result.inputs) <= 1.0)
    for k in range(3):
        expected = double_integrator.model.step(result.states[k], result.inputs[k])
        assert np.allclose(result.states[k + 1], expected)
    assert len(result.outer_iters) == 3


def test_closed_loop_rejects_negative_steps(double_integrator: MpcSpec) -> None:
    with pytest.raises(ValueError, match="steps"):
        simulate_closed_loop(double_integrator, [0.0, 0.0], -1, R_d=1.0)
