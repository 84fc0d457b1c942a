"""Sparse (non-condensed) MPC problems over a finite horizon.

The decision vector is ``z = [x_1 .. x_N, u_0 .. u_{N-1}]``, all states first. Each
block row of ``A z = b(x0)`` reads ``x_{i+1} - A_x x_i - B_u u_i = 0``, so only the
first block of ``b`` is nonzero: ``A_x x0``. The objective keeps the stage-cost
scaling of ``sum x^T Q x + u^T R u + x_N^T P x_N`` by using ``H = 2 blkdiag(...)``
with ``f(z) = 1/2 z^T H z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt
from scipy.linalg import block_diag, expm

from .certification import MpcDims
from .dual_schemes import run_scheme
from .geometry import BoxSet, DimensionMismatchError, FloatArray, as_vector, frozen
from .observability import Observability, get_observability
from .problem import ProblemInstance, RunMode, Scheme, as_matrix

PSD_TOL = 1e-10
STRONG_CONVEXITY_TOL = 1e-10


@dataclass(frozen=True)
class LtiModel:
    """Discrete-time dynamics ``x+ = A_x x + B_u u``."""

    A_x: FloatArray
    B_u: FloatArray

    def __post_init__(self) -> None:
        A_x = as_matrix(self.A_x, name="A_x")
        n_x = A_x.shape[0]
        A_x = as_matrix(A_x, (n_x, n_x), "A_x")
        B_u = as_matrix(self.B_u, name="B_u")
        if B_u.shape[0] != n_x:
            msg = f"B_u has {B_u.shape[0]} rows, expected {n_x}"
            raise DimensionMismatchError(msg)
        if not (np.all(np.isfinite(A_x)) and np.all(np.isfinite(B_u))):
            msg = "dynamics contain non-finite entries"
            raise ValueError(msg)
        object.__setattr__(self, "A_x", frozen(A_x))
        object.__setattr__(self, "B_u", frozen(B_u))

    @property
    def n_x(self) -> int:
        return int(self.A_x.shape[0])

    @property
    def n_u(self) -> int:
        return int(self.B_u.shape[1])

    def step(self, x: npt.ArrayLike, u: npt.ArrayLike) -> FloatArray:
        return self.A_x @ as_vector(x, self.n_x, "x") + self.B_u @ as_vector(
            u, self.n_u, "u"
        )


def _check_weight(M: FloatArray, name: str, *, definite: bool) -> None:
    asymmetry = float(np.max(np.abs(M - M.T)))
    if asymmetry > 1e-12:
        msg = f"{name} is not symmetric (max asymmetry {asymmetry:.3e})"
        raise ValueError(msg)
    smallest = float(np.linalg.eigvalsh(M)[0])
    if definite and smallest <= 0.0:
        msg = f"{name} must be positive definite (lambda_min = {smallest:.3e})"
        raise ValueError(msg)
    if smallest < -PSD_TOL:
        msg = f"{name} must be positive semidefinite (lambda_min = {smallest:.3e})"
        raise ValueError(msg)


@dataclass(frozen=True)
class MpcSpec:
    """Dynamics, weights and box sets of a horizon-N MPC problem.

    ``X_f`` defaults to ``X``.
    """

    model: LtiModel
    N: int
    Q: FloatArray
    R: FloatArray
    P: FloatArray
    X: BoxSet
    U: BoxSet
    X_f: BoxSet | None = None

    def __post_init__(self) -> None:
        n_x, n_u = self.model.n_x, self.model.n_u
        if self.N < 1:
            msg = f"horizon N must be at least 1, got {self.N}"
            raise ValueError(msg)
        Q = as_matrix(self.Q, (n_x, n_x), "Q")
        P = as_matrix(self.P, (n_x, n_x), "P")
        R = as_matrix(self.R, (n_u, n_u), "R")
        _check_weight(Q, "Q", definite=False)
        _check_weight(P, "P", definite=False)
        _check_weight(R, "R", definite=True)
        X_f = self.X if self.X_f is None else self.X_f
        boxes = (("X", self.X, n_x), ("X_f", X_f, n_x), ("U", self.U, n_u))
        for name, box, size in boxes:
            if box.n != size:
                msg = f"{name} has {box.n} coordinates, expected {size}"
                raise DimensionMismatchError(msg)
        object.__setattr__(self, "Q", frozen(Q))
        object.__setattr__(self, "P", frozen(P))
        object.__setattr__(self, "R", frozen(R))
        object.__setattr__(self, "X_f", X_f)

    @property
    def n_x(self) -> int:
        return self.model.n_x

    @property
    def n_u(self) -> int:
        return self.model.n_u

    @property
    def terminal_set(self) -> BoxSet:
        assert self.X_f is not None
        return self.X_f

    @property
    def dims(self) -> MpcDims:
        return MpcDims(self.N, self.n_x, self.n_u)


# =============================================================================
# Construction
# =============================================================================


def build_problem(spec: MpcSpec, x0: npt.ArrayLike) -> ProblemInstance:
    """Stacked-dynamics QP for initial state ``x0``."""
    x = as_vector(x0, spec.n_x, "x0")
    if not np.all(np.isfinite(x)):
        msg = "x0 contains non-finite entries"
        raise ValueError(msg)
    N, n_x = spec.N, spec.n_x
    A_x, B_u = spec.model.A_x, spec.model.B_u

    states = np.eye(N * n_x) - np.kron(np.eye(N, k=-1), A_x)
    inputs = -np.kron(np.eye(N), B_u)
    A = np.hstack([states, inputs])
    b = np.zeros(N * n_x)
    b[:n_x] = A_x @ x

    H = 2.0 * block_diag(*([spec.Q] * (N - 1)), spec.P, *([spec.R] * N))
    box = BoxSet.product(*([spec.X] * (N - 1)), spec.terminal_set, *([spec.U] * N))
    return ProblemInstance(H=H, q=np.zeros(A.shape[1]), A=A, b=b, box=box)


def mpc_diameter(spec: MpcSpec) -> float:
    """``sqrt((N-1) D_x^2 + D_xf^2 + N D_u^2)``."""
    d_x = float(np.linalg.norm(spec.X.ub - spec.X.lb))
    d_xf = float(np.linalg.norm(spec.terminal_set.ub - spec.terminal_set.lb))
    d_u = float(np.linalg.norm(spec.U.ub - spec.U.lb))
    return math.sqrt((spec.N - 1) * d_x**2 + d_xf**2 + spec.N * d_u**2)


def verify_strong_convexity(spec: MpcSpec, rho: float) -> tuple[float, bool]:
    """``lambda_min(H + rho A^T A)`` and whether it is safely positive."""
    if not rho > 0.0:
        msg = f"rho must be positive, got {rho}"
        raise ValueError(msg)
    p = build_problem(spec, np.zeros(spec.n_x))
    sigma_p = float(np.linalg.eigvalsh(p.inner_hessian(rho))[0])
    return sigma_p, sigma_p > STRONG_CONVEXITY_TOL


# =============================================================================
# Trajectories
# =============================================================================


def split_trajectory(
    spec: MpcSpec, z: npt.ArrayLike
) -> tuple[FloatArray, FloatArray]:
    """Return ``(states, inputs)`` with shapes ``(N, n_x)`` and ``(N, n_u)``."""
    N, n_x, n_u = spec.N, spec.n_x, spec.n_u
    vec = as_vector(z, N * (n_x + n_u), "z")
    return vec[: N * n_x].reshape(N, n_x), vec[N * n_x :].reshape(N, n_u)


def stack_trajectory(
    spec: MpcSpec, states: npt.ArrayLike, inputs: npt.ArrayLike
) -> FloatArray:
    N, n_x, n_u = spec.N, spec.n_x, spec.n_u
    xs = as_matrix(states, (N, n_x), "states")
    us = as_matrix(inputs, (N, n_u), "inputs")
    return np.concatenate([xs.ravel(), us.ravel()])


def rollout(spec: MpcSpec, x0: npt.ArrayLike, inputs: npt.ArrayLike) -> FloatArray:
    """States ``x_1 .. x_N`` reached from ``x0`` under ``inputs``."""
    us = as_matrix(inputs, (spec.N, spec.n_u), "inputs")
    x = as_vector(x0, spec.n_x, "x0")
    states = np.empty((spec.N, spec.n_x))
    for i in range(spec.N):
        x = spec.model.step(x, us[i])
        states[i] = x
    return states


# =============================================================================
# Instance generators
# =============================================================================


def double_integrator_spec(N: int = 5) -> MpcSpec:
    """Unit double integrator with ``|x| <= 5`` and ``|u| <= 1``."""
    model = LtiModel(np.array([[1.0, 1.0], [0.0, 1.0]]), np.array([[0.0], [1.0]]))
    return MpcSpec(
        model=model,
        N=N,
        Q=np.eye(2),
        R=np.eye(1),
        P=np.eye(2),
        X=BoxSet.uniform(2, -5.0, 5.0),
        U=BoxSet.uniform(1, -1.0, 1.0),
    )


def random_mass_spring_spec(
    masses: int, N: int, seed: int, sample_time: float = 0.5
) -> MpcSpec:
    """Chain of ``masses`` masses coupled by springs, ``M - 1`` actuators between them.

    States are positions then velocities (``2M``); masses and spring constants are
    drawn per seed. The continuous model is discretized by zero-order hold.
    """
    if masses < 2:
        msg = f"need at least two masses, got {masses}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    M = masses
    mass = rng.uniform(0.5, 1.5, size=M)
    spring = rng.uniform(0.5, 1.5, size=M + 1)

    K = np.zeros((M, M))
    for i in range(M):
        K[i, i] = -(spring[i] + spring[i + 1])
        if i + 1 < M:
            K[i, i + 1] = K[i + 1, i] = spring[i + 1]
    force = np.zeros((M, M - 1))
    for j in range(M - 1):
        force[j, j] = 1.0
        force[j + 1, j] = -1.0
    inv_mass = np.diag(1.0 / mass)
    A_c = np.block([[np.zeros((M, M)), np.eye(M)], [inv_mass @ K, np.zeros((M, M))]])
    B_c = np.vstack([np.zeros((M, M - 1)), inv_mass @ force])

    n_x, n_u = 2 * M, M - 1
    augmented = np.zeros((n_x + n_u, n_x + n_u))
    augmented[:n_x, :n_x] = A_c
    augmented[:n_x, n_x:] = B_c
    discrete = expm(augmented * sample_time)

    G = rng.standard_normal((n_x, M))
    Q = G @ G.T
    return MpcSpec(
        model=LtiModel(discrete[:n_x, :n_x], discrete[:n_x, n_x:]),
        N=N,
        Q=0.5 * (Q + Q.T),
        R=0.1 * np.eye(n_u),
        P=0.5 * (Q + Q.T),
        X=BoxSet.uniform(n_x, -4.0, 4.0),
        U=BoxSet.uniform(n_u, -0.5, 0.5),
    )


def random_lti_spec(
    n_x: int, n_u: int, N: int, seed: int, q_rank: int | None = None
) -> MpcSpec:
    """Random stable model with a rank-deficient state weight.

    ``A_x`` is rescaled to spectral radius 0.95; ``Q = P = G G^T`` with ``G`` of
    ``q_rank`` columns (default ``ceil(n_x / 2)``) and ``R = 0.1 I``.
    """
    rng = np.random.default_rng(seed)
    q_rank = math.ceil(n_x / 2) if q_rank is None else q_rank
    A_x = rng.standard_normal((n_x, n_x))
    radius = float(np.max(np.abs(np.linalg.eigvals(A_x))))
    if radius > 0.0:
        A_x *= 0.95 / radius
    B_u = rng.standard_normal((n_x, n_u))
    G = rng.standard_normal((n_x, q_rank))
    Q = G @ G.T
    Q = 0.5 * (Q + Q.T)
    return MpcSpec(
        model=LtiModel(A_x, B_u),
        N=N,
        Q=Q,
        R=0.1 * np.eye(n_u),
        P=Q,
        X=BoxSet.uniform(n_x, -5.0, 5.0),
        U=BoxSet.uniform(n_u, -1.0, 1.0),
    )


# =============================================================================
# Closed loop
# =============================================================================


@dataclass(frozen=True)
class ClosedLoopResult:
    states: FloatArray
    inputs: FloatArray
    outer_iters: tuple[int, ...] = field(default=())
    inner_iters: tuple[int, ...] = field(default=())


def simulate_closed_loop(
    spec: MpcSpec,
    x0: npt.ArrayLike,
    steps: int,
    *,
    R_d: float,
    eps_out: float = 1e-3,
    rho: float = 1.0,
    scheme: Scheme = Scheme.IDFGM,
    observability: Observability | None = None,
) -> ClosedLoopResult:
    """Receding-horizon loop applying the first input of each certified solve."""
    if steps < 0:
        msg = f"steps must be non-negative, got {steps}"
        raise ValueError(msg)
    obs = observability or get_observability()
    x = as_vector(x0, spec.n_x, "x0")
    states = [x]
    inputs: list[FloatArray] = []
    outer: list[int] = []
    inner: list[int] = []
    for step in range(steps):
        p = build_problem(spec, x)
        report = run_scheme(
            scheme, p, rho, eps_out, R_d, RunMode.CERTIFIED, observability=obs
        )
        _, planned = split_trajectory(spec, report.z_hat)
        u = np.clip(planned[0], spec.U.lb, spec.U.ub)
        x = spec.model.step(x, u)
        states.append(x)
        inputs.append(u)
        outer.append(report.outer_iters)
        inner.append(report.inner_iters_total)
        obs.logger.debug(
            "closed-loop step", step=step, outer_iters=report.outer_iters
        )
    return ClosedLoopResult(
        states=frozen(np.array(states)),
        inputs=frozen(np.array(inputs).reshape(steps, spec.n_u)),
        outer_iters=tuple(outer),
        inner_iters=tuple(inner),
    )
