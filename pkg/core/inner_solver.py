"""Fast-gradient solver for the inner problem ``min_{z in box} L_rho(z, lam)``.

The scheme is the constant-step projected fast gradient method. With a positive
strong-convexity modulus it uses the fixed momentum
``(sqrt(L) - sqrt(sigma)) / (sqrt(L) + sqrt(sigma))``; otherwise it falls back to
the ``t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`` momentum sequence. The first step
from the warm start is a plain projected gradient step.

Termination is decided by one of the stopping criteria below, evaluated at the
current iterate after every step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt

from .geometry import (
    DEFAULT_ACTIVE_TOL,
    FloatArray,
    as_vector,
    frozen,
    normal_cone_residual,
    project,
    support_function,
)
from .observability import Observability, get_observability
from .problem import (
    AugmentedLagrangianParams,
    ProblemInstance,
    eval_aug_lagrangian,
)

INNER_GUARD_FACTOR = 10


class CriterionKind(Enum):
    """Inner stopping criteria."""

    FUNCTION_GAP = "function_gap"
    SOLUTION_DISTANCE = "solution_distance"
    VARIATIONAL_INEQUALITY = "variational_inequality"
    NORMAL_CONE_DISTANCE = "normal_cone_distance"
    FIXED_BUDGET = "fixed_budget"


@dataclass(frozen=True)
class StoppingCriterion:
    """Criterion kind and its accuracy ``eps_in``.

    ``FIXED_BUDGET`` runs exactly ``budget`` iterations and certifies nothing;
    the normal-cone distance at the last iterate is still reported.
    """

    kind: CriterionKind
    eps_in: float
    budget: int | None = None
    active_tol: float = DEFAULT_ACTIVE_TOL

    def __post_init__(self) -> None:
        if not self.eps_in > 0.0:
            msg = f"eps_in must be positive, got {self.eps_in}"
            raise ValueError(msg)
        if self.kind is CriterionKind.FIXED_BUDGET:
            if self.budget is None or self.budget < 0:
                msg = "fixed-budget criterion needs a non-negative budget"
                raise ValueError(msg)
        elif self.budget is not None:
            msg = f"budget is only valid for fixed-budget criteria ({self.kind.value})"
            raise ValueError(msg)

    @classmethod
    def fixed_budget(cls, iters: int) -> StoppingCriterion:
        return cls(CriterionKind.FIXED_BUDGET, math.inf, budget=iters)

    @property
    def certifying(self) -> bool:
        return self.kind is not CriterionKind.FIXED_BUDGET


@dataclass(frozen=True)
class InnerConstants:
    """Extremal curvature of ``L_rho(., lam)`` and the box diameter."""

    L_p: float
    sigma_p: float
    R_p: float
    rho: float

    def __post_init__(self) -> None:
        if not self.L_p > 0.0:
            msg = f"L_p must be positive, got {self.L_p}"
            raise ValueError(msg)
        if not 0.0 <= self.sigma_p <= self.L_p:
            msg = f"need 0 <= sigma_p <= L_p, got {self.sigma_p} and {self.L_p}"
            raise ValueError(msg)
        if self.R_p < 0.0:
            msg = f"R_p must be non-negative, got {self.R_p}"
            raise ValueError(msg)
        if not self.rho > 0.0:
            msg = f"rho must be positive, got {self.rho}"
            raise ValueError(msg)

    @property
    def C_Z(self) -> float:
        """``1 + sqrt(2 L_p) R_p``."""
        return 1.0 + math.sqrt(2.0 * self.L_p) * self.R_p

    @property
    def L_d(self) -> float:
        return 1.0 / self.rho

    @property
    def strongly_convex(self) -> bool:
        return self.sigma_p > 0.0


@dataclass(frozen=True)
class InnerReference:
    """Exact inner optimum, only available from the reference oracle."""

    z_star: FloatArray
    value: float


@dataclass(frozen=True)
class InnerSolution:
    """Approximate inner minimizer and the criterion value that vouches for it."""

    z_bar: FloatArray
    criterion: StoppingCriterion
    certified_value: float
    iters: int
    approx_dual_value: float
    approx_dual_gradient: FloatArray
    normal_cone_distance: float


class InnerSolverError(RuntimeError):
    """Raised when the iteration cap is hit before the criterion holds."""

    def __init__(
        self,
        message: str,
        *,
        best_z: FloatArray,
        best_value: float,
        iters: int,
        criterion: StoppingCriterion,
    ) -> None:
        super().__init__(message)
        self.best_z = best_z
        self.best_value = best_value
        self.iters = iters
        self.criterion = criterion


# =============================================================================
# Criterion arithmetic
# =============================================================================


def certified_gap_bound(distance: float, consts: InnerConstants) -> float:
    """Upper bound on ``L_rho(z) - min L_rho`` from the normal-cone distance at z.

    Convexity gives ``distance * R_p``; strong convexity gives
    ``distance**2 / (2 sigma_p)``.
    """
    bound = distance * consts.R_p
    if consts.strongly_convex:
        bound = min(bound, distance * distance / (2.0 * consts.sigma_p))
    return bound


def criterion_threshold(
    kind: CriterionKind, eps_in: float, consts: InnerConstants
) -> float:
    """Accuracy to request so that the variational gap stays below ``C_Z eps_in``."""
    if kind is CriterionKind.NORMAL_CONE_DISTANCE:
        if consts.R_p == 0.0:
            return eps_in
        return eps_in * min(1.0, consts.C_Z / consts.R_p)
    if kind is CriterionKind.FUNCTION_GAP:
        return min(eps_in, 1.0)
    return eps_in


def _gap_target(crit: StoppingCriterion, consts: InnerConstants) -> float:
    # Function gap at which the criterion is guaranteed after one more
    # projected gradient step (distance <= 2 sqrt(2 L gap)).
    eps = crit.eps_in
    if crit.kind is CriterionKind.FUNCTION_GAP:
        gap = eps * eps
        if consts.strongly_convex:
            return gap * consts.sigma_p / (4.0 * consts.L_p)
        if consts.R_p > 0.0:
            # Without a reference the gap is certified as distance * R_p.
            return min(gap, gap * gap / (8.0 * consts.L_p * consts.R_p**2))
        return gap
    if crit.kind is CriterionKind.SOLUTION_DISTANCE and consts.strongly_convex:
        return 0.5 * consts.sigma_p * eps * eps
    if crit.kind is CriterionKind.VARIATIONAL_INEQUALITY and consts.R_p > 0.0:
        eps = consts.C_Z * eps / consts.R_p
    return eps * eps / (8.0 * consts.L_p)


def inner_iteration_bound(consts: InnerConstants, crit: StoppingCriterion) -> int:
    """Worst-case fast-gradient iterations for ``crit`` from any start in the box."""
    if crit.kind is CriterionKind.FIXED_BUDGET:
        return int(crit.budget or 0)
    target = _gap_target(crit, consts)
    scale = consts.L_p * consts.R_p**2
    if consts.strongly_convex:
        ratio = math.sqrt(consts.L_p / consts.sigma_p)
        return math.ceil(ratio * math.log(max(scale / target, 1.0))) + 2
    return math.ceil(math.sqrt(2.0 * scale / target)) + 2


# =============================================================================
# Criterion evaluation
# =============================================================================


def _measure(
    p: ProblemInstance,
    crit: StoppingCriterion,
    z: FloatArray,
    grad: FloatArray,
    value: float,
    consts: InnerConstants,
    reference: InnerReference | None,
) -> tuple[bool, float, float]:
    """Return ``(holds, measured, normal_cone_distance)`` at ``z``."""
    residual = normal_cone_residual(p.box, z, grad, crit.active_tol)
    distance = float(np.linalg.norm(residual))
    kind = crit.kind
    eps = crit.eps_in
    if kind in (CriterionKind.NORMAL_CONE_DISTANCE, CriterionKind.FIXED_BUDGET):
        return distance <= eps, distance, distance
    if kind is CriterionKind.FUNCTION_GAP:
        if reference is not None:
            gap = value - reference.value
        else:
            gap = certified_gap_bound(distance, consts)
        return gap <= eps * eps, gap, distance
    if kind is CriterionKind.VARIATIONAL_INEQUALITY:
        vi_gap = support_function(p.box, -grad) + float(grad @ z)
        return vi_gap <= consts.C_Z * eps, vi_gap, distance
    if reference is None:
        msg = "solution-distance criterion needs an oracle reference"
        raise ValueError(msg)
    dist = float(np.linalg.norm(z - reference.z_star))
    return dist <= eps, dist, distance


def check_criterion(
    p: ProblemInstance,
    par: AugmentedLagrangianParams,
    crit: StoppingCriterion,
    z_bar: npt.ArrayLike,
    *,
    consts: InnerConstants | None = None,
    reference: InnerReference | None = None,
) -> tuple[bool, float]:
    """Evaluate ``crit`` at ``z_bar``; returns ``(holds, measured)``.

    The function-gap and solution-distance criteria are measured against the
    exact inner optimum and therefore need ``reference``.
    """
    from .certification import inner_constants

    z = as_vector(z_bar, p.n, "z_bar")
    needs_reference = crit.kind in (
        CriterionKind.FUNCTION_GAP,
        CriterionKind.SOLUTION_DISTANCE,
    )
    if needs_reference and reference is None:
        msg = f"{crit.kind.value} criterion needs an oracle reference"
        raise ValueError(msg)
    consts = consts or inner_constants(p, par.rho)
    grad = _gradient(p, par, z)
    holds, measured, _ = _measure(
        p, crit, z, grad, eval_aug_lagrangian(p, par, z), consts, reference
    )
    return holds, measured


def _gradient(
    p: ProblemInstance, par: AugmentedLagrangianParams, z: FloatArray
) -> FloatArray:
    return p.H @ z + p.q + p.A.T @ (par.multiplier + par.rho * (p.A @ z - p.b))


# =============================================================================
# Solver
# =============================================================================


def solve_inner(
    p: ProblemInstance,
    par: AugmentedLagrangianParams,
    crit: StoppingCriterion,
    z_warm: npt.ArrayLike,
    max_iters: int | None = None,
    *,
    consts: InnerConstants | None = None,
    reference: InnerReference | None = None,
    observability: Observability | None = None,
) -> InnerSolution:
    """Minimize ``L_rho(., lam)`` over the box until ``crit`` holds.

    ``max_iters`` defaults to ten times :func:`inner_iteration_bound`. When the
    cap is reached the best iterate seen (smallest criterion value) travels on
    the raised :class:`InnerSolverError`.
    """
    from .certification import inner_constants

    par.check(p)
    obs = observability or get_observability()
    consts = consts or inner_constants(p, par.rho)
    if not math.isclose(consts.rho, par.rho, rel_tol=1e-12):
        msg = f"inner constants were computed for rho={consts.rho}, not {par.rho}"
        raise ValueError(msg)
    if crit.kind is CriterionKind.SOLUTION_DISTANCE and reference is None:
        msg = "solution-distance criterion needs an oracle reference"
        raise ValueError(msg)
    if max_iters is None:
        if crit.kind is CriterionKind.FIXED_BUDGET:
            max_iters = int(crit.budget or 0)
        else:
            max_iters = INNER_GUARD_FACTOR * inner_iteration_bound(consts, crit)

    hessian = p.inner_hessian(par.rho)
    linear = p.q + p.A.T @ (par.multiplier - par.rho * p.b)
    offset = -float(par.multiplier @ p.b) + 0.5 * par.rho * float(p.b @ p.b)
    step = 1.0 / consts.L_p

    def value_of(z: FloatArray) -> float:
        return float(0.5 * z @ hessian @ z + linear @ z) + offset

    x = project(p.box, as_vector(z_warm, p.n, "z_warm"))
    grad = hessian @ x + linear
    holds, measured, distance = _measure(
        p, crit, x, grad, value_of(x), consts, reference
    )
    best = (measured, x, distance)
    iters = 0

    if crit.kind is CriterionKind.FIXED_BUDGET:
        holds = max_iters == 0
    beta = 0.0
    if consts.strongly_convex:
        sqrt_l, sqrt_s = math.sqrt(consts.L_p), math.sqrt(consts.sigma_p)
        beta = (sqrt_l - sqrt_s) / (sqrt_l + sqrt_s)
    t = 1.0
    y = x
    while not holds and iters < max_iters:
        x_next = np.clip(y - step * (hessian @ y + linear), p.box.lb, p.box.ub)
        if not consts.strongly_convex:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_next
            t = t_next
        y = x_next + beta * (x_next - x)
        x = x_next
        iters += 1

        grad = hessian @ x + linear
        holds, measured, distance = _measure(
            p, crit, x, grad, value_of(x), consts, reference
        )
        if measured < best[0]:
            best = (measured, x, distance)
        if crit.kind is CriterionKind.FIXED_BUDGET:
            holds = iters >= max_iters

    if not holds:
        best_measured, best_z, _ = best
        obs.record_inner_solve(crit.kind.value, iters, success=False)
        obs.logger.warning(
            "inner solve hit iteration cap",
            criterion=crit.kind.value,
            iters=iters,
            eps_in=crit.eps_in,
            best_measured=best_measured,
        )
        msg = (
            f"inner solver did not meet {crit.kind.value} <= {crit.eps_in:.3e} "
            f"within {iters} iterations (best {best_measured:.3e})"
        )
        raise InnerSolverError(
            msg,
            best_z=frozen(best_z),
            best_value=eval_aug_lagrangian(p, par, best_z),
            iters=iters,
            criterion=crit,
        )

    obs.record_inner_solve(crit.kind.value, iters, success=True)
    return InnerSolution(
        z_bar=frozen(x),
        criterion=crit,
        certified_value=measured,
        iters=iters,
        approx_dual_value=eval_aug_lagrangian(p, par, x),
        approx_dual_gradient=frozen(p.A @ x - p.b),
        normal_cone_distance=distance,
    )
