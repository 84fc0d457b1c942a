"""Inexact dual gradient (IDGM) and dual fast gradient (IDFGM) schemes.

Both schemes query the inner solver at the current multiplier, use ``A z_bar - b``
as an approximate dual gradient and recover a primal point by weighted averaging
of the inner solutions (weights ``alpha_j`` for IDGM, ``theta_j`` for IDFGM).

A run is either CERTIFIED (exactly ``k_out`` outer steps with ``eps_in`` from the
certificate, fixed ``rho``) or MEASURED (stops once ``|f(z_hat) - f*|`` and
``||A z_hat - b||`` are both below ``eps_out``; needs ``f*``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
import numpy.typing as npt

from .certification import (
    Certificate,
    CertificationError,
    certify_idfgm,
    certify_idgm,
    final_guarantees,
    inner_constants,
)
from .geometry import FloatArray, as_vector, frozen
from .inner_solver import (
    CriterionKind,
    InnerConstants,
    InnerSolution,
    InnerSolverError,
    StoppingCriterion,
    criterion_threshold,
    solve_inner,
)
from .observability import Observability, get_observability
from .problem import (
    AugmentedLagrangianParams,
    BoundCheck,
    IterationBounds,
    IterationRecord,
    ProblemInstance,
    RunMode,
    RunStatus,
    Scheme,
    SolveReport,
    eval_objective,
)

ADAPTIVE_WINDOW = 10
ADAPTIVE_DECREASE = 0.9
ADAPTIVE_FACTOR = 2.0
DUAL_EVAL_TOL = 1e-6
LOG_EVERY_BELOW = 1000


# =============================================================================
# Bounds
# =============================================================================


@dataclass(frozen=True)
class BoundConstants:
    """Constants entering the per-iteration bounds of both schemes."""

    L_bar: float
    L_d: float
    R_d: float
    C_Z: float
    eps_in: float
    rho: float
    lambda_0_norm: float
    lambda_star_norm: float

    @classmethod
    def from_certificate(
        cls,
        cert: Certificate,
        *,
        eps_in: float | None = None,
        lambda_star_norm: float | None = None,
    ) -> BoundConstants:
        if lambda_star_norm is None:
            lambda_star_norm = cert.lambda_0_norm + cert.R_d
        return cls(
            L_bar=cert.L_bar,
            L_d=cert.L_d,
            R_d=cert.R_d,
            C_Z=cert.C_Z,
            eps_in=cert.eps_in if eps_in is None else eps_in,
            rho=cert.rho,
            lambda_0_norm=cert.lambda_0_norm,
            lambda_star_norm=lambda_star_norm,
        )


def per_iteration_bounds(
    scheme: Scheme, k: int, consts: BoundConstants
) -> IterationBounds:
    """Dual gap, infeasibility and primal bracket guaranteed at outer index k."""
    if k < 0:
        msg = f"k must be non-negative, got {k}"
        raise ValueError(msg)
    c = consts
    err = c.C_Z * c.eps_in
    if scheme is Scheme.IDGM:
        dual_gap = c.L_bar * c.R_d**2 / (2.0 * (k + 1)) + err
        infeas = 2.0 * c.L_bar * c.R_d / (k + 1) + math.sqrt(
            2.0 * c.L_bar * err / (k + 1)
        )
        upper = c.L_bar * c.lambda_0_norm**2 / (2.0 * (k + 1)) + err
    else:
        pairs = (k + 1) * (k + 2)
        growth = 4.0 * (k + 3) / 3.0
        dual_gap = 2.0 * c.L_d * c.R_d**2 / pairs + growth * err
        infeas = 8.0 * c.L_d * c.R_d / pairs + 4.0 * math.sqrt(
            2.0 * c.L_d * (k + 3) * err / (3.0 * pairs)
        )
        upper = 2.0 * c.L_d * c.lambda_0_norm**2 / pairs + growth * err
    lower = -(c.lambda_star_norm + 0.5 * c.rho * infeas) * infeas
    return IterationBounds(
        k=k,
        dual_gap=dual_gap,
        infeasibility=infeas,
        primal_lower=lower,
        primal_upper=upper,
    )


def should_log(k: int) -> bool:
    """Every index below 1000, then every ``ceil(k / 1000)``-th."""
    if k < LOG_EVERY_BELOW:
        return True
    return k % math.ceil(k / LOG_EVERY_BELOW) == 0


# =============================================================================
# IDGM
# =============================================================================


@dataclass(frozen=True)
class IdgmState:
    """Outer state of the dual gradient scheme after ``k`` completed steps.

    ``S_k`` is the running sum of step sizes; ``z_hat`` and ``lambda_hat`` are the
    step-weighted averages of the inner points and of the updated multipliers.
    """

    lambda_k: FloatArray
    S_k: float
    z_sum: FloatArray
    lambda_sum: FloatArray
    z_hat: FloatArray
    lambda_hat: FloatArray
    k: int
    alpha_range: tuple[float, float]
    lambda_0: FloatArray
    z_last: FloatArray
    inner_iters_total: int = 0
    last_dual_value: float = math.nan


def initial_idgm_state(
    p: ProblemInstance,
    rho: float,
    lambda_0: npt.ArrayLike | None = None,
    L_bar: float | None = None,
) -> IdgmState:
    lam0 = np.zeros(p.m) if lambda_0 is None else as_vector(lambda_0, p.m, "lambda_0")
    L_bar = 1.0 / rho if L_bar is None else L_bar
    if L_bar * rho < 1.0 - 1e-12:
        msg = f"L_bar must be at least 1/rho = {1.0 / rho}, got {L_bar}"
        raise ValueError(msg)
    start = p.box.midpoint
    return IdgmState(
        lambda_k=frozen(lam0),
        S_k=0.0,
        z_sum=frozen(np.zeros(p.n)),
        lambda_sum=frozen(np.zeros(p.m)),
        z_hat=frozen(start),
        lambda_hat=frozen(lam0),
        k=0,
        alpha_range=(1.0 / L_bar, rho),
        lambda_0=frozen(lam0),
        z_last=frozen(start),
    )


def idgm_step(
    p: ProblemInstance,
    rho: float,
    state: IdgmState,
    crit: StoppingCriterion,
    *,
    alpha: float | None = None,
    consts: InnerConstants | None = None,
    observability: Observability | None = None,
) -> IdgmState:
    """One step ``lam+ = lam + alpha (A z_bar(lam) - b)`` with averaging."""
    low, high = state.alpha_range
    alpha = high if alpha is None else float(alpha)
    if not low * (1.0 - 1e-12) <= alpha <= high * (1.0 + 1e-12):
        msg = f"alpha={alpha} outside the admissible range [{low}, {high}]"
        raise ValueError(msg)
    par = AugmentedLagrangianParams(rho, state.lambda_k)
    sol = solve_inner(
        p, par, crit, state.z_last, consts=consts, observability=observability
    )
    lam_next = state.lambda_k + alpha * sol.approx_dual_gradient
    S_next = state.S_k + alpha
    z_sum = state.z_sum + alpha * sol.z_bar
    lambda_sum = state.lambda_sum + alpha * lam_next
    return replace(
        state,
        lambda_k=frozen(lam_next),
        S_k=S_next,
        z_sum=frozen(z_sum),
        lambda_sum=frozen(lambda_sum),
        z_hat=frozen(np.clip(z_sum / S_next, p.box.lb, p.box.ub)),
        lambda_hat=frozen(lambda_sum / S_next),
        k=state.k + 1,
        z_last=sol.z_bar,
        inner_iters_total=state.inner_iters_total + sol.iters,
        last_dual_value=sol.approx_dual_value,
    )


# =============================================================================
# IDFGM
# =============================================================================


def next_theta(S: float) -> float:
    """``theta_{k+1}`` from ``S_k``; equals ``(1 + sqrt(4 theta_k^2 + 1)) / 2``.

    Using ``S_k = theta_k^2`` keeps ``theta_{k+1}^2 = S_{k+1}`` exact up to a
    single rounding instead of accumulating drift over long runs.
    """
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * S))


def theta_sequence(k_max: int) -> tuple[FloatArray, FloatArray]:
    """``theta_k`` and ``S_k`` for ``k = 0..k_max``."""
    theta = np.empty(k_max + 1)
    S = np.empty(k_max + 1)
    theta[0] = S[0] = 1.0
    for k in range(1, k_max + 1):
        theta[k] = next_theta(S[k - 1])
        S[k] = S[k - 1] + theta[k]
    return theta, S


@dataclass(frozen=True)
class IdfgmState:
    """Outer state of the dual fast gradient scheme after ``k`` completed steps.

    ``theta_k`` is the weight of the next step and ``S_k`` the sum of the weights
    of completed steps, so ``S_k == theta_{k-1}**2``. ``mu_k`` is the output dual
    point of the last step and ``grad_accum`` the theta-weighted gradient sum.
    """

    lambda_k: FloatArray
    mu_k: FloatArray
    theta_k: float
    S_k: float
    grad_accum: FloatArray
    z_sum: FloatArray
    z_hat: FloatArray
    lambda_0: FloatArray
    k: int
    z_last: FloatArray
    inner_iters_total: int = 0
    last_dual_value: float = math.nan


def initial_idfgm_state(
    p: ProblemInstance, lambda_0: npt.ArrayLike | None = None
) -> IdfgmState:
    lam0 = np.zeros(p.m) if lambda_0 is None else as_vector(lambda_0, p.m, "lambda_0")
    start = p.box.midpoint
    return IdfgmState(
        lambda_k=frozen(lam0),
        mu_k=frozen(lam0),
        theta_k=1.0,
        S_k=0.0,
        grad_accum=frozen(np.zeros(p.m)),
        z_sum=frozen(np.zeros(p.n)),
        z_hat=frozen(start),
        lambda_0=frozen(lam0),
        k=0,
        z_last=frozen(start),
    )


def idfgm_step(
    p: ProblemInstance,
    rho: float,
    state: IdfgmState,
    crit: StoppingCriterion,
    *,
    consts: InnerConstants | None = None,
    observability: Observability | None = None,
) -> IdfgmState:
    """One step of the dual fast gradient scheme with theta-weighted averaging."""
    par = AugmentedLagrangianParams(rho, state.lambda_k)
    sol = solve_inner(
        p, par, crit, state.z_last, consts=consts, observability=observability
    )
    grad = sol.approx_dual_gradient
    theta = state.theta_k
    mu = state.lambda_k + rho * grad
    S_now = state.S_k + theta
    grad_accum = state.grad_accum + theta * grad
    z_sum = state.z_sum + theta * sol.z_bar

    theta_next = next_theta(S_now)
    a_next = theta_next / (S_now + theta_next)
    lam_next = (1.0 - a_next) * mu + a_next * (state.lambda_0 + rho * grad_accum)
    return replace(
        state,
        lambda_k=frozen(lam_next),
        mu_k=frozen(mu),
        theta_k=theta_next,
        S_k=S_now,
        grad_accum=frozen(grad_accum),
        z_sum=frozen(z_sum),
        z_hat=frozen(np.clip(z_sum / S_now, p.box.lb, p.box.ub)),
        k=state.k + 1,
        z_last=sol.z_bar,
        inner_iters_total=state.inner_iters_total + sol.iters,
        last_dual_value=sol.approx_dual_value,
    )


# =============================================================================
# Runs
# =============================================================================


def _output_dual(state: IdgmState | IdfgmState) -> FloatArray:
    if isinstance(state, IdgmState):
        return state.lambda_hat
    return state.mu_k


def _dual_value(
    p: ProblemInstance,
    rho: float,
    lam: FloatArray,
    z_warm: FloatArray,
    consts: InnerConstants,
    obs: Observability,
) -> float | None:
    crit = StoppingCriterion(CriterionKind.FUNCTION_GAP, DUAL_EVAL_TOL)
    try:
        sol: InnerSolution = solve_inner(
            p,
            AugmentedLagrangianParams(rho, lam),
            crit,
            z_warm,
            consts=consts,
            observability=obs,
        )
    except InnerSolverError as exc:
        obs.logger.warning("dual value evaluation failed", error=str(exc))
        return None
    return sol.approx_dual_value


def _bound_table(
    scheme: Scheme,
    cert: Certificate,
    bounds: IterationBounds,
    *,
    status: RunStatus,
    infeasibility: float,
    primal_gap: float | None,
    dual_gap: float | None,
    lambda_star_norm: float | None,
) -> tuple[BoundCheck, ...]:
    neg_gap = None if primal_gap is None else -primal_gap
    rows = [
        BoundCheck("dual_gap", bounds.dual_gap, dual_gap),
        BoundCheck("infeasibility", bounds.infeasibility, infeasibility),
        BoundCheck("primal_gap_upper", bounds.primal_upper, primal_gap),
        BoundCheck("primal_gap_lower", -bounds.primal_lower, neg_gap),
    ]
    if status is RunStatus.CERTIFIED:
        final = final_guarantees(cert, lambda_star_norm)
        rows += [
            BoundCheck("final_dual_gap", final.dual_gap, dual_gap),
            BoundCheck("final_infeasibility", final.infeasibility, infeasibility),
            BoundCheck("final_primal_upper", final.primal_upper, primal_gap),
            BoundCheck("final_primal_lower", -final.primal_lower, neg_gap),
        ]
    return tuple(rows)


def _run(
    scheme: Scheme,
    p: ProblemInstance,
    rho: float,
    eps_out: float,
    R_d: float,
    mode: RunMode,
    *,
    lambda_0: npt.ArrayLike | None,
    L_bar: float | None,
    criterion: CriterionKind,
    f_star: float | None,
    lambda_star_norm: float | None,
    eps_in_override: float | None,
    inner_budget: int | None,
    adaptive_rho: bool,
    max_outer: int | None,
    observability: Observability | None,
    run_id: str,
) -> SolveReport:
    obs = observability or get_observability()
    if mode is RunMode.CERTIFIED:
        if eps_in_override is not None:
            msg = "certified runs use eps_in from the certificate; override refused"
            raise CertificationError(msg)
        if adaptive_rho:
            msg = "adaptive rho is uncertified and cannot run in certified mode"
            raise CertificationError(msg)
        if inner_budget is not None:
            msg = "a fixed inner budget is uncertified and cannot run in certified mode"
            raise CertificationError(msg)
    elif f_star is None:
        msg = "measured mode needs the reference optimal value f_star"
        raise ValueError(msg)
    if eps_in_override is not None and not eps_in_override > 0.0:
        msg = f"eps_in_override must be positive, got {eps_in_override}"
        raise ValueError(msg)

    consts = inner_constants(p, rho)
    lam0 = np.zeros(p.m) if lambda_0 is None else as_vector(lambda_0, p.m, "lambda_0")
    lam0_norm = float(np.linalg.norm(lam0))
    if scheme is Scheme.IDGM:
        cert = certify_idgm(
            consts,
            eps_out,
            R_d,
            L_bar=L_bar,
            lambda_0_norm=lam0_norm,
            criterion=criterion,
        )
    else:
        cert = certify_idfgm(
            consts, eps_out, R_d, lambda_0_norm=lam0_norm, criterion=criterion
        )
    obs.logger.info("certificate", run_id, **cert.to_dict())

    eps_in = cert.eps_in if eps_in_override is None else eps_in_override

    def make_criterion(c: InnerConstants) -> StoppingCriterion:
        if inner_budget is not None:
            return StoppingCriterion.fixed_budget(inner_budget)
        return StoppingCriterion(criterion, criterion_threshold(criterion, eps_in, c))

    crit = make_criterion(consts)
    bound_consts = BoundConstants.from_certificate(
        cert, eps_in=eps_in, lambda_star_norm=lambda_star_norm
    )
    if mode is RunMode.CERTIFIED:
        last_index = cert.k_out
    else:
        last_index = max_outer if max_outer is not None else max(2 * cert.k_out, 1000)

    state: IdgmState | IdfgmState
    if scheme is Scheme.IDGM:
        state = initial_idgm_state(p, rho, lam0, cert.L_bar)
    else:
        state = initial_idfgm_state(p, lam0)

    trace: list[IterationRecord] = []
    infeas_history: list[float] = []
    last_rho_change = 0
    status = RunStatus.NOT_CONVERGED
    while True:
        if isinstance(state, IdgmState):
            state = idgm_step(p, rho, state, crit, consts=consts, observability=obs)
        else:
            state = idfgm_step(p, rho, state, crit, consts=consts, observability=obs)
        k = state.k - 1
        z_hat = state.z_hat
        lam_out = _output_dual(state)
        infeas = float(np.linalg.norm(p.A @ z_hat - p.b))
        objective = eval_objective(p, z_hat)
        obs.record_outer_iteration(scheme.value, k, infeas, run_id)
        infeas_history.append(infeas)

        if should_log(k):
            trace.append(
                IterationRecord(
                    k=k,
                    infeasibility=infeas,
                    objective=objective,
                    approx_dual_value=state.last_dual_value,
                    inner_iters=state.inner_iters_total,
                    rho=rho,
                    bounds=per_iteration_bounds(scheme, k, bound_consts),
                    z_hat=z_hat,
                    lambda_out=lam_out,
                )
            )

        if mode is RunMode.CERTIFIED:
            if k >= last_index:
                status = RunStatus.CERTIFIED
                break
        else:
            assert f_star is not None
            if abs(objective - f_star) <= eps_out and infeas <= eps_out:
                status = RunStatus.CONVERGED
                break
            if k >= last_index:
                status = RunStatus.NOT_CONVERGED
                break

        if (
            adaptive_rho
            and k - last_rho_change >= ADAPTIVE_WINDOW
            and infeas > ADAPTIVE_DECREASE * infeas_history[-1 - ADAPTIVE_WINDOW]
        ):
            rho *= ADAPTIVE_FACTOR
            last_rho_change = k
            consts = inner_constants(p, rho)
            crit = make_criterion(consts)
            bound_consts = replace(bound_consts, rho=rho, L_d=1.0 / rho)
            if isinstance(state, IdgmState):
                low = min(state.alpha_range[0], rho)
                state = replace(state, alpha_range=(low, rho))
            obs.logger.info("rho increased", run_id, rho=rho, k=k, infeasibility=infeas)

    final_bounds = per_iteration_bounds(scheme, k, bound_consts)
    primal_gap = None if f_star is None else objective - f_star
    dual_gap = None
    if f_star is not None:
        value = _dual_value(p, rho, lam_out, state.z_last, consts, obs)
        dual_gap = None if value is None else f_star - value
    table = _bound_table(
        scheme,
        cert,
        final_bounds,
        status=status,
        infeasibility=infeas,
        primal_gap=primal_gap,
        dual_gap=dual_gap,
        lambda_star_norm=lambda_star_norm,
    )
    for row in table:
        if not row.holds:
            assert row.measured is not None
            obs.record_bound_violation(
                scheme.value, row.name, row.certified, row.measured, run_id
            )
    return SolveReport(
        scheme=scheme,
        status=status,
        z_hat=z_hat,
        lambda_out=lam_out,
        objective=objective,
        infeasibility=infeas,
        primal_gap=primal_gap,
        dual_gap=dual_gap,
        outer_iters=k,
        inner_iters_total=state.inner_iters_total,
        bound_table=table,
        rho_final=rho,
        certificate=cert,
        trace=tuple(trace),
    )


def run_idgm(
    p: ProblemInstance,
    rho: float,
    eps_out: float,
    R_d: float,
    crit_mode: RunMode = RunMode.CERTIFIED,
    *,
    lambda_0: npt.ArrayLike | None = None,
    L_bar: float | None = None,
    criterion: CriterionKind = CriterionKind.NORMAL_CONE_DISTANCE,
    f_star: float | None = None,
    lambda_star_norm: float | None = None,
    eps_in_override: float | None = None,
    inner_budget: int | None = None,
    adaptive_rho: bool = False,
    max_outer: int | None = None,
    observability: Observability | None = None,
    run_id: str = "",
) -> SolveReport:
    """Run the dual gradient scheme; ``R_d`` bounds ``||lambda_0 - lambda*||``."""
    if not R_d > 0.0:
        msg = f"R_d must be positive for the gradient scheme, got {R_d}"
        raise ValueError(msg)
    return _run(
        Scheme.IDGM,
        p,
        rho,
        eps_out,
        R_d,
        crit_mode,
        lambda_0=lambda_0,
        L_bar=L_bar,
        criterion=criterion,
        f_star=f_star,
        lambda_star_norm=lambda_star_norm,
        eps_in_override=eps_in_override,
        inner_budget=inner_budget,
        adaptive_rho=adaptive_rho,
        max_outer=max_outer,
        observability=observability,
        run_id=run_id,
    )


def run_idfgm(
    p: ProblemInstance,
    rho: float,
    eps_out: float,
    R_d: float,
    crit_mode: RunMode = RunMode.CERTIFIED,
    *,
    lambda_0: npt.ArrayLike | None = None,
    criterion: CriterionKind = CriterionKind.NORMAL_CONE_DISTANCE,
    f_star: float | None = None,
    lambda_star_norm: float | None = None,
    eps_in_override: float | None = None,
    inner_budget: int | None = None,
    adaptive_rho: bool = False,
    max_outer: int | None = None,
    observability: Observability | None = None,
    run_id: str = "",
) -> SolveReport:
    """Run the dual fast gradient scheme; ``R_d = 0`` yields a single step."""
    if R_d < 0.0:
        msg = f"R_d must be non-negative, got {R_d}"
        raise ValueError(msg)
    return _run(
        Scheme.IDFGM,
        p,
        rho,
        eps_out,
        R_d,
        crit_mode,
        lambda_0=lambda_0,
        L_bar=None,
        criterion=criterion,
        f_star=f_star,
        lambda_star_norm=lambda_star_norm,
        eps_in_override=eps_in_override,
        inner_budget=inner_budget,
        adaptive_rho=adaptive_rho,
        max_outer=max_outer,
        observability=observability,
        run_id=run_id,
    )


def run_scheme(
    scheme: Scheme,
    p: ProblemInstance,
    rho: float,
    eps_out: float,
    R_d: float,
    crit_mode: RunMode = RunMode.CERTIFIED,
    **kwargs: Any,
) -> SolveReport:
    if scheme is Scheme.IDGM:
        return run_idgm(p, rho, eps_out, R_d, crit_mode, **kwargs)
    kwargs.pop("L_bar", None)
    return run_idfgm(p, rho, eps_out, R_d, crit_mode, **kwargs)
