"""High-accuracy reference solutions for checking bounds.

Nothing in here is used by the certified solver paths. Small problems are solved
by enumerating box-activity patterns and solving the equality-constrained KKT
system of each; larger ones run the dual fast gradient scheme with tight inner
accuracy and polish the identified active set with the same KKT solve.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterator
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt
from scipy.optimize import linprog, nnls

from .certification import inner_constants
from .dual_schemes import idfgm_step, initial_idfgm_state
from .geometry import (
    DEFAULT_ACTIVE_TOL,
    BoxSet,
    FloatArray,
    as_vector,
    frozen,
    normal_cone_residual,
)
from .inner_solver import (
    CriterionKind,
    InnerReference,
    InnerSolverError,
    StoppingCriterion,
    certified_gap_bound,
    solve_inner,
)
from .observability import Observability, get_observability
from .problem import (
    AugmentedLagrangianParams,
    ProblemInstance,
    as_matrix,
    eval_aug_lagrangian,
    eval_objective,
)

KKT_TOL = 1e-9
ENUMERATION_MAX_N = 12
POLISH_EVERY = 20
INNER_GAP_TOL = 1e-12
NEWTON_MAX_ITERS = 100


class InfeasibleProblemError(ValueError):
    """Raised when ``{z in box : A z = b}`` is empty."""


class OracleBudgetError(RuntimeError):
    """Raised when the pattern or iteration budget runs out without a KKT point."""


class ReferenceMethod(Enum):
    AUTO = "auto"
    ENUMERATION = "enumeration"
    ITERATIVE = "iterative"


@dataclass(frozen=True)
class ReferenceSolution:
    """Primal-dual optimum with its KKT residual.

    ``active_set`` lists ``(coordinate, sign)`` with ``-1`` for a tight lower
    bound and ``+1`` for a tight upper bound.
    """

    z_star: FloatArray
    lambda_star: FloatArray
    f_star: float
    active_set: tuple[tuple[int, int], ...]
    kkt_residual: float
    method: ReferenceMethod

    def dual_distance(self, lambda_0: npt.ArrayLike | None = None) -> float:
        """``||lambda_0 - lambda*||``, the smallest valid ``R_d``."""
        if lambda_0 is None:
            return float(np.linalg.norm(self.lambda_star))
        lam0 = as_vector(lambda_0, self.lambda_star.shape[0], "lambda_0")
        return float(np.linalg.norm(lam0 - self.lambda_star))


# =============================================================================
# KKT machinery
# =============================================================================


def kkt_residual(
    p: ProblemInstance,
    z: npt.ArrayLike,
    lam: npt.ArrayLike,
    active_tol: float = DEFAULT_ACTIVE_TOL,
) -> float:
    """Max of stationarity, primal feasibility and complementarity violations.

    All three are measured in the infinity norm; the stationarity part is the
    minimum-norm element of ``H z + q + A^T lam + N_Z(z)``.
    """
    x = as_vector(z, p.n, "z")
    mult = as_vector(lam, p.m, "lambda")
    box_violation = float(max(np.max(p.box.lb - x), np.max(x - p.box.ub), 0.0))
    if box_violation > active_tol:
        return box_violation
    x = np.clip(x, p.box.lb, p.box.ub)
    grad = p.H @ x + p.q + p.A.T @ mult
    stationary = normal_cone_residual(p.box, x, grad, active_tol)
    stationarity = float(np.max(np.abs(stationary)))
    feasibility = float(np.max(np.abs(p.A @ x - p.b)))
    to_lower = x - p.box.lb
    to_upper = p.box.ub - x
    near_lower = to_lower <= active_tol
    near_upper = to_upper <= active_tol
    complementarity = 0.0
    if np.any(near_lower):
        mu = np.maximum(grad[near_lower], 0.0)
        complementarity = float(np.max(mu * to_lower[near_lower]))
    if np.any(near_upper):
        mu = np.maximum(-grad[near_upper], 0.0)
        upper_part = float(np.max(mu * to_upper[near_upper]))
        complementarity = max(complementarity, upper_part)
    return max(stationarity, feasibility, complementarity, box_violation)


def _solve_pattern(
    p: ProblemInstance, pattern: npt.NDArray[np.int8]
) -> tuple[FloatArray, FloatArray] | None:
    """KKT solve with coordinates fixed at the bounds selected by ``pattern``.

    ``pattern[i]`` is ``-1`` (lower), ``+1`` (upper) or ``0`` (free). Returns
    ``None`` when the reduced system is inconsistent.
    """
    free = pattern == 0
    z = np.where(pattern > 0, p.box.ub, p.box.lb).astype(np.float64)
    n_free = int(np.count_nonzero(free))
    H_ff = p.H[np.ix_(free, free)]
    A_f = p.A[:, free]
    fixed = ~free
    rhs_top = -(p.q[free] + p.H[np.ix_(free, fixed)] @ z[fixed])
    rhs_bottom = p.b - p.A[:, fixed] @ z[fixed]
    kkt = np.block([[H_ff, A_f.T], [A_f, np.zeros((p.m, p.m))]])
    rhs = np.concatenate([rhs_top, rhs_bottom])
    solution, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    scale = 1.0 + float(np.max(np.abs(rhs))) if rhs.size else 1.0
    if float(np.max(np.abs(kkt @ solution - rhs))) > 1e-9 * scale:
        return None
    z[free] = solution[:n_free]
    return z, solution[n_free:]


def _active_set(
    box: BoxSet, z: FloatArray, active_tol: float = DEFAULT_ACTIVE_TOL
) -> tuple[tuple[int, int], ...]:
    rows: list[tuple[int, int]] = []
    for i in range(box.n):
        if z[i] <= box.lb[i] + active_tol:
            rows.append((i, -1))
        elif z[i] >= box.ub[i] - active_tol:
            rows.append((i, 1))
    return tuple(rows)


def _patterns(box: BoxSet) -> Iterator[npt.NDArray[np.int8]]:
    """Activity patterns ordered by active count, then lexicographically."""
    degenerate = box.lb == box.ub
    candidates = [i for i in range(box.n) if not degenerate[i]]
    base = np.zeros(box.n, dtype=np.int8)
    base[degenerate] = -1
    for count in range(len(candidates) + 1):
        for coords in itertools.combinations(candidates, count):
            for signs in itertools.product((-1, 1), repeat=count):
                pattern = base.copy()
                pattern[list(coords)] = signs
                yield pattern


def _accept(
    p: ProblemInstance, z: FloatArray, lam: FloatArray
) -> tuple[FloatArray, float] | None:
    residual = kkt_residual(p, z, lam)
    if residual > KKT_TOL:
        return None
    return np.clip(z, p.box.lb, p.box.ub), residual


# =============================================================================
# Feasibility
# =============================================================================


def slater_margin(p: ProblemInstance) -> float:
    """Largest ``t`` with ``A z = b`` and ``lb + t <= z <= ub - t`` where ``lb < ub``.

    Coordinates with ``lb == ub`` stay fixed. ``t`` is capped at half the smallest
    width; a negative value means the feasible set is empty.
    """
    wide = p.box.lb < p.box.ub
    widths = (p.box.ub - p.box.lb)[wide]
    cap = 0.5 * float(np.min(widths)) if widths.size else 0.0
    n = p.n
    c = np.zeros(n + 1)
    c[-1] = -1.0
    rows = []
    upper = []
    for i in np.flatnonzero(wide):
        up = np.zeros(n + 1)
        up[i], up[-1] = 1.0, 1.0
        rows.append(up)
        upper.append(p.box.ub[i])
        low = np.zeros(n + 1)
        low[i], low[-1] = -1.0, 1.0
        rows.append(low)
        upper.append(-p.box.lb[i])
    A_eq = np.hstack([p.A, np.zeros((p.m, 1))])
    # z may leave the box when t < 0; wide coordinates are bounded by the rows.
    bounds = [
        (float(p.box.lb[i]), float(p.box.ub[i])) if not wide[i] else (None, None)
        for i in range(n)
    ]
    bounds.append((None, cap))
    result = linprog(
        c,
        A_ub=np.array(rows) if rows else None,
        b_ub=np.array(upper) if upper else None,
        A_eq=A_eq,
        b_eq=p.b,
        bounds=bounds,
        method="highs",
    )
    if result.status == 2:
        msg = "A z = b has no solution with the fixed coordinates"
        raise InfeasibleProblemError(msg)
    if not result.success:
        msg = f"margin LP failed: {result.message}"
        raise OracleBudgetError(msg)
    return float(result.x[-1])


def inscribed_radius_lower_bound(p: ProblemInstance) -> float:
    """Radius of a ball around 0 contained in ``{A z - b : z in box}``.

    Uses the Slater margin ``t``: the box contains a Euclidean ball of radius ``t``
    around a feasible point within the wide coordinates, whose image has radius
    ``t * sigma_min(A_wide)``.
    """
    t = slater_margin(p)
    if t <= 0.0:
        return 0.0
    wide = p.box.lb < p.box.ub
    if int(np.count_nonzero(wide)) < p.m:
        return 0.0
    sigma = float(np.linalg.svd(p.A[:, wide], compute_uv=False)[-1])
    return t * sigma


def ball_condition_holds(
    p: ProblemInstance,
    r_bar: float,
    directions: npt.ArrayLike | None = None,
    *,
    samples: int = 8,
    seed: int = 0,
) -> bool:
    """Check ``r_bar d`` is reachable as ``A z - b`` for unit directions ``d``.

    Directions default to ``+-e_i`` plus ``samples`` seeded random unit vectors;
    a sampled check, not a proof.
    """
    if directions is None:
        rng = np.random.default_rng(seed)
        eye = np.eye(p.m)
        random = rng.standard_normal((samples, p.m))
        random /= np.linalg.norm(random, axis=1, keepdims=True)
        dirs = np.vstack([eye, -eye, random])
    else:
        dirs = as_matrix(directions, name="directions")
    bounds = list(zip(p.box.lb.tolist(), p.box.ub.tolist(), strict=True))
    for d in dirs:
        unit = d / np.linalg.norm(d)
        result = linprog(
            np.zeros(p.n),
            A_eq=p.A,
            b_eq=p.b + r_bar * unit,
            bounds=bounds,
            method="highs",
        )
        if not result.success:
            return False
    return True


# =============================================================================
# Reference solves
# =============================================================================


def _enumerate(p: ProblemInstance, max_patterns: int | None) -> ReferenceSolution:
    budget = 3**p.n if max_patterns is None else max_patterns
    for tried, pattern in enumerate(_patterns(p.box)):
        if tried >= budget:
            break
        solved = _solve_pattern(p, pattern)
        if solved is None:
            continue
        z, lam = solved
        accepted = _accept(p, z, lam)
        if accepted is None:
            continue
        z, residual = accepted
        return ReferenceSolution(
            z_star=frozen(z),
            lambda_star=frozen(lam),
            f_star=eval_objective(p, z),
            active_set=_active_set(p.box, z),
            kkt_residual=residual,
            method=ReferenceMethod.ENUMERATION,
        )
    msg = f"no KKT point among the first {budget} activity patterns"
    raise OracleBudgetError(msg)


def _pattern_from(box: BoxSet, z: FloatArray, tol: float) -> npt.NDArray[np.int8]:
    pattern = np.zeros(box.n, dtype=np.int8)
    pattern[z <= box.lb + tol] = -1
    pattern[z >= box.ub - tol] = 1
    pattern[box.lb == box.ub] = -1
    return pattern


def _iterate(
    p: ProblemInstance, rho: float, max_outer: int, obs: Observability
) -> ReferenceSolution:
    consts = inner_constants(p, rho)
    crit = StoppingCriterion(CriterionKind.NORMAL_CONE_DISTANCE, 1e-10)
    state = initial_idfgm_state(p)
    for k in range(max_outer):
        try:
            state = idfgm_step(p, rho, state, crit, consts=consts, observability=obs)
        except InnerSolverError as exc:
            msg = f"inner solve failed at outer iteration {k}: {exc}"
            raise OracleBudgetError(msg) from exc
        if (k + 1) % POLISH_EVERY:
            continue
        for tol in (1e-8, 1e-6, 1e-4):
            solved = _solve_pattern(p, _pattern_from(p.box, state.z_last, tol))
            if solved is None:
                continue
            accepted = _accept(p, *solved)
            if accepted is None:
                continue
            z, residual = accepted
            obs.logger.debug("reference polished", outer=k + 1, identify_tol=tol)
            return ReferenceSolution(
                z_star=frozen(z),
                lambda_star=frozen(solved[1]),
                f_star=eval_objective(p, z),
                active_set=_active_set(p.box, z),
                kkt_residual=residual,
                method=ReferenceMethod.ITERATIVE,
            )
    msg = f"active set not identified within {max_outer} outer iterations"
    raise OracleBudgetError(msg)


def solve_reference(
    p: ProblemInstance,
    method: ReferenceMethod = ReferenceMethod.AUTO,
    *,
    max_patterns: int | None = None,
    max_outer: int = 20_000,
    rho: float = 1.0,
    observability: Observability | None = None,
) -> ReferenceSolution:
    """Optimal primal-dual pair of ``p`` with KKT residual at most ``1e-9``.

    ``AUTO`` enumerates activity patterns for ``n <= 12`` and iterates otherwise.
    """
    obs = observability or get_observability()
    margin = slater_margin(p)
    if margin < -KKT_TOL:
        msg = f"feasible set is empty (Slater margin {margin:.3e})"
        raise InfeasibleProblemError(msg)
    if margin <= KKT_TOL:
        obs.logger.warning("feasible set has no relative interior", margin=margin)
    if method is ReferenceMethod.AUTO:
        if p.n <= ENUMERATION_MAX_N:
            method = ReferenceMethod.ENUMERATION
        else:
            method = ReferenceMethod.ITERATIVE
    if method is ReferenceMethod.ENUMERATION:
        return _enumerate(p, max_patterns)
    return _iterate(p, rho, max_outer, obs)


# =============================================================================
# Inner and dual references
# =============================================================================


def _projected_newton(
    M: FloatArray, c: FloatArray, box: BoxSet, x0: FloatArray
) -> FloatArray:
    """Projected Newton with Armijo search on ``1/2 x^T M x + c^T x`` over the box."""
    x = np.clip(x0, box.lb, box.ub)
    value = float(0.5 * x @ M @ x + c @ x)
    for _ in range(NEWTON_MAX_ITERS):
        grad = M @ x + c
        clamped = ((x == box.lb) & (grad > 0.0)) | ((x == box.ub) & (grad < 0.0))
        free = ~clamped
        if not np.any(free) or np.linalg.norm(grad[free]) < 1e-14:
            break
        rhs = -(c[free] + M[np.ix_(free, clamped)] @ x[clamped])
        target, *_ = np.linalg.lstsq(M[np.ix_(free, free)], rhs, rcond=None)
        search = np.zeros_like(x)
        search[free] = target - x[free]
        slope = float(search @ grad)
        if slope >= 0.0:
            break
        step = 1.0
        while step > 1e-22:
            candidate = np.clip(x + step * search, box.lb, box.ub)
            cand_value = float(0.5 * candidate @ M @ candidate + c @ candidate)
            if (cand_value - value) / (step * slope) >= 0.1:
                break
            step *= 0.6
        else:
            break
        improvement = value - cand_value
        x, value = candidate, cand_value
        if improvement <= 1e-15 * max(abs(value), 1.0):
            break
    return x


def solve_inner_reference(
    p: ProblemInstance,
    par: AugmentedLagrangianParams,
    z_warm: npt.ArrayLike | None = None,
) -> InnerReference:
    """Exact minimizer of ``L_rho(., lam)`` over the box, gap at most ``1e-12``."""
    par.check(p)
    consts = inner_constants(p, par.rho)
    M = p.inner_hessian(par.rho)
    c = p.q + p.A.T @ (par.multiplier - par.rho * p.b)
    start = p.box.midpoint if z_warm is None else as_vector(z_warm, p.n, "z_warm")
    x = _projected_newton(M, c, p.box, start)

    residual = normal_cone_residual(p.box, x, M @ x + c)
    gap = certified_gap_bound(float(np.linalg.norm(residual)), consts)
    if gap > INNER_GAP_TOL:
        crit = StoppingCriterion(CriterionKind.FUNCTION_GAP, math.sqrt(INNER_GAP_TOL))
        x = solve_inner(p, par, crit, x, consts=consts).z_bar
    return InnerReference(z_star=frozen(x), value=eval_aug_lagrangian(p, par, x))


def exact_dual_value_and_gradient(
    p: ProblemInstance, rho: float, lam: npt.ArrayLike
) -> tuple[float, FloatArray]:
    """``d_rho(lam)`` and ``A z*(lam) - b``."""
    par = AugmentedLagrangianParams(rho, as_vector(lam, p.m, "lambda"))
    ref = solve_inner_reference(p, par)
    return ref.value, frozen(p.A @ ref.z_star - p.b)


def box_constraints(box: BoxSet) -> tuple[FloatArray, FloatArray]:
    """``(C, c)`` with ``C z <= c`` equivalent to membership in the box."""
    eye = np.eye(box.n)
    return np.vstack([eye, -eye]), np.concatenate([box.ub, -box.lb])


def polyhedral_normal_cone_distance(
    C: npt.ArrayLike,
    c: npt.ArrayLike,
    z_bar: npt.ArrayLike,
    g: npt.ArrayLike,
    active_tol: float = DEFAULT_ACTIVE_TOL,
) -> float:
    """``min_{mu >= 0} ||g + C_act^T mu||`` over the rows active at ``z_bar``."""
    C_mat = as_matrix(C, name="C")
    c_vec = as_vector(c, C_mat.shape[0], "c")
    z = as_vector(z_bar, C_mat.shape[1], "z_bar")
    grad = as_vector(g, C_mat.shape[1], "g")
    slack = c_vec - C_mat @ z
    if np.any(slack < -active_tol):
        msg = f"z_bar violates C z <= c by {float(-np.min(slack)):.3e}"
        raise ValueError(msg)
    active = slack <= active_tol
    if not np.any(active):
        return float(np.linalg.norm(grad))
    _, distance = nnls(C_mat[active].T, -grad)
    return float(distance)
