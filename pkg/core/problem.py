"""Problem data model and evaluation primitives.

The problem class is ``min 1/2 z^T H z + q^T z  s.t.  A z = b,  z in box`` and the
augmented Lagrangian is ``f(z) + <lam, Az - b> + rho/2 ||Az - b||^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import TYPE_CHECKING, Any

import numpy as np
import numpy.typing as npt

from .geometry import (
    BoxSet,
    DimensionMismatchError,
    FloatArray,
    as_vector,
    diameter,
    frozen,
)

if TYPE_CHECKING:
    from .certification import Certificate

SYMMETRY_TOL = 1e-12
RANK_RTOL = 1e-10


def as_matrix(
    values: npt.ArrayLike, shape: tuple[int, int] | None = None, name: str = "matrix"
) -> FloatArray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        msg = f"{name} must be two-dimensional, got shape {arr.shape}"
        raise DimensionMismatchError(msg)
    if shape is not None and arr.shape != shape:
        msg = f"{name} has shape {arr.shape}, expected {shape}"
        raise DimensionMismatchError(msg)
    return arr


@dataclass(frozen=True)
class ProblemInstance:
    """Convex QP with equality coupling over a box. Arrays are stored read-only."""

    H: FloatArray
    q: FloatArray
    A: FloatArray
    b: FloatArray
    box: BoxSet

    def __post_init__(self) -> None:
        H = as_matrix(self.H, name="H")
        n = H.shape[0]
        H = as_matrix(H, (n, n), "H")
        q = as_vector(self.q, n, "q")
        A = as_matrix(self.A, name="A")
        if A.shape[1] != n:
            msg = f"A has {A.shape[1]} columns, expected {n}"
            raise DimensionMismatchError(msg)
        m = A.shape[0]
        b = as_vector(self.b, m, "b")
        if self.box.n != n:
            msg = f"box has {self.box.n} coordinates, expected {n}"
            raise DimensionMismatchError(msg)

        for name, arr in (("H", H), ("q", q), ("A", A), ("b", b)):
            if not np.all(np.isfinite(arr)):
                msg = f"{name} contains non-finite entries"
                raise ValueError(msg)

        asymmetry = float(np.max(np.abs(H - H.T))) if n else 0.0
        if asymmetry > SYMMETRY_TOL:
            msg = f"H is not symmetric (max asymmetry {asymmetry:.3e})"
            raise ValueError(msg)
        if m < 1 or m > n:
            msg = f"need 1 <= m <= n, got m={m}, n={n}"
            raise ValueError(msg)
        singular = np.linalg.svd(A, compute_uv=False)
        if singular[-1] <= RANK_RTOL * singular[0]:
            ratio = singular[-1] / singular[0]
            msg = f"A is rank deficient (sigma_min/sigma_max = {ratio:.3e})"
            raise ValueError(msg)

        object.__setattr__(self, "H", frozen(H))
        object.__setattr__(self, "q", frozen(q))
        object.__setattr__(self, "A", frozen(A))
        object.__setattr__(self, "b", frozen(b))

    @property
    def n(self) -> int:
        return int(self.H.shape[0])

    @property
    def m(self) -> int:
        return int(self.A.shape[0])

    @cached_property
    def gram(self) -> FloatArray:
        """``A^T A``."""
        return frozen(self.A.T @ self.A)

    @cached_property
    def diameter(self) -> float:
        return diameter(self.box)

    @cached_property
    def sigma_min_A(self) -> float:
        return float(np.linalg.svd(self.A, compute_uv=False)[-1])

    def inner_hessian(self, rho: float) -> FloatArray:
        """``H + rho A^T A``, the Hessian of the augmented Lagrangian in z."""
        return self.H + rho * self.gram


@dataclass(frozen=True)
class AugmentedLagrangianParams:
    """Penalty ``rho`` and multiplier for one evaluation of ``L_rho(., lam)``."""

    rho: float
    multiplier: FloatArray

    def __post_init__(self) -> None:
        if not self.rho > 0.0:
            msg = f"rho must be positive, got {self.rho}"
            raise ValueError(msg)
        object.__setattr__(self, "multiplier", frozen(as_vector(self.multiplier)))

    @property
    def dual_lipschitz(self) -> float:
        """``L_d = 1 / rho``."""
        return 1.0 / self.rho

    def check(self, p: ProblemInstance) -> None:
        if self.multiplier.shape[0] != p.m:
            msg = f"multiplier has length {self.multiplier.shape[0]}, expected {p.m}"
            raise DimensionMismatchError(msg)


class Scheme(Enum):
    """Outer dual scheme."""

    IDGM = "idgm"
    IDFGM = "idfgm"


class RunMode(Enum):
    CERTIFIED = "certified"
    MEASURED = "measured"


class RunStatus(Enum):
    """Outcome of an outer run."""

    CERTIFIED = "certified"  # fixed certified budget completed
    CONVERGED = "converged"  # measured stopping rule met
    NOT_CONVERGED = "not_converged"  # measured cap reached first


@dataclass(frozen=True)
class BoundCheck:
    """One row of a bound-versus-measured table."""

    name: str
    certified: float
    measured: float | None

    @property
    def holds(self) -> bool:
        return self.measured is None or self.measured <= self.certified + 1e-8


@dataclass(frozen=True)
class IterationBounds:
    """Certified bounds at one outer index k."""

    k: int
    dual_gap: float
    infeasibility: float
    primal_lower: float
    primal_upper: float


@dataclass(frozen=True)
class IterationRecord:
    """Snapshot of an outer run at index k (the averaged iterate is z_k)."""

    k: int
    infeasibility: float
    objective: float
    approx_dual_value: float
    inner_iters: int
    rho: float
    bounds: IterationBounds
    z_hat: FloatArray
    lambda_out: FloatArray


@dataclass(frozen=True)
class SolveReport:
    """Final primal/dual pair with measured quantities and their bounds.

    ``outer_iters`` is the index k of the returned averaged iterate; k + 1 inner
    problems were solved to produce it.
    """

    scheme: Scheme
    status: RunStatus
    z_hat: FloatArray
    lambda_out: FloatArray
    objective: float
    infeasibility: float
    primal_gap: float | None
    dual_gap: float | None
    outer_iters: int
    inner_iters_total: int
    bound_table: tuple[BoundCheck, ...]
    rho_final: float
    certificate: Certificate | None = None
    trace: tuple[IterationRecord, ...] = field(default=(), repr=False)

    @property
    def bounds_hold(self) -> bool:
        return all(row.holds for row in self.bound_table)

    def violations(self) -> list[BoundCheck]:
        return [row for row in self.bound_table if not row.holds]

    def to_dict(self) -> dict[str, Any]:
        return {
            "scheme": self.scheme.value,
            "status": self.status.value,
            "objective": self.objective,
            "infeasibility": self.infeasibility,
            "primal_gap": self.primal_gap,
            "dual_gap": self.dual_gap,
            "outer_iters": self.outer_iters,
            "inner_iters_total": self.inner_iters_total,
            "rho_final": self.rho_final,
            "z_hat": self.z_hat.tolist(),
            "lambda_out": self.lambda_out.tolist(),
            "bound_table": [
                {
                    "name": row.name,
                    "certified": row.certified,
                    "measured": row.measured,
                    "holds": row.holds,
                }
                for row in self.bound_table
            ],
            "certificate": (
                self.certificate.to_dict() if self.certificate is not None else None
            ),
        }


# =============================================================================
# Evaluation
# =============================================================================


def eval_objective(p: ProblemInstance, z: npt.ArrayLike) -> float:
    """``1/2 z^T H z + q^T z``."""
    x = as_vector(z, p.n, "z")
    return float(0.5 * x @ p.H @ x + p.q @ x)


def eval_residual(p: ProblemInstance, z: npt.ArrayLike) -> FloatArray:
    """``A z - b``."""
    x = as_vector(z, p.n, "z")
    return p.A @ x - p.b


def eval_aug_lagrangian(
    p: ProblemInstance, par: AugmentedLagrangianParams, z: npt.ArrayLike
) -> float:
    par.check(p)
    r = eval_residual(p, z)
    penalty = 0.5 * par.rho * float(r @ r)
    return eval_objective(p, z) + float(par.multiplier @ r) + penalty


def eval_aug_lagrangian_gradient(
    p: ProblemInstance, par: AugmentedLagrangianParams, z: npt.ArrayLike
) -> FloatArray:
    """``H z + q + A^T (lam + rho (A z - b))``."""
    par.check(p)
    x = as_vector(z, p.n, "z")
    r = p.A @ x - p.b
    return p.H @ x + p.q + p.A.T @ (par.multiplier + par.rho * r)


def dual_function_value(
    p: ProblemInstance,
    par: AugmentedLagrangianParams,
    tol: float,
    max_iters: int | None = None,
) -> float:
    """``L_rho(z_bar, lam)`` with a certified gap to ``d_rho(lam)`` of at most tol**2.

    Raises ``InnerSolverError`` when the inner iteration cap is exceeded.
    """
    from .inner_solver import CriterionKind, StoppingCriterion, solve_inner

    if not tol > 0.0:
        msg = f"tol must be positive, got {tol}"
        raise ValueError(msg)
    crit = StoppingCriterion(CriterionKind.FUNCTION_GAP, tol)
    sol = solve_inner(p, par, crit, p.box.midpoint, max_iters)
    return sol.approx_dual_value
