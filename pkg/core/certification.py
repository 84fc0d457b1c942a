"""A-priori certification of the dual schemes.

Every closed-form constant a run depends on is computed here: curvature of the
augmented Lagrangian, the inner/outer accuracy pairing for each scheme, outer and
inner iteration budgets, flop budgets for MPC instances and the dual radius bound.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

from .geometry import as_vector, support_function
from .inner_solver import CriterionKind, InnerConstants, criterion_threshold
from .problem import ProblemInstance, Scheme


class CertificationError(RuntimeError):
    """Raised when a certificate cannot be produced or would be invalidated."""


@dataclass(frozen=True)
class MpcDims:
    """Horizon and state/input sizes used by the flop budgets."""

    N: int
    n_x: int
    n_u: int

    def __post_init__(self) -> None:
        if self.N < 1 or self.n_x < 1 or self.n_u < 1:
            msg = f"MPC dimensions must be positive, got {self}"
            raise ValueError(msg)


@dataclass(frozen=True)
class FinalGuarantees:
    """Closed-form guarantees at the certified outer budget."""

    dual_gap: float
    infeasibility: float
    primal_lower: float
    primal_upper: float


@dataclass(frozen=True)
class Certificate:
    """All constants and budgets of one certified run.

    ``inner_threshold`` is the accuracy actually handed to the inner solver for
    ``criterion``; it is derived from ``eps_in`` so that the variational gap of
    every inner solution stays below ``C_Z * eps_in``.
    """

    scheme: Scheme
    rho: float
    L_d: float
    L_bar: float
    L_p: float
    sigma_p: float
    R_p: float
    C_Z: float
    R_d: float
    eps_out: float
    eps_in: float
    inner_threshold: float
    criterion: CriterionKind
    k_out: int
    k_out_exact: float
    k_in: int | None
    flops_inner: int | None = None
    flops_outer: int | None = None
    lambda_0_norm: float = 0.0

    def __post_init__(self) -> None:
        if self.C_Z < 1.0:
            msg = f"C_Z must be at least 1, got {self.C_Z}"
            raise ValueError(msg)
        if not 0.0 < self.eps_in < self.eps_out:
            msg = f"need 0 < eps_in < eps_out, got {self.eps_in} and {self.eps_out}"
            raise ValueError(msg)
        if self.k_out < 0:
            msg = f"k_out must be non-negative, got {self.k_out}"
            raise ValueError(msg)

    @property
    def partial(self) -> bool:
        """True when the inner budget is unavailable (no strong convexity)."""
        return self.k_in is None

    @property
    def inner_constants(self) -> InnerConstants:
        return InnerConstants(self.L_p, self.sigma_p, self.R_p, self.rho)

    def rederive_eps_in(self) -> float:
        """Recompute ``eps_in`` from the stored budget and scheme."""
        if self.scheme is Scheme.IDGM:
            return self.eps_out / (2.0 * self.C_Z)
        return 3.0 * self.eps_out / (8.0 * self.C_Z * (self.k_out + 3))

    def guarantees(self, lambda_star_norm: float | None = None) -> FinalGuarantees:
        return final_guarantees(self, lambda_star_norm)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["scheme"] = self.scheme.value
        data["criterion"] = self.criterion.value
        data["partial"] = self.partial
        return data


# =============================================================================
# Constants
# =============================================================================


def inner_constants(
    p: ProblemInstance, rho: float, R_p: float | None = None
) -> InnerConstants:
    """Extremal eigenvalues of ``H + rho A^T A`` and the box diameter."""
    if not rho > 0.0:
        msg = f"rho must be positive, got {rho}"
        raise ValueError(msg)
    try:
        eigenvalues = np.linalg.eigvalsh(p.inner_hessian(rho))
    except np.linalg.LinAlgError as exc:
        msg = f"eigenvalue computation did not converge: {exc}"
        raise CertificationError(msg) from exc
    L_p = float(eigenvalues[-1])
    sigma_p = float(eigenvalues[0])
    if sigma_p < -1e-10 * max(L_p, 1.0):
        msg = f"H + rho A^T A is indefinite (lambda_min = {sigma_p:.3e})"
        raise CertificationError(msg)
    return InnerConstants(
        L_p=L_p,
        sigma_p=max(sigma_p, 0.0),
        R_p=p.diameter if R_p is None else float(R_p),
        rho=float(rho),
    )


def flop_budget(
    scheme: Scheme, N: int, n_x: int, n_u: int, k_in: int
) -> tuple[int, int]:
    """Flops of one inner iteration and of one outer iteration with ``k_in`` inner."""
    MpcDims(N, n_x, n_u)
    if k_in < 0:
        msg = f"k_in must be non-negative, got {k_in}"
        raise ValueError(msg)
    inner = N * (3 * n_x**2 + 2 * n_x * n_u + 2 * n_u**2 + 10 * n_x + 8 * n_u)
    update = 5 if scheme is Scheme.IDGM else 10
    outer = N * (2 * n_x**2 + 2 * n_x * n_u + update * n_x) + k_in * inner
    return inner, outer


def inner_budget_idgm(consts: InnerConstants, eps_out: float) -> int | None:
    """Inner iterations per outer step of the gradient scheme.

    None when the inner problem is not strongly convex.
    """
    if not consts.strongly_convex:
        return None
    arg = 3.0 * math.sqrt(consts.L_p) * consts.R_p * consts.C_Z / eps_out
    if arg <= 1.0:
        return 0
    return math.floor(2.0 * math.sqrt(consts.L_p / consts.sigma_p) * math.log(arg))


def inner_budget_idfgm(
    consts: InnerConstants, eps_out: float, R_d: float
) -> int | None:
    """Inner iterations per outer step of the fast scheme, or None."""
    if not consts.strongly_convex:
        return None
    arg = (
        5.0
        * math.sqrt(consts.L_d)
        * R_d
        * math.sqrt(consts.L_p)
        * consts.R_p
        * consts.C_Z
        / eps_out**1.5
    )
    if arg <= 1.0:
        return 0
    return math.floor(2.0 * math.sqrt(consts.L_p / consts.sigma_p) * math.log(arg))


def _check_inputs(eps_out: float, R_d: float) -> None:
    if not eps_out > 0.0:
        msg = f"eps_out must be positive, got {eps_out}"
        raise ValueError(msg)
    if not (R_d >= 0.0 and math.isfinite(R_d)):
        msg = f"R_d must be finite and non-negative, got {R_d}"
        raise ValueError(msg)


def _flops(
    scheme: Scheme, dims: MpcDims | None, k_in: int | None
) -> tuple[int | None, int | None]:
    if dims is None or k_in is None:
        return None, None
    return flop_budget(scheme, dims.N, dims.n_x, dims.n_u, k_in)


def certify_idgm(
    consts: InnerConstants,
    eps_out: float,
    R_d: float,
    *,
    L_bar: float | None = None,
    lambda_0_norm: float = 0.0,
    criterion: CriterionKind = CriterionKind.NORMAL_CONE_DISTANCE,
    mpc_dims: MpcDims | None = None,
) -> Certificate:
    """Certificate for the dual gradient scheme.

    ``k_out = floor(L_bar R_d^2 / eps_out)`` and ``eps_in = eps_out / (2 C_Z)``.
    """
    _check_inputs(eps_out, R_d)
    L_bar = consts.L_d if L_bar is None else float(L_bar)
    if L_bar < consts.L_d * (1.0 - 1e-12):
        msg = f"L_bar must be at least L_d = {consts.L_d}, got {L_bar}"
        raise ValueError(msg)
    k_exact = L_bar * R_d**2 / eps_out
    eps_in = eps_out / (2.0 * consts.C_Z)
    k_in = inner_budget_idgm(consts, eps_out)
    flops_inner, flops_outer = _flops(Scheme.IDGM, mpc_dims, k_in)
    return Certificate(
        scheme=Scheme.IDGM,
        rho=consts.rho,
        L_d=consts.L_d,
        L_bar=L_bar,
        L_p=consts.L_p,
        sigma_p=consts.sigma_p,
        R_p=consts.R_p,
        C_Z=consts.C_Z,
        R_d=float(R_d),
        eps_out=float(eps_out),
        eps_in=eps_in,
        inner_threshold=criterion_threshold(criterion, eps_in, consts),
        criterion=criterion,
        k_out=math.floor(k_exact),
        k_out_exact=k_exact,
        k_in=k_in,
        flops_inner=flops_inner,
        flops_outer=flops_outer,
        lambda_0_norm=float(lambda_0_norm),
    )


def certify_idfgm(
    consts: InnerConstants,
    eps_out: float,
    R_d: float,
    *,
    lambda_0_norm: float = 0.0,
    criterion: CriterionKind = CriterionKind.NORMAL_CONE_DISTANCE,
    mpc_dims: MpcDims | None = None,
) -> Certificate:
    """Certificate for the dual fast gradient scheme.

    ``k_out = floor(2 R_d sqrt(L_d / eps_out))`` and
    ``eps_in = 3 eps_out / (8 C_Z (k_out + 3))``.
    """
    _check_inputs(eps_out, R_d)
    k_exact = 2.0 * R_d * math.sqrt(consts.L_d / eps_out)
    k_out = math.floor(k_exact)
    eps_in = 3.0 * eps_out / (8.0 * consts.C_Z * (k_out + 3))
    k_in = inner_budget_idfgm(consts, eps_out, R_d)
    flops_inner, flops_outer = _flops(Scheme.IDFGM, mpc_dims, k_in)
    return Certificate(
        scheme=Scheme.IDFGM,
        rho=consts.rho,
        L_d=consts.L_d,
        L_bar=consts.L_d,
        L_p=consts.L_p,
        sigma_p=consts.sigma_p,
        R_p=consts.R_p,
        C_Z=consts.C_Z,
        R_d=float(R_d),
        eps_out=float(eps_out),
        eps_in=eps_in,
        inner_threshold=criterion_threshold(criterion, eps_in, consts),
        criterion=criterion,
        k_out=k_out,
        k_out_exact=k_exact,
        k_in=k_in,
        flops_inner=flops_inner,
        flops_outer=flops_outer,
        lambda_0_norm=float(lambda_0_norm),
    )


def certify(
    scheme: Scheme,
    consts: InnerConstants,
    eps_out: float,
    R_d: float,
    **kwargs: Any,
) -> Certificate:
    if scheme is Scheme.IDGM:
        return certify_idgm(consts, eps_out, R_d, **kwargs)
    kwargs.pop("L_bar", None)
    return certify_idfgm(consts, eps_out, R_d, **kwargs)


def final_guarantees(
    cert: Certificate, lambda_star_norm: float | None = None
) -> FinalGuarantees:
    """Guarantees at ``k_out``: dual gap, infeasibility and the primal bracket.

    ``lambda_star_norm`` defaults to ``||lambda_0|| + R_d``.
    """
    eps = cert.eps_out
    R_d = cert.R_d
    if lambda_star_norm is None:
        lambda_star_norm = cert.lambda_0_norm + R_d
    if R_d == 0.0:
        return FinalGuarantees(eps, math.inf, -math.inf, math.inf)
    infeasibility = 3.0 * eps / R_d
    slack = 9.0 * cert.rho * eps / (2.0 * R_d**2)
    lower = -(3.0 * lambda_star_norm / R_d + slack) * eps
    upper = (0.5 + cert.lambda_0_norm**2 / (2.0 * R_d**2)) * eps
    return FinalGuarantees(eps, infeasibility, lower, upper)


def dual_radius_bound(
    p: ProblemInstance, z_star_hint: npt.ArrayLike, r_bar: float
) -> float:
    """Upper bound on ``||lambda*||`` given a ball of radius ``r_bar`` in ``A Z - b``.

    Evaluates ``max_{z in Z} <grad f(z*), z - z*> / r_bar`` with the support
    function; ``grad f(z*) = H z* + q`` reduces to ``H z*`` for MPC problems.
    """
    if not r_bar > 0.0:
        msg = f"r_bar must be positive, got {r_bar}"
        raise ValueError(msg)
    z_star = as_vector(z_star_hint, p.n, "z_star_hint")
    if not p.box.contains(z_star, tol=1e-6):
        msg = "z_star_hint lies outside the box"
        raise ValueError(msg)
    grad = p.H @ z_star + p.q
    numerator = support_function(p.box, grad) - float(grad @ z_star)
    return max(numerator, 0.0) / r_bar
