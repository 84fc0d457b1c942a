"""Certified inexact augmented Lagrangian solvers for box-constrained QPs."""

from .certification import (
    Certificate,
    CertificationError,
    FinalGuarantees,
    MpcDims,
    certify,
    certify_idfgm,
    certify_idgm,
    dual_radius_bound,
    final_guarantees,
    flop_budget,
    inner_constants,
)
from .config import Command, RunConfig, SchemeChoice
from .dual_schemes import (
    BoundConstants,
    per_iteration_bounds,
    run_idfgm,
    run_idgm,
    run_scheme,
    theta_sequence,
)
from .geometry import (
    BoxSet,
    DimensionMismatchError,
    OutsideBoxError,
    diameter,
    normal_cone_distance,
    project,
    support_function,
)
from .inner_solver import (
    CriterionKind,
    InnerConstants,
    InnerSolution,
    InnerSolverError,
    StoppingCriterion,
    check_criterion,
    inner_iteration_bound,
    solve_inner,
)
from .mpc_builder import (
    LtiModel,
    MpcSpec,
    build_problem,
    double_integrator_spec,
    simulate_closed_loop,
)
from .problem import (
    AugmentedLagrangianParams,
    BoundCheck,
    ProblemInstance,
    RunMode,
    RunStatus,
    Scheme,
    SolveReport,
    dual_function_value,
    eval_aug_lagrangian,
    eval_objective,
    eval_residual,
)
from .problem_io import ProblemFileError, load_mpc_spec, load_problem
from .reference_oracle import (
    InfeasibleProblemError,
    OracleBudgetError,
    ReferenceSolution,
    solve_reference,
)

__all__ = [
    "AugmentedLagrangianParams",
    "BoundCheck",
    "BoundConstants",
    "BoxSet",
    "Certificate",
    "CertificationError",
    "Command",
    "CriterionKind",
    "DimensionMismatchError",
    "FinalGuarantees",
    "InfeasibleProblemError",
    "InnerConstants",
    "InnerSolution",
    "InnerSolverError",
    "LtiModel",
    "MpcDims",
    "MpcSpec",
    "OracleBudgetError",
    "OutsideBoxError",
    "ProblemFileError",
    "ProblemInstance",
    "ReferenceSolution",
    "RunConfig",
    "RunMode",
    "RunStatus",
    "Scheme",
    "SchemeChoice",
    "SolveReport",
    "StoppingCriterion",
    "build_problem",
    "certify",
    "certify_idfgm",
    "certify_idgm",
    "check_criterion",
    "diameter",
    "double_integrator_spec",
    "dual_function_value",
    "dual_radius_bound",
    "eval_aug_lagrangian",
    "eval_objective",
    "eval_residual",
    "final_guarantees",
    "flop_budget",
    "inner_constants",
    "inner_iteration_bound",
    "load_mpc_spec",
    "load_problem",
    "normal_cone_distance",
    "per_iteration_bounds",
    "project",
    "run_idfgm",
    "run_idgm",
    "run_scheme",
    "simulate_closed_loop",
    "solve_inner",
    "solve_reference",
    "support_function",
    "theta_sequence",
]
