"""Command-line front end.

Exit codes: 0 when every certified bound held, 2 when a bound violation was
detected, 1 on operational errors (bad input, solver or oracle failure, I/O).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from .benchmark_engine import BenchmarkRunner, BenchReport
from .certification import CertificationError, certify, inner_constants
from .config import Command, RunConfig, SchemeChoice
from .dual_schemes import run_scheme
from .geometry import as_vector
from .inner_solver import InnerSolverError
from .mpc_builder import build_problem, simulate_closed_loop
from .observability import get_observability, timed
from .problem import ProblemInstance, RunMode
from .problem_io import ProblemFileError, load_mpc_spec, load_problem
from .reference_oracle import (
    InfeasibleProblemError,
    OracleBudgetError,
    solve_reference,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2

OPERATIONAL_ERRORS = (
    ProblemFileError,
    CertificationError,
    InnerSolverError,
    InfeasibleProblemError,
    OracleBudgetError,
    ValueError,
    OSError,
)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        msg = f"expected comma-separated integers, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        msg = f"expected comma-separated numbers, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="auglag",
        description="Certified inexact augmented Lagrangian solvers for box QPs",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, schemes: list[str]) -> None:
        p.add_argument("--scheme", choices=schemes, default=schemes[-1])
        p.add_argument("--eps-out", type=float, default=1e-3)
        p.add_argument("--rho", type=float, default=1.0)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, default=None, help="Output file or dir")
        p.add_argument(
            "--lambda-bar",
            type=float,
            default=None,
            help="Dual Lipschitz estimate for the gradient scheme (>= 1/rho)",
        )

    single = ["idgm", "idfgm"]
    fleets = ["idgm", "idfgm", "both"]

    solve = sub.add_parser("solve", help="Solve a problem file")
    common(solve, single)
    solve.add_argument("--problem", type=Path, required=True)
    solve.add_argument("--r-d", type=float, default=None)
    mode = solve.add_mutually_exclusive_group()
    mode.add_argument("--certified", dest="certified", action="store_true")
    mode.add_argument("--measured", dest="certified", action="store_false")
    solve.set_defaults(certified=True)
    solve.add_argument("--eps-in", type=float, default=None, dest="eps_in_override")
    solve.add_argument("--adaptive-rho", action="store_true")

    cert = sub.add_parser("certify", help="Print certificates without solving")
    common(cert, fleets)
    source = cert.add_mutually_exclusive_group(required=True)
    source.add_argument("--problem", type=Path)
    source.add_argument("--spec", type=Path)
    cert.add_argument("--r-d", type=float, default=None)

    bench = sub.add_parser("bench", help="Random QP fleet")
    common(bench, fleets)
    bench.add_argument("--sizes", type=_int_list, default=[10, 20])
    bench.add_argument("--seeds", type=int, default=10)
    bench.add_argument("--adaptive-rho", action="store_true")

    mpc = sub.add_parser("mpc-bench", help="MPC fleet over horizons")
    common(mpc, fleets)
    mpc.add_argument("--spec", type=Path, default=None)
    mpc.add_argument("--horizons", type=_int_list, default=[5, 10])
    mpc.add_argument("--samples", type=int, default=50)

    sweep = sub.add_parser("sweep", help="Inner accuracy inflation probe")
    common(sweep, fleets)
    sweep.add_argument("--sizes", type=_int_list, default=[10])
    sweep.add_argument("--seeds", type=int, default=5)
    sweep.add_argument("--factors", type=_float_list, default=[1.0, 10.0, 100.0])

    sim = sub.add_parser("simulate", help="Closed-loop MPC simulation")
    common(sim, single)
    sim.add_argument("--spec", type=Path, required=True)
    sim.add_argument("--r-d", type=float, required=True)
    sim.add_argument("--steps", type=int, default=20)
    sim.add_argument("--x0", type=_float_list, default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict[str, Any] = {
        "command": Command(args.command),
        "scheme": SchemeChoice(args.scheme),
        "eps_out": args.eps_out,
        "rho": args.rho,
        "seed": args.seed,
        "output_path": args.out,
        "lambda_bar": args.lambda_bar,
    }
    optional = {
        "problem": "problem_path",
        "spec": "spec_path",
        "r_d": "r_d",
        "certified": "certified",
        "eps_in_override": "eps_in_override",
        "adaptive_rho": "adaptive_rho",
        "sizes": "sizes",
        "seeds": "seeds",
        "horizons": "horizons",
        "samples": "samples",
        "factors": "eps_in_factors",
        "steps": "steps",
    }
    for attr, key in optional.items():
        value = getattr(args, attr, None)
        if value is not None:
            values[key] = value
    return RunConfig(**values)


def _emit(payload: dict[str, Any], out: Path | None) -> None:
    text = json.dumps(payload, indent=2, default=str)
    print(text)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")


def _r_d_or_oracle(cfg: RunConfig, p: ProblemInstance) -> float:
    if cfg.r_d is not None:
        return cfg.r_d
    ref = solve_reference(p)
    get_observability().logger.warning(
        "no --r-d given; using the oracle multiplier norm",
        r_d=ref.dual_distance(),
    )
    return max(ref.dual_distance(), 1e-8)


@timed("command_seconds")
def cmd_solve(cfg: RunConfig) -> int:
    assert cfg.problem_path is not None
    p = load_problem(cfg.problem_path)
    scheme = cfg.schemes[0]
    mode = RunMode.CERTIFIED if cfg.certified else RunMode.MEASURED
    f_star: float | None = None
    lambda_star_norm: float | None = None
    if mode is RunMode.MEASURED or cfg.r_d is None:
        ref = solve_reference(p)
        f_star = ref.f_star
        lambda_star_norm = ref.dual_distance()
    R_d = cfg.r_d if cfg.r_d is not None else max(lambda_star_norm or 0.0, 1e-8)
    report = run_scheme(
        scheme,
        p,
        cfg.rho,
        cfg.eps_out,
        R_d,
        mode,
        L_bar=cfg.lambda_bar,
        f_star=f_star,
        lambda_star_norm=lambda_star_norm,
        eps_in_override=cfg.eps_in_override,
        adaptive_rho=cfg.adaptive_rho,
    )
    _emit(report.to_dict(), cfg.output_path)
    return EXIT_OK if report.bounds_hold else EXIT_VIOLATION


@timed("command_seconds")
def cmd_certify(cfg: RunConfig) -> int:
    dims = None
    if cfg.spec_path is not None:
        spec, x0 = load_mpc_spec(cfg.spec_path)
        p = build_problem(spec, np.zeros(spec.n_x) if x0 is None else x0)
        dims = spec.dims
    else:
        assert cfg.problem_path is not None
        p = load_problem(cfg.problem_path)
    R_d = _r_d_or_oracle(cfg, p)
    consts = inner_constants(p, cfg.rho)
    certificates = {
        scheme.value: certify(
            scheme, consts, cfg.eps_out, R_d, L_bar=cfg.lambda_bar, mpc_dims=dims
        ).to_dict()
        for scheme in cfg.schemes
    }
    _emit(certificates, cfg.output_path)
    return EXIT_OK


def _fleet_exit(report: BenchReport) -> int:
    log = get_observability().logger
    for violation in report.violations:
        log.error("bound violation", report.run_id, instance=violation)
    for error in report.errors:
        log.error("instance failed", report.run_id, error=error)
    summary = {
        "run_id": report.run_id,
        "rows": len(report.rows),
        "violations": list(report.violations),
        "errors": list(report.errors),
        "path": str(report.path) if report.path else None,
    }
    print(json.dumps(summary, indent=2))
    if report.violations:
        return EXIT_VIOLATION
    return EXIT_ERROR if report.errors else EXIT_OK


@timed("command_seconds")
def cmd_bench(cfg: RunConfig) -> int:
    return _fleet_exit(BenchmarkRunner(cfg).run_bench())


@timed("command_seconds")
def cmd_mpc_bench(cfg: RunConfig) -> int:
    spec = None if cfg.spec_path is None else load_mpc_spec(cfg.spec_path)[0]
    return _fleet_exit(BenchmarkRunner(cfg).run_mpc_bench(spec))


@timed("command_seconds")
def cmd_sweep(cfg: RunConfig) -> int:
    return _fleet_exit(BenchmarkRunner(cfg).run_sweep())


@timed("command_seconds")
def cmd_simulate(cfg: RunConfig, x0_arg: Sequence[float] | None) -> int:
    assert cfg.spec_path is not None and cfg.r_d is not None
    spec, x0 = load_mpc_spec(cfg.spec_path)
    if x0_arg is not None:
        x0 = as_vector(x0_arg, spec.n_x, "x0")
    if x0 is None:
        msg = "simulate needs an initial state (--x0 or x0 in the spec file)"
        raise ValueError(msg)
    result = simulate_closed_loop(
        spec,
        x0,
        cfg.steps,
        R_d=cfg.r_d,
        eps_out=cfg.eps_out,
        rho=cfg.rho,
        scheme=cfg.schemes[0],
    )
    header = ["step"]
    header += [f"x{i}" for i in range(spec.n_x)]
    header += [f"u{j}" for j in range(spec.n_u)]
    header += ["outer_iters", "inner_iters"]
    lines = []
    for step in range(cfg.steps):
        lines.append(
            [str(step)]
            + [f"{v:.17g}" for v in result.states[step]]
            + [f"{v:.17g}" for v in result.inputs[step]]
            + [str(result.outer_iters[step]), str(result.inner_iters[step])]
        )
    if cfg.output_path is None:
        writer = csv.writer(sys.stdout, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(lines)
    else:
        cfg.output_path.parent.mkdir(parents=True, exist_ok=True)
        with cfg.output_path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(lines)
    return EXIT_OK


COMMANDS: dict[Command, Callable[[RunConfig], int]] = {
    Command.SOLVE: cmd_solve,
    Command.CERTIFY: cmd_certify,
    Command.BENCH: cmd_bench,
    Command.MPC_BENCH: cmd_mpc_bench,
    Command.SWEEP: cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    log = get_observability().logger
    try:
        cfg = config_from_args(args)
        if cfg.command is Command.SIMULATE:
            return cmd_simulate(cfg, getattr(args, "x0", None))
        return COMMANDS[cfg.command](cfg)
    except OPERATIONAL_ERRORS as exc:
        log.error("command failed", command=args.command, error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
