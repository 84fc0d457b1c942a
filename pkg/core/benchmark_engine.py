"""Benchmark engine: random QP fleets, MPC fleets and inner-accuracy sweeps.

Every instance is certified twice (with a conservative dual radius and with the
oracle's ``||lambda*||``) and then solved in measured mode against the oracle
optimum. Rows are sorted before writing so identical configurations give
identical CSV bytes.
"""

from __future__ import annotations

import csv
import math
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, field, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .certification import (
    Certificate,
    CertificationError,
    MpcDims,
    certify,
    dual_radius_bound,
    inner_constants,
)
from .config import RunConfig
from .dual_schemes import run_scheme
from .geometry import BoxSet
from .inner_solver import InnerSolverError
from .mpc_builder import MpcSpec, build_problem, double_integrator_spec
from .observability import Observability, get_observability
from .problem import ProblemInstance, RunMode, RunStatus, Scheme
from .reference_oracle import (
    InfeasibleProblemError,
    OracleBudgetError,
    ReferenceSolution,
    inscribed_radius_lower_bound,
    slater_margin,
    solve_reference,
)

UTC = timezone.utc  # datetime.UTC alias, absent before Python 3.11

R_D_FLOOR = 1e-8
X0_ATTEMPTS = 100
X0_SCALE = 0.3


def _generate_run_id() -> str:
    return datetime.now(UTC).strftime("%Y%m%d-%H%M%S")


def _format(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


# =============================================================================
# Instance generation
# =============================================================================


def generate_random_qp(n: int, seed: int) -> ProblemInstance:
    """Seeded random QP with a rank-deficient Hessian over ``[-1, 1]^n``.

    ``H = G^T G`` with ``G`` of ``r`` rows, ``r`` uniform in
    ``[ceil(n/2), floor(0.9 n)]``; ``A`` has ``ceil(n/2)`` rows. ``b = A z0`` for
    ``z0`` uniform in ``[-1/2, 1/2]^n`` so the instance is always feasible.
    """
    if n < 2:
        msg = f"n must be at least 2, got {n}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    low = math.ceil(0.5 * n)
    high = max(low, math.floor(0.9 * n))
    r = int(rng.integers(low, high + 1))
    G = rng.standard_normal((r, n))
    H = G.T @ G
    H = 0.5 * (H + H.T)
    m = math.ceil(n / 2)
    A = rng.standard_normal((m, n))
    q = rng.standard_normal(n)
    z0 = rng.uniform(-0.5, 0.5, size=n)
    return ProblemInstance(H=H, q=q, A=A, b=A @ z0, box=BoxSet.uniform(n, -1.0, 1.0))


def feasible_initial_state(
    spec: MpcSpec, seed: int, attempts: int = X0_ATTEMPTS
) -> tuple[np.ndarray, ProblemInstance]:
    """Initial state drawn in a shrunk state box with a strictly feasible QP."""
    rng = np.random.default_rng(seed)
    center = spec.X.midpoint
    half = 0.5 * X0_SCALE * (spec.X.ub - spec.X.lb)
    for _ in range(attempts):
        x0 = rng.uniform(center - half, center + half)
        p = build_problem(spec, x0)
        try:
            if slater_margin(p) > 0.0:
                return x0, p
        except InfeasibleProblemError:
            continue
    msg = f"no strictly feasible initial state in {attempts} draws (seed {seed})"
    raise OracleBudgetError(msg)


# =============================================================================
# Rows
# =============================================================================

_ROW_EXTRAS = frozenset({"status", "failed_checks"})


@dataclass(frozen=True)
class BenchRow:
    """One CSV row: certified budgets next to measured outcomes."""

    seed: int
    n: int
    m: int
    horizon: int | None
    scheme: str
    rho: float
    eps_out: float
    eps_in: float
    k_out_theory: int | None
    k_out_cert: int
    k_out_real: int | None
    inner_iters_total: int
    infeas_final: float
    infeas_bound: float
    primal_gap: float | None
    primal_gap_bound: float
    primal_gap_lower_bound: float
    dual_gap: float | None
    dual_gap_bound: float
    flops_cert: int | None
    tightness: float | None
    status: str = field(default="", compare=False)
    failed_checks: tuple[str, ...] = field(default=(), compare=False)

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name not in _ROW_EXTRAS]

    def to_csv(self) -> list[str]:
        return [_format(getattr(self, name)) for name in self.columns()]

    @property
    def bounds_hold(self) -> bool:
        if self.failed_checks:
            return False
        checks = [(self.infeas_final, self.infeas_bound)]
        if self.primal_gap is not None:
            checks.append((self.primal_gap, self.primal_gap_bound))
            checks.append((self.primal_gap_lower_bound, self.primal_gap))
        if self.dual_gap is not None:
            checks.append((self.dual_gap, self.dual_gap_bound))
        return all(lhs <= rhs + 1e-8 for lhs, rhs in checks)

    def sort_key(self) -> tuple[int, int, int, str]:
        return (self.n, self.horizon or 0, self.seed, self.scheme)


@dataclass(frozen=True)
class SweepRow:
    """Measured run with an inflated inner accuracy."""

    seed: int
    n: int
    scheme: str
    eps_in_factor: float
    eps_in: float
    k_out_cert: int
    k_out_real: int | None
    status: str

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_csv(self) -> list[str]:
        return [_format(v) for v in astuple(self)]

    def sort_key(self) -> tuple[int, int, str, float]:
        return (self.n, self.seed, self.scheme, self.eps_in_factor)


def _violation_label(row: BenchRow) -> str:
    label = f"seed {row.seed} n {row.n} {row.scheme}"
    if row.failed_checks:
        label += " (" + ", ".join(row.failed_checks) + ")"
    return label


@dataclass(frozen=True)
class BenchReport:
    run_id: str
    rows: tuple[BenchRow, ...] | tuple[SweepRow, ...]
    violations: tuple[str, ...] = ()
    errors: tuple[str, ...] = ()
    path: Path | None = None
    duration_ms: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations and not self.errors


def write_csv(
    rows: Sequence[BenchRow] | Sequence[SweepRow],
    columns: list[str],
    path: Path,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(row.to_csv())
    return path


# =============================================================================
# Runner
# =============================================================================


@dataclass(frozen=True)
class BenchInstance:
    seed: int
    problem: ProblemInstance
    horizon: int | None = None
    mpc_dims: MpcDims | None = None


class BenchmarkRunner:
    """Runs benchmark fleets for a :class:`RunConfig`."""

    def __init__(
        self, cfg: RunConfig, observability: Observability | None = None
    ) -> None:
        self._cfg = cfg
        self._obs = observability or get_observability()

    @property
    def config(self) -> RunConfig:
        return self._cfg

    def _conservative_r_d(
        self, p: ProblemInstance, ref: ReferenceSolution
    ) -> float | None:
        if self._cfg.r_d is not None:
            return self._cfg.r_d
        r_bar = inscribed_radius_lower_bound(p)
        if r_bar <= 0.0:
            return None
        return max(dual_radius_bound(p, ref.z_star, r_bar), R_D_FLOOR)

    def _certificate(
        self, scheme: Scheme, p: ProblemInstance, R_d: float, dims: MpcDims | None
    ) -> Certificate:
        consts = inner_constants(p, self._cfg.rho)
        return certify(
            scheme,
            consts,
            self._cfg.eps_out,
            R_d,
            L_bar=self._cfg.lambda_bar,
            mpc_dims=dims,
        )

    def run_instance(self, inst: BenchInstance) -> list[BenchRow]:
        """Certify and solve one instance with every configured scheme."""
        cfg = self._cfg
        p = inst.problem
        ref = solve_reference(p, observability=self._obs)
        lam_norm = float(np.linalg.norm(ref.lambda_star))
        r_d_sampled = max(lam_norm, R_D_FLOOR)
        r_d_theory = self._conservative_r_d(p, ref)

        rows = []
        for scheme in cfg.schemes:
            start = time.perf_counter()
            cert = self._certificate(scheme, p, r_d_sampled, inst.mpc_dims)
            k_theory = None
            if r_d_theory is not None:
                k_theory = self._certificate(scheme, p, r_d_theory, None).k_out
            report = run_scheme(
                scheme,
                p,
                cfg.rho,
                cfg.eps_out,
                r_d_sampled,
                RunMode.MEASURED,
                L_bar=cfg.lambda_bar,
                f_star=ref.f_star,
                lambda_star_norm=lam_norm,
                adaptive_rho=cfg.adaptive_rho,
                observability=self._obs,
                run_id=f"{inst.seed}-{p.n}-{scheme.value}",
            )
            table = {row.name: row for row in report.bound_table}
            converged = report.status is RunStatus.CONVERGED
            flops = None
            if cert.flops_outer is not None:
                flops = cert.flops_outer * (cert.k_out + 1)
            row = BenchRow(
                seed=inst.seed,
                n=p.n,
                m=p.m,
                horizon=inst.horizon,
                scheme=scheme.value,
                rho=cfg.rho,
                eps_out=cfg.eps_out,
                eps_in=cert.eps_in,
                k_out_theory=k_theory,
                k_out_cert=cert.k_out,
                k_out_real=report.outer_iters if converged else None,
                inner_iters_total=report.inner_iters_total,
                infeas_final=report.infeasibility,
                infeas_bound=table["infeasibility"].certified,
                primal_gap=report.primal_gap,
                primal_gap_bound=table["primal_gap_upper"].certified,
                primal_gap_lower_bound=-table["primal_gap_lower"].certified,
                dual_gap=report.dual_gap,
                dual_gap_bound=table["dual_gap"].certified,
                flops_cert=flops,
                tightness=(
                    report.outer_iters / cert.k_out
                    if converged and cert.k_out > 0
                    else None
                ),
                status=report.status.value,
                failed_checks=tuple(check.name for check in report.violations()),
            )
            self._obs.record_bench_instance(
                scheme.value,
                inst.seed,
                p.n,
                row.bounds_hold,
                time.perf_counter() - start,
            )
            rows.append(row)
        return rows

    def _run_fleet(self, instances: Sequence[BenchInstance]) -> BenchReport:
        run_id = _generate_run_id()
        start = time.perf_counter()
        rows: list[BenchRow] = []
        errors: list[str] = []

        def guarded(inst: BenchInstance) -> list[BenchRow]:
            try:
                return self.run_instance(inst)
            except (
                InnerSolverError,
                OracleBudgetError,
                CertificationError,
                ValueError,
            ) as exc:
                msg = f"seed {inst.seed} n {inst.problem.n}: {exc}"
                self._obs.logger.error("bench instance failed", run_id, error=msg)
                errors.append(msg)
                return []

        with ThreadPoolExecutor(max_workers=self._cfg.threads) as pool:
            for result in pool.map(guarded, instances):
                rows.extend(result)
        rows.sort(key=BenchRow.sort_key)
        violations = tuple(_violation_label(r) for r in rows if not r.bounds_hold)
        return BenchReport(
            run_id=run_id,
            rows=tuple(rows),
            violations=violations,
            errors=tuple(sorted(errors)),
            duration_ms=(time.perf_counter() - start) * 1000,
        )

    def _finish(self, report: BenchReport, name: str) -> BenchReport:
        if self._cfg.output_path is None:
            return report
        columns = (
            SweepRow.columns()
            if report.rows and isinstance(report.rows[0], SweepRow)
            else BenchRow.columns()
        )
        path = write_csv(report.rows, columns, self._cfg.output_path / name)
        self._obs.logger.info("bench written", report.run_id, path=str(path))
        return replace(report, path=path)

    def run_bench(self) -> BenchReport:
        """Random QP fleet over ``sizes`` x ``seeds``."""
        cfg = self._cfg
        instances = [
            BenchInstance(seed=seed, problem=generate_random_qp(n, seed))
            for n in cfg.sizes
            for seed in range(cfg.seed, cfg.seed + cfg.seeds)
        ]
        return self._finish(self._run_fleet(instances), "bench.csv")

    def run_mpc_bench(self, spec: MpcSpec | None = None) -> BenchReport:
        """MPC fleet: ``samples`` random initial states per horizon."""
        cfg = self._cfg
        base = spec or double_integrator_spec()
        instances = []
        for N in cfg.horizons:
            spec_n = replace(base, N=N)
            for s in range(cfg.samples):
                _, p = feasible_initial_state(spec_n, cfg.seed + s)
                instances.append(
                    BenchInstance(
                        seed=cfg.seed + s,
                        problem=p,
                        horizon=N,
                        mpc_dims=spec_n.dims,
                    )
                )
        return self._finish(self._run_fleet(instances), "mpc_bench.csv")

    def run_sweep(self) -> BenchReport:
        """Measured runs with ``eps_in`` inflated by each factor, capped at 2 k_out."""
        cfg = self._cfg
        rows: list[SweepRow] = []
        errors: list[str] = []
        run_id = _generate_run_id()
        for n in cfg.sizes:
            for s in range(cfg.seeds):
                seed = cfg.seed + s
                p = generate_random_qp(n, seed)
                try:
                    ref = solve_reference(p, observability=self._obs)
                except (OracleBudgetError, InfeasibleProblemError) as exc:
                    errors.append(f"seed {seed} n {n}: {exc}")
                    continue
                lam_norm = float(np.linalg.norm(ref.lambda_star))
                r_d = max(lam_norm, R_D_FLOOR)
                for scheme in cfg.schemes:
                    cert = self._certificate(scheme, p, r_d, None)
                    for factor in cfg.eps_in_factors:
                        rows.append(
                            self._sweep_one(scheme, p, ref, cert, seed, factor)
                        )
        rows.sort(key=SweepRow.sort_key)
        report = BenchReport(run_id=run_id, rows=tuple(rows), errors=tuple(errors))
        return self._finish(report, "sweep.csv")

    def _sweep_one(
        self,
        scheme: Scheme,
        p: ProblemInstance,
        ref: ReferenceSolution,
        cert: Certificate,
        seed: int,
        factor: float,
    ) -> SweepRow:
        cfg = self._cfg
        eps_in = cert.eps_in * factor
        try:
            report = run_scheme(
                scheme,
                p,
                cfg.rho,
                cfg.eps_out,
                cert.R_d,
                RunMode.MEASURED,
                L_bar=cfg.lambda_bar,
                f_star=ref.f_star,
                eps_in_override=eps_in,
                max_outer=max(2 * cert.k_out, 1),
                observability=self._obs,
            )
        except InnerSolverError as exc:
            self._obs.logger.warning("sweep inner failure", error=str(exc))
            status, k_real = "inner_failure", None
        else:
            status = report.status.value
            converged = report.status is RunStatus.CONVERGED
            k_real = report.outer_iters if converged else None
        return SweepRow(
            seed=seed,
            n=p.n,
            scheme=scheme.value,
            eps_in_factor=factor,
            eps_in=eps_in,
            k_out_cert=cert.k_out,
            k_out_real=k_real,
            status=status,
        )


def run_bench(
    cfg: RunConfig, observability: Observability | None = None
) -> BenchReport:
    return BenchmarkRunner(cfg, observability).run_bench()


def run_mpc_bench(
    cfg: RunConfig,
    spec: MpcSpec | None = None,
    observability: Observability | None = None,
) -> BenchReport:
    return BenchmarkRunner(cfg, observability).run_mpc_bench(spec)


def run_sweep(
    cfg: RunConfig, observability: Observability | None = None
) -> BenchReport:
    return BenchmarkRunner(cfg, observability).run_sweep()

