"""Benchmark fleet tests on small, fast configurations."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import replace
from pathlib import Path
from typing import Any

import numpy as np
import pytest
from core import benchmark_engine
from core.benchmark_engine import (
    X0_SCALE,
    BenchmarkRunner,
    BenchRow,
    SweepRow,
    feasible_initial_state,
    generate_random_qp,
    run_bench,
)
from core.cli import EXIT_VIOLATION, main
from core.config import Command, RunConfig, SchemeChoice
from core.mpc_builder import double_integrator_spec
from core.observability import Observability
from core.problem import SolveReport
from core.reference_oracle import slater_margin


@pytest.fixture(autouse=True)
def _single_thread(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("AUGLAG_THREADS", raising=False)


def _bench_config(tmp_path: Path, **overrides: object) -> RunConfig:
    values: dict[str, object] = {
        "command": Command.BENCH,
        "scheme": SchemeChoice.IDFGM,
        "eps_out": 1e-2,
        "sizes": [4],
        "seeds": 2,
        "output_path": tmp_path,
    }
    values.update(overrides)
    return RunConfig(**values)


class TestInstanceGeneration:
    def test_random_qp_shapes(self) -> None:
        p = generate_random_qp(10, seed=3)
        assert (p.n, p.m) == (10, 5)
        rank = np.linalg.matrix_rank(p.H)
        assert 5 <= rank <= 9
        assert np.array_equal(p.box.lb, -np.ones(10))

    def test_random_qp_is_strictly_feasible(self) -> None:
        for seed in range(3):
            assert slater_margin(generate_random_qp(6, seed)) >= 0.5 - 1e-9

    def test_random_qp_is_seeded(self) -> None:
        assert np.array_equal(generate_random_qp(6, 1).H, generate_random_qp(6, 1).H)
        assert not np.array_equal(
            generate_random_qp(6, 1).q, generate_random_qp(6, 2).q
        )

    def test_random_qp_needs_two_variables(self) -> None:
        with pytest.raises(ValueError, match="at least 2"):
            generate_random_qp(1, seed=0)

    def test_initial_state_inside_shrunk_box(self) -> None:
        spec = double_integrator_spec(N=3)
        x0, p = feasible_initial_state(spec, seed=0)
        assert np.all(np.abs(x0) <= 0.5 * X0_SCALE * 10.0 + 1e-12)
        assert slater_margin(p) > 0.0


def test_bench_writes_sorted_csv(tmp_path: Path, obs: Observability) -> None:
    report = run_bench(_bench_config(tmp_path), observability=obs)
    assert report.errors == ()
    assert len(report.rows) == 2
    assert [row.seed for row in report.rows] == [0, 1]
    assert report.path == tmp_path / "bench.csv"

    with report.path.open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == BenchRow.columns()
    assert len(rows) == 3
    assert "status" not in rows[0]
    labels_ok = {"scheme": "idfgm", "status": "ok"}
    labels_bad = {"scheme": "idfgm", "status": "violation"}
    total = obs.metrics.get_counter(
        "bench_instances_total", labels_ok
    ) + obs.metrics.get_counter("bench_instances_total", labels_bad)
    assert total == 2


def test_bench_rows_carry_certified_budgets(tmp_path: Path) -> None:
    report = run_bench(_bench_config(tmp_path), observability=Observability("ERROR"))
    for row in report.rows:
        assert isinstance(row, BenchRow)
        assert row.k_out_cert >= 0
        assert 0.0 < row.eps_in < row.eps_out
        assert row.flops_cert is None
        if row.k_out_real is not None and row.k_out_cert > 0:
            assert row.tightness == pytest.approx(row.k_out_real / row.k_out_cert)


def test_identical_configurations_give_identical_bytes(tmp_path: Path) -> None:
    first = run_bench(
        _bench_config(tmp_path / "a"), observability=Observability("ERROR")
    )
    second = run_bench(
        _bench_config(tmp_path / "b"), observability=Observability("ERROR")
    )
    assert first.path is not None and second.path is not None
    assert first.path.read_bytes() == second.path.read_bytes()


def test_mpc_bench_fills_flop_budget(tmp_path: Path) -> None:
    cfg = _bench_config(
        tmp_path, command=Command.MPC_BENCH, horizons=[2], samples=2
    )
    runner = BenchmarkRunner(cfg, Observability("ERROR"))
    report = runner.run_mpc_bench(double_integrator_spec())
    assert report.errors == ()
    assert report.path == tmp_path / "mpc_bench.csv"
    assert [row.horizon for row in report.rows] == [2, 2]
    for row in report.rows:
        assert isinstance(row, BenchRow)
        assert (row.n, row.m) == (6, 4)
        assert row.flops_cert is not None and row.flops_cert > 0


def test_sweep_rows_cover_every_factor(tmp_path: Path) -> None:
    cfg = _bench_config(
        tmp_path, command=Command.SWEEP, seeds=1, eps_in_factors=[1.0, 100.0]
    )
    report = BenchmarkRunner(cfg, Observability("ERROR")).run_sweep()
    assert report.path == tmp_path / "sweep.csv"
    assert len(report.rows) == 2
    factors = [row.eps_in_factor for row in report.rows]
    assert factors == [1.0, 100.0]
    first, inflated = report.rows
    assert isinstance(first, SweepRow) and isinstance(inflated, SweepRow)
    assert inflated.eps_in == pytest.approx(100.0 * first.eps_in)
    for row in report.rows:
        assert row.status in {"converged", "not_converged", "inner_failure"}

    with report.path.open() as handle:
        header = next(csv.reader(handle))
    assert header == SweepRow.columns()


def test_bench_row_bound_check() -> None:
    row = BenchRow(
        seed=0,
        n=4,
        m=2,
        horizon=None,
        scheme="idgm",
        rho=1.0,
        eps_out=1e-3,
        eps_in=1e-4,
        k_out_theory=None,
        k_out_cert=10,
        k_out_real=5,
        inner_iters_total=50,
        infeas_final=1e-3,
        infeas_bound=2e-3,
        primal_gap=-1e-4,
        primal_gap_bound=1e-3,
        primal_gap_lower_bound=-1e-3,
        dual_gap=None,
        dual_gap_bound=math.inf,
        flops_cert=None,
        tightness=0.5,
    )
    assert row.bounds_hold
    assert row.to_csv()[3] == ""
    violated = BenchRow(**{**row.__dict__, "infeas_final": 1.0})
    assert not violated.bounds_hold
    undercut = BenchRow(**{**row.__dict__, "primal_gap": -1e-2})
    assert not undercut.bounds_hold
    flagged = BenchRow(**{**row.__dict__, "failed_checks": ("final_dual_gap",)})
    assert not flagged.bounds_hold
    assert "failed_checks" not in BenchRow.columns()
    assert len(row.to_csv()) == len(BenchRow.columns())


class TestLowerBoundViolation:
    """A primal gap below its certified lower bound must fail the fleet."""

    @pytest.fixture
    def undercut_runs(self, monkeypatch: pytest.MonkeyPatch) -> None:
        solve = benchmark_engine.run_scheme

        def undercut(*args: Any, **kwargs: Any) -> SolveReport:
            report = solve(*args, **kwargs)
            table = {row.name: row for row in report.bound_table}
            gap = -table["primal_gap_lower"].certified - 1.0
            measured = {"primal_gap_upper": gap, "primal_gap_lower": -gap}
            checks = tuple(
                replace(row, measured=measured.get(row.name, row.measured))
                for row in report.bound_table
            )
            return replace(report, primal_gap=gap, bound_table=checks)

        monkeypatch.setattr(benchmark_engine, "run_scheme", undercut)

    @pytest.mark.usefixtures("undercut_runs")
    def test_fleet_report_lists_violation(self, tmp_path: Path) -> None:
        report = BenchmarkRunner(_bench_config(tmp_path, seeds=1)).run_bench()
        assert report.errors == ()
        (violation,) = report.violations
        assert "primal_gap_lower" in violation
        (row,) = report.rows
        assert isinstance(row, BenchRow)
        assert row.primal_gap is not None
        assert row.primal_gap < row.primal_gap_lower_bound

    @pytest.mark.usefixtures("undercut_runs")
    def test_bench_command_exits_with_violation(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        fleet = ["--sizes", "4", "--seeds", "1", "--scheme", "idfgm"]
        code = main(["bench", *fleet, "--eps-out", "1e-2", "--out", str(tmp_path)])
        assert code == EXIT_VIOLATION
        summary = json.loads(capsys.readouterr().out)
        assert len(summary["violations"]) == 1
