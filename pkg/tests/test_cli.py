"""Command-line tests driving ``main`` with fixture files."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest
from core.cli import EXIT_ERROR, EXIT_OK, build_parser, config_from_args, main
from core.config import Command, SchemeChoice
from core.observability import get_observability

PROBLEMS = Path("tests/fixtures/problems")
SPECS = Path("tests/fixtures/specs")
ANALYTIC = str(PROBLEMS / "analytic_two_var.json")
DOUBLE_INTEGRATOR = str(SPECS / "double_integrator.json")


@pytest.fixture(autouse=True)
def _single_thread(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("AUGLAG_THREADS", raising=False)


class TestCertify:
    def test_problem_file_both_schemes(
        self, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code = main(["certify", "--problem", ANALYTIC, "--r-d", "1"])
        assert code == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert set(data) == {"idgm", "idfgm"}
        assert data["idfgm"]["k_out"] == 63
        assert data["idgm"]["k_out"] == 1000

    def test_spec_file_reports_flops(self, capsys: pytest.CaptureFixture[str]) -> None:
        code = main(
            ["certify", "--spec", DOUBLE_INTEGRATOR, "--r-d", "1", "--scheme", "idgm"]
        )
        assert code == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data["idgm"]["flops_inner"] == 92
        assert data["idgm"]["flops_outer"] > 0

    def test_missing_radius_falls_back_to_oracle(
        self, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code = main(["certify", "--problem", ANALYTIC])
        assert code == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data["idfgm"]["R_d"] == pytest.approx(0.5)
        warnings = get_observability().logger.get_recent("WARNING")
        assert any("oracle" in entry.message for entry in warnings)


class TestSolve:
    def test_certified_run_writes_report(
        self, tmp_path: Path, capsys: pytest.CaptureFixture[str]
    ) -> None:
        out = tmp_path / "report.json"
        code = main(
            ["solve", "--problem", ANALYTIC, "--r-d", "0.5", "--out", str(out)]
        )
        assert code == EXIT_OK
        printed = json.loads(capsys.readouterr().out)
        saved = json.loads(out.read_text())
        assert printed == saved
        assert saved["status"] == "certified"
        assert saved["scheme"] == "idfgm"
        assert saved["outer_iters"] == saved["certificate"]["k_out"]
        assert all(row["holds"] for row in saved["bound_table"])

    def test_measured_run_converges(self, capsys: pytest.CaptureFixture[str]) -> None:
        code = main(
            ["solve", "--problem", ANALYTIC, "--measured", "--scheme", "idgm"]
        )
        assert code == EXIT_OK
        data = json.loads(capsys.readouterr().out)
        assert data["status"] == "converged"
        assert abs(data["primal_gap"]) <= 1e-3

    def test_malformed_file_is_an_operational_error(
        self, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code = main(["solve", "--problem", str(PROBLEMS / "bad_shape.json")])
        assert code == EXIT_ERROR
        assert "error:" in capsys.readouterr().err

    def test_infeasible_problem_is_an_operational_error(
        self, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code = main(["solve", "--problem", str(PROBLEMS / "infeasible_two_var.json")])
        assert code == EXIT_ERROR
        assert "empty" in capsys.readouterr().err

    def test_certified_override_refused(
        self, capsys: pytest.CaptureFixture[str]
    ) -> None:
        code = main(
            ["solve", "--problem", ANALYTIC, "--r-d", "0.5", "--eps-in", "1e-2"]
        )
        assert code == EXIT_ERROR
        assert "override" in capsys.readouterr().err

    def test_missing_file(self, tmp_path: Path) -> None:
        assert main(["solve", "--problem", str(tmp_path / "nope.json")]) == EXIT_ERROR

    def test_commands_are_timed(self) -> None:
        main(["solve", "--problem", ANALYTIC, "--r-d", "0.5"])
        assert get_observability().metrics.get_histogram("command_seconds")


def test_simulate_writes_trajectory_csv(tmp_path: Path) -> None:
    out = tmp_path / "sim.csv"
    code = main(
        ["simulate", "--spec", DOUBLE_INTEGRATOR, "--r-d", "5", "--eps-out", "1e-2"]
        + ["--steps", "2", "--out", str(out)]
    )
    assert code == EXIT_OK
    with out.open() as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["step", "x0", "x1", "u0", "outer_iters", "inner_iters"]
    assert [row[0] for row in rows[1:]] == ["0", "1"]
    assert float(rows[1][1]) == 1.0


def test_bench_summary(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    fleet = ["--sizes", "4", "--seeds", "1", "--scheme", "idfgm", "--eps-out", "1e-2"]
    code = main(["bench", *fleet, "--out", str(tmp_path)])
    summary = json.loads(capsys.readouterr().out)
    assert code == EXIT_OK
    assert summary["rows"] == 1
    assert summary["violations"] == []
    assert (tmp_path / "bench.csv").exists()


class TestParser:
    def test_sweep_factors_map_to_config(self) -> None:
        args = build_parser().parse_args(
            ["sweep", "--factors", "1,5", "--sizes", "4,6", "--scheme", "idgm"]
        )
        cfg = config_from_args(args)
        assert cfg.command is Command.SWEEP
        assert cfg.scheme is SchemeChoice.IDGM
        assert cfg.eps_in_factors == [1.0, 5.0]
        assert cfg.sizes == [4, 6]

    def test_solve_defaults(self) -> None:
        args = build_parser().parse_args(["solve", "--problem", "x.json"])
        cfg = config_from_args(args)
        assert cfg.certified
        assert cfg.scheme is SchemeChoice.IDFGM
        assert cfg.problem_path == Path("x.json")
        assert cfg.r_d is None

    def test_mode_flags_exclusive(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args(
                ["solve", "--problem", "x.json", "--certified", "--measured"]
            )

    def test_bad_integer_list(self) -> None:
        with pytest.raises(SystemExit):
            build_parser().parse_args(["bench", "--sizes", "a,b"])

    def test_invalid_config_is_an_operational_error(self) -> None:
        assert main(["bench", "--sizes", "1"]) == EXIT_ERROR
