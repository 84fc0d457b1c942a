"""Tests for run configuration validation and environment overrides."""

from __future__ import annotations

import pytest
from core.config import Command, RunConfig, SchemeChoice, threads_from_env
from core.problem import Scheme
from pydantic import ValidationError


def test_defaults_follow_protocol(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("AUGLAG_THREADS", raising=False)
    cfg = RunConfig(command=Command.BENCH)
    assert cfg.eps_out == 1e-3
    assert cfg.rho == 1.0
    assert cfg.certified
    assert cfg.threads == 1
    assert cfg.schemes == (Scheme.IDGM, Scheme.IDFGM)


def test_single_scheme_choice() -> None:
    assert SchemeChoice.IDFGM.schemes() == (Scheme.IDFGM,)


def test_threads_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("AUGLAG_THREADS", "4")
    assert threads_from_env() == 4
    assert RunConfig(command=Command.SWEEP).threads == 4


@pytest.mark.parametrize("raw", ["zero", "0", "-2"])
def test_bad_thread_count_rejected(monkeypatch: pytest.MonkeyPatch, raw: str) -> None:
    monkeypatch.setenv("AUGLAG_THREADS", raw)
    with pytest.raises(ValueError, match="AUGLAG_THREADS"):
        threads_from_env()


class TestValidation:
    def test_accuracy_must_be_positive(self) -> None:
        with pytest.raises(ValidationError):
            RunConfig(command=Command.SOLVE, eps_out=0.0)

    def test_penalty_must_be_positive(self) -> None:
        with pytest.raises(ValidationError):
            RunConfig(command=Command.SOLVE, rho=-1.0)

    def test_sizes_at_least_two(self) -> None:
        with pytest.raises(ValidationError, match="sizes"):
            RunConfig(command=Command.BENCH, sizes=[1, 4])

    def test_horizons_positive(self) -> None:
        with pytest.raises(ValidationError, match="horizons"):
            RunConfig(command=Command.MPC_BENCH, horizons=[0])

    def test_factors_positive(self) -> None:
        with pytest.raises(ValidationError, match="factors"):
            RunConfig(command=Command.SWEEP, eps_in_factors=[1.0, 0.0])

    def test_unknown_fields_rejected(self) -> None:
        with pytest.raises(ValidationError):
            RunConfig(command=Command.SOLVE, tolerance=1e-3)  # type: ignore[call-arg]

    def test_frozen(self) -> None:
        cfg = RunConfig(command=Command.SOLVE)
        with pytest.raises(ValidationError):
            cfg.rho = 2.0  # type: ignore[misc]
