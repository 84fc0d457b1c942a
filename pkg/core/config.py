"""Run configuration shared by the command line and the benchmark engine."""

from __future__ import annotations

import os
from enum import Enum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .problem import Scheme

THREADS_ENV = "AUGLAG_THREADS"


class Command(str, Enum):
    SOLVE = "solve"
    CERTIFY = "certify"
    BENCH = "bench"
    MPC_BENCH = "mpc-bench"
    SWEEP = "sweep"
    SIMULATE = "simulate"


class SchemeChoice(str, Enum):
    IDGM = "idgm"
    IDFGM = "idfgm"
    BOTH = "both"

    def schemes(self) -> tuple[Scheme, ...]:
        if self is SchemeChoice.BOTH:
            return (Scheme.IDGM, Scheme.IDFGM)
        return (Scheme(self.value),)


def threads_from_env() -> int:
    """``AUGLAG_THREADS`` as a positive int, 1 when unset."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return 1
    try:
        value = int(raw)
    except ValueError as exc:
        msg = f"{THREADS_ENV} must be a positive integer, got {raw!r}"
        raise ValueError(msg) from exc
    if value < 1:
        msg = f"{THREADS_ENV} must be a positive integer, got {raw!r}"
        raise ValueError(msg)
    return value


class RunConfig(BaseModel):
    """Validated settings for one CLI command.

    Defaults follow the experimental protocol: ``eps_out = 1e-3``, ``rho = 1`` and
    ``lambda_0 = 0``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Command
    scheme: SchemeChoice = SchemeChoice.BOTH
    eps_out: float = Field(gt=0.0, default=1e-3)
    rho: float = Field(gt=0.0, default=1.0)
    seed: int = 0
    seeds: int = Field(ge=1, default=10)
    sizes: list[int] = Field(default_factory=lambda: [10, 20])
    horizons: list[int] = Field(default_factory=lambda: [5, 10])
    samples: int = Field(ge=1, default=50)
    steps: int = Field(ge=0, default=20)
    output_path: Path | None = None
    problem_path: Path | None = None
    spec_path: Path | None = None
    certified: bool = True
    r_d: float | None = Field(gt=0.0, default=None)
    lambda_bar: float | None = Field(gt=0.0, default=None)
    eps_in_override: float | None = Field(gt=0.0, default=None)
    eps_in_factors: list[float] = Field(default_factory=lambda: [1.0, 10.0, 100.0])
    adaptive_rho: bool = False
    threads: int = Field(ge=1, default_factory=threads_from_env)

    @field_validator("sizes")
    @classmethod
    def _sizes_at_least_two(cls, value: list[int]) -> list[int]:
        if not value or any(n < 2 for n in value):
            msg = f"sizes must be non-empty and at least 2, got {value}"
            raise ValueError(msg)
        return value

    @field_validator("horizons")
    @classmethod
    def _horizons_positive(cls, value: list[int]) -> list[int]:
        if not value or any(n < 1 for n in value):
            msg = f"horizons must be non-empty and positive, got {value}"
            raise ValueError(msg)
        return value

    @field_validator("eps_in_factors")
    @classmethod
    def _factors_positive(cls, value: list[float]) -> list[float]:
        if not value or any(f <= 0.0 for f in value):
            msg = f"eps_in factors must be non-empty and positive, got {value}"
            raise ValueError(msg)
        return value

    @property
    def schemes(self) -> tuple[Scheme, ...]:
        return self.scheme.schemes()
