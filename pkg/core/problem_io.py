"""JSON problem and MPC spec files.

Matrices are stored row-major as nested lists, boxes as ``{"lb": [...], "ub": [...]}``
pairs. The MPC variable ordering on the wire is states first, then inputs.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .geometry import BoxSet
from .mpc_builder import LtiModel, MpcSpec
from .problem import ProblemInstance


class ProblemFileError(ValueError):
    """Raised when a problem or spec file cannot be read or validated."""


def _shape(rows: list[list[float]]) -> tuple[int, int]:
    width = len(rows[0]) if rows else 0
    if any(len(row) != width for row in rows):
        msg = "matrix rows have different lengths"
        raise ValueError(msg)
    return len(rows), width


class BoxModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lb: list[float]
    ub: list[float]

    @model_validator(mode="after")
    def _same_length(self) -> BoxModel:
        if len(self.lb) != len(self.ub):
            msg = f"lb has {len(self.lb)} entries but ub has {len(self.ub)}"
            raise ValueError(msg)
        return self

    def to_box(self) -> BoxSet:
        return BoxSet(np.array(self.lb), np.array(self.ub))

    @classmethod
    def from_box(cls, box: BoxSet) -> BoxModel:
        return cls(lb=box.lb.tolist(), ub=box.ub.tolist())


class ProblemFile(BaseModel):
    """``min 1/2 z^T H z + q^T z  s.t.  A z = b,  lb <= z <= ub``."""

    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1)
    m: int = Field(ge=1)
    H: list[list[float]]
    q: list[float]
    A: list[list[float]]
    b: list[float]
    lb: list[float]
    ub: list[float]

    @model_validator(mode="after")
    def _dimensions(self) -> ProblemFile:
        n, m = self.n, self.m
        if _shape(self.H) != (n, n):
            msg = f"H must be {n}x{n}, got {_shape(self.H)}"
            raise ValueError(msg)
        if _shape(self.A) != (m, n):
            msg = f"A must be {m}x{n}, got {_shape(self.A)}"
            raise ValueError(msg)
        for name, vec, size in (
            ("q", self.q, n),
            ("b", self.b, m),
            ("lb", self.lb, n),
            ("ub", self.ub, n),
        ):
            if len(vec) != size:
                msg = f"{name} must have {size} entries, got {len(vec)}"
                raise ValueError(msg)
        return self

    def to_problem(self) -> ProblemInstance:
        return ProblemInstance(
            H=np.array(self.H),
            q=np.array(self.q),
            A=np.array(self.A),
            b=np.array(self.b),
            box=BoxSet(np.array(self.lb), np.array(self.ub)),
        )

    @classmethod
    def from_problem(cls, p: ProblemInstance) -> ProblemFile:
        return cls(
            n=p.n,
            m=p.m,
            H=p.H.tolist(),
            q=p.q.tolist(),
            A=p.A.tolist(),
            b=p.b.tolist(),
            lb=p.box.lb.tolist(),
            ub=p.box.ub.tolist(),
        )


class MpcSpecFile(BaseModel):
    """Dynamics, weights and boxes of an MPC problem, optionally with ``x0``."""

    model_config = ConfigDict(extra="forbid")

    A_x: list[list[float]]
    B_u: list[list[float]]
    N: int = Field(ge=1)
    Q: list[list[float]]
    R: list[list[float]]
    P: list[list[float]] | None = None
    X: BoxModel
    X_f: BoxModel | None = None
    U: BoxModel
    x0: list[float] | None = None

    @model_validator(mode="after")
    def _dimensions(self) -> MpcSpecFile:
        n_x, n_x2 = _shape(self.A_x)
        if n_x != n_x2:
            msg = f"A_x must be square, got {n_x}x{n_x2}"
            raise ValueError(msg)
        rows, n_u = _shape(self.B_u)
        if rows != n_x:
            msg = f"B_u must have {n_x} rows, got {rows}"
            raise ValueError(msg)
        if self.x0 is not None and len(self.x0) != n_x:
            msg = f"x0 must have {n_x} entries, got {len(self.x0)}"
            raise ValueError(msg)
        if len(self.U.lb) != n_u:
            msg = f"U must have {n_u} coordinates, got {len(self.U.lb)}"
            raise ValueError(msg)
        return self

    def to_spec(self) -> MpcSpec:
        Q = np.array(self.Q)
        return MpcSpec(
            model=LtiModel(np.array(self.A_x), np.array(self.B_u)),
            N=self.N,
            Q=Q,
            R=np.array(self.R),
            P=Q if self.P is None else np.array(self.P),
            X=self.X.to_box(),
            X_f=None if self.X_f is None else self.X_f.to_box(),
            U=self.U.to_box(),
        )

    @classmethod
    def from_spec(cls, spec: MpcSpec, x0: list[float] | None = None) -> MpcSpecFile:
        return cls(
            A_x=spec.model.A_x.tolist(),
            B_u=spec.model.B_u.tolist(),
            N=spec.N,
            Q=spec.Q.tolist(),
            R=spec.R.tolist(),
            P=spec.P.tolist(),
            X=BoxModel.from_box(spec.X),
            X_f=BoxModel.from_box(spec.terminal_set),
            U=BoxModel.from_box(spec.U),
            x0=x0,
        )


def _read(path: Path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        msg = f"cannot read {path}: {exc}"
        raise ProblemFileError(msg) from exc
    except json.JSONDecodeError as exc:
        msg = f"{path} is not valid JSON: {exc}"
        raise ProblemFileError(msg) from exc


def load_problem(path: Path) -> ProblemInstance:
    data = _read(path)
    try:
        return ProblemFile.model_validate(data).to_problem()
    except ValidationError as exc:
        msg = f"invalid problem file {path}: {exc}"
        raise ProblemFileError(msg) from exc
    except ValueError as exc:
        msg = f"problem in {path} is not admissible: {exc}"
        raise ProblemFileError(msg) from exc


def save_problem(p: ProblemInstance, path: Path) -> Path:
    path = Path(path)
    path.write_text(ProblemFile.from_problem(p).model_dump_json(indent=2))
    return path


def load_mpc_spec(path: Path) -> tuple[MpcSpec, np.ndarray | None]:
    """Spec and the optional initial state stored with it."""
    data = _read(path)
    try:
        parsed = MpcSpecFile.model_validate(data)
        spec = parsed.to_spec()
    except ValidationError as exc:
        msg = f"invalid spec file {path}: {exc}"
        raise ProblemFileError(msg) from exc
    except ValueError as exc:
        msg = f"spec in {path} is not admissible: {exc}"
        raise ProblemFileError(msg) from exc
    x0 = None if parsed.x0 is None else np.array(parsed.x0)
    return spec, x0


def save_mpc_spec(
    spec: MpcSpec, path: Path, x0: list[float] | None = None
) -> Path:
    path = Path(path)
    path.write_text(MpcSpecFile.from_spec(spec, x0).model_dump_json(indent=2))
    return path
