"""Box-set primitives used by the inner solver and its stopping criteria.

Provides:
- Projection onto a box (coordinatewise clamp)
- Euclidean diameter and support function
- Distance from zero to ``g + N_Z(z)`` for a box, solved per active bound
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

FloatArray = npt.NDArray[np.float64]

DEFAULT_ACTIVE_TOL = 1e-9


class DimensionMismatchError(ValueError):
    """Raised when a vector or matrix does not have the expected shape."""


class OutsideBoxError(ValueError):
    """Raised when a point lies outside a box by more than the active tolerance."""


def as_vector(
    values: npt.ArrayLike, n: int | None = None, name: str = "vector"
) -> FloatArray:
    """Convert to a 1-D float array, optionally checking its length."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        msg = f"{name} must be one-dimensional, got shape {arr.shape}"
        raise DimensionMismatchError(msg)
    if n is not None and arr.shape[0] != n:
        msg = f"{name} has length {arr.shape[0]}, expected {n}"
        raise DimensionMismatchError(msg)
    return arr


def frozen(arr: FloatArray) -> FloatArray:
    """Return a read-only copy."""
    out = np.array(arr, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box ``{z : lb <= z <= ub}`` with finite bounds."""

    lb: FloatArray
    ub: FloatArray

    def __post_init__(self) -> None:
        lb = as_vector(self.lb, name="lb")
        ub = as_vector(self.ub, n=lb.shape[0], name="ub")
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            msg = "box bounds must be finite"
            raise ValueError(msg)
        if np.any(lb > ub):
            bad = int(np.argmax(lb > ub))
            msg = f"lower bound exceeds upper bound at coordinate {bad}"
            raise ValueError(msg)
        object.__setattr__(self, "lb", frozen(lb))
        object.__setattr__(self, "ub", frozen(ub))

    @property
    def n(self) -> int:
        return int(self.lb.shape[0])

    @property
    def midpoint(self) -> FloatArray:
        return 0.5 * (self.lb + self.ub)

    def contains(self, z: npt.ArrayLike, tol: float = 0.0) -> bool:
        arr = as_vector(z, self.n, "z")
        return bool(np.all(arr >= self.lb - tol) and np.all(arr <= self.ub + tol))

    @classmethod
    def uniform(cls, n: int, lower: float, upper: float) -> BoxSet:
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    @classmethod
    def product(cls, *boxes: BoxSet) -> BoxSet:
        """Cartesian product, coordinates concatenated in argument order."""
        if not boxes:
            msg = "product needs at least one box"
            raise ValueError(msg)
        return cls(
            np.concatenate([b.lb for b in boxes]),
            np.concatenate([b.ub for b in boxes]),
        )


@dataclass(frozen=True)
class NormalConeDistanceResult:
    """Outcome of ``min_{mu >= 0} ||g + C^T mu||`` over the active bound rows.

    Rows of ``C`` are ``+e_i`` for coordinates at their upper bound and ``-e_i``
    for coordinates at their lower bound, ordered by coordinate with the upper
    row first when both bounds are active. ``projection_ops`` counts the scalar
    clamps performed, one per active row.
    """

    distance: float
    active_count: int
    multiplier: FloatArray
    active_rows: tuple[tuple[int, int], ...]
    projection_ops: int


def project(box: BoxSet, z: npt.ArrayLike) -> FloatArray:
    """Euclidean projection onto the box."""
    arr = as_vector(z, box.n, "z")
    return np.clip(arr, box.lb, box.ub)


def diameter(box: BoxSet) -> float:
    return float(np.linalg.norm(box.ub - box.lb))


def support_function(box: BoxSet, y: npt.ArrayLike) -> float:
    """``sup_{z in box} <y, z>``."""
    arr = as_vector(y, box.n, "y")
    return float(np.sum(np.where(arr > 0.0, arr * box.ub, arr * box.lb)))


def _active_masks(
    box: BoxSet, z: FloatArray, active_tol: float
) -> tuple[npt.NDArray[np.bool_], npt.NDArray[np.bool_]]:
    if np.any(z < box.lb - active_tol) or np.any(z > box.ub + active_tol):
        worst = float(max(np.max(box.lb - z), np.max(z - box.ub)))
        msg = f"z_bar lies outside the box by {worst:.3e} (tol {active_tol:.1e})"
        raise OutsideBoxError(msg)
    return z >= box.ub - active_tol, z <= box.lb + active_tol


def active_rows(
    box: BoxSet, z_bar: npt.ArrayLike, active_tol: float = DEFAULT_ACTIVE_TOL
) -> tuple[tuple[int, int], ...]:
    """Active bound rows as ``(coordinate, sign)`` pairs, +1 upper and -1 lower."""
    z = as_vector(z_bar, box.n, "z_bar")
    at_upper, at_lower = _active_masks(box, z, active_tol)
    rows: list[tuple[int, int]] = []
    for i in np.flatnonzero(at_upper | at_lower):
        if at_upper[i]:
            rows.append((int(i), 1))
        if at_lower[i]:
            rows.append((int(i), -1))
    return tuple(rows)


def normal_cone_residual(
    box: BoxSet,
    z_bar: npt.ArrayLike,
    g: npt.ArrayLike,
    active_tol: float = DEFAULT_ACTIVE_TOL,
) -> FloatArray:
    """Minimum-norm element of ``g + N_Z(z_bar)``.

    The problem separates over coordinates: an upper-active row leaves
    ``max(g_i, 0)``, a lower-active row leaves ``min(g_i, 0)``, a coordinate with
    both bounds active leaves nothing, and inactive coordinates keep ``g_i``.
    """
    grad = as_vector(g, box.n, "g")
    z = as_vector(z_bar, box.n, "z_bar")
    at_upper, at_lower = _active_masks(box, z, active_tol)
    residual = grad.copy()
    residual[at_upper] = np.maximum(grad[at_upper], 0.0)
    residual[at_lower] = np.minimum(grad[at_lower], 0.0)
    residual[at_upper & at_lower] = 0.0
    return residual


def normal_cone_distance(
    box: BoxSet,
    z_bar: npt.ArrayLike,
    g: npt.ArrayLike,
    active_tol: float = DEFAULT_ACTIVE_TOL,
) -> NormalConeDistanceResult:
    """Distance from the origin to ``g + N_Z(z_bar)`` with its optimal multiplier."""
    grad = as_vector(g, box.n, "g")
    rows = active_rows(box, z_bar, active_tol)
    residual = normal_cone_residual(box, z_bar, grad, active_tol)
    multiplier = np.array(
        [max(-sign * grad[i], 0.0) for i, sign in rows], dtype=np.float64
    )
    return NormalConeDistanceResult(
        distance=float(np.linalg.norm(residual)),
        active_count=len(rows),
        multiplier=multiplier,
        active_rows=rows,
        projection_ops=len(rows),
    )
