"""Tests for box projection, support function and normal-cone distance."""

from __future__ import annotations

import math

import numpy as np
import pytest
from core.geometry import (
    BoxSet,
    DimensionMismatchError,
    OutsideBoxError,
    active_rows,
    diameter,
    normal_cone_distance,
    project,
    support_function,
)
from core.reference_oracle import box_constraints, polyhedral_normal_cone_distance


def _random_triple(
    rng: np.random.Generator, n: int
) -> tuple[BoxSet, np.ndarray, np.ndarray]:
    lb = rng.uniform(-2.0, 0.0, size=n)
    ub = lb + rng.uniform(0.5, 3.0, size=n)
    box = BoxSet(lb, ub)
    where = rng.integers(0, 3, size=n)
    z = np.where(where == 0, lb, np.where(where == 1, ub, 0.5 * (lb + ub)))
    g = rng.standard_normal(n)
    return box, z, g


class TestBoxSet:
    def test_rejects_inverted_bounds(self) -> None:
        """A lower bound above its upper bound is refused."""
        with pytest.raises(ValueError, match="coordinate 1"):
            BoxSet(np.array([0.0, 2.0]), np.array([1.0, 1.0]))

    def test_rejects_infinite_bounds(self) -> None:
        """Only compact boxes are supported."""
        with pytest.raises(ValueError, match="finite"):
            BoxSet(np.array([0.0]), np.array([math.inf]))

    def test_rejects_length_mismatch(self) -> None:
        with pytest.raises(DimensionMismatchError):
            BoxSet(np.zeros(2), np.ones(3))

    def test_bounds_are_read_only(self) -> None:
        box = BoxSet.uniform(2, -1.0, 1.0)
        with pytest.raises(ValueError):
            box.lb[0] = 5.0

    def test_product_concatenates_in_order(self) -> None:
        box = BoxSet.product(BoxSet.uniform(1, 0.0, 1.0), BoxSet.uniform(2, -3.0, 3.0))
        assert box.lb.tolist() == [0.0, -3.0, -3.0]
        assert box.ub.tolist() == [1.0, 3.0, 3.0]


def test_project_clamps_each_coordinate() -> None:
    box = BoxSet(np.array([0.0, -1.0]), np.array([2.0, 1.0]))
    assert project(box, [3.0, -4.0]).tolist() == [2.0, -1.0]
    assert project(box, [1.0, 0.5]).tolist() == [1.0, 0.5]


def test_project_is_the_closest_box_point() -> None:
    rng = np.random.default_rng(3)
    box = BoxSet.uniform(4, -1.0, 1.0)
    for _ in range(20):
        z = rng.normal(scale=3.0, size=4)
        proj = project(box, z)
        for _ in range(10):
            other = rng.uniform(-1.0, 1.0, size=4)
            assert np.linalg.norm(z - proj) <= np.linalg.norm(z - other) + 1e-12


def test_diameter_of_square() -> None:
    assert diameter(BoxSet.uniform(2, -1.0, 1.0)) == pytest.approx(math.sqrt(8.0))


def test_support_function_picks_corner() -> None:
    box = BoxSet(np.array([0.0, -1.0]), np.array([2.0, 1.0]))
    assert support_function(box, [-1.0, 3.0]) == pytest.approx(3.0)


def test_support_function_matches_corner_enumeration() -> None:
    rng = np.random.default_rng(11)
    box = BoxSet(rng.uniform(-2, 0, size=3), rng.uniform(0.5, 2, size=3))
    corners = [
        np.where(np.array(mask, dtype=bool), box.ub, box.lb)
        for mask in np.ndindex(2, 2, 2)
    ]
    for _ in range(10):
        y = rng.standard_normal(3)
        best = max(float(y @ c) for c in corners)
        assert support_function(box, y) == pytest.approx(best)


class TestNormalConeDistance:
    def test_upper_bound_active_example(self) -> None:
        """Upper bound active in the first coordinate absorbs the negative slope."""
        box = BoxSet.uniform(2, -1.0, 1.0)
        result = normal_cone_distance(box, [1.0, 0.0], [-2.0, 1.0])
        assert result.distance == pytest.approx(1.0)
        assert result.active_rows == ((0, 1),)
        assert result.multiplier.tolist() == pytest.approx([2.0])

    def test_interior_point_returns_gradient_norm(self) -> None:
        box = BoxSet.uniform(3, -1.0, 1.0)
        result = normal_cone_distance(box, [0.0, 0.2, -0.3], [3.0, 4.0, 0.0])
        assert result.distance == pytest.approx(5.0)
        assert result.active_count == 0

    def test_wrong_sign_is_not_absorbed(self) -> None:
        """At a lower bound only a positive gradient component is cancelled."""
        box = BoxSet.uniform(1, 0.0, 1.0)
        assert normal_cone_distance(box, [0.0], [2.0]).distance == 0.0
        assert normal_cone_distance(box, [0.0], [-2.0]).distance == pytest.approx(2.0)

    def test_outside_box_raises(self) -> None:
        box = BoxSet.uniform(2, -1.0, 1.0)
        with pytest.raises(OutsideBoxError):
            normal_cone_distance(box, [1.5, 0.0], [0.0, 0.0])

    def test_matches_polyhedral_nnls_path(self) -> None:
        """Per-coordinate solution equals the general nonnegative least squares."""
        rng = np.random.default_rng(2024)
        for _ in range(100):
            box, z, g = _random_triple(rng, int(rng.integers(1, 8)))
            C, c = box_constraints(box)
            fast = normal_cone_distance(box, z, g).distance
            general = polyhedral_normal_cone_distance(C, c, z, g)
            assert abs(fast - general) <= 1e-8

    def test_operation_count_tracks_active_rows_only(self) -> None:
        small = BoxSet.uniform(10, -1.0, 1.0)
        large = BoxSet.uniform(1000, -1.0, 1.0)
        z_small = np.zeros(10)
        z_small[3] = 1.0
        z_large = np.zeros(1000)
        z_large[3] = 1.0
        ops_small = normal_cone_distance(small, z_small, np.ones(10)).projection_ops
        ops_large = normal_cone_distance(large, z_large, np.ones(1000)).projection_ops
        assert ops_small == ops_large == 1


def test_active_rows_lists_upper_before_lower_for_degenerate_coordinate() -> None:
    box = BoxSet(np.array([0.0, -1.0]), np.array([0.0, 1.0]))
    assert active_rows(box, [0.0, -1.0]) == ((0, 1), (0, -1), (1, -1))
