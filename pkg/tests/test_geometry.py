import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import box
from oracles import box_outline, brute_boundary_distance, shoelace_centroid
from roomaug.errors import GeometryError
from roomaug.geometry import (
    OrientedBox,
    Point2,
    RoomShell,
    Thresholds,
    Wall,
    angle_gap,
    canonical_angle,
    ray_hits_box,
    ray_hits_wall,
    room_centroid,
    shortest_distance,
    standardize_pose,
)

R2 = 1 / math.sqrt(2)


class TestShortestDistance:
    def test_point_to_wall(self):
        assert shortest_distance(Point2(0, 0), Wall((1, -1), (1, 1))) == pytest.approx(1.0, abs=1e-12)

    def test_boxes_three_apart(self):
        # "unit" here means unit half extents: footprints span [-1, 1] and [2, 4]
        a, b = box(0, 0, 1, 1), box(3, 0, 1, 1)
        oracle = brute_boundary_distance(box_outline((0, 0), 0, 1, 1), box_outline((3, 0), 0, 1, 1))
        assert oracle == pytest.approx(1.0, abs=1e-9)
        assert shortest_distance(a, b) == pytest.approx(oracle, abs=1e-9)

    def test_rotated_boxes_against_sampled_boundary(self):
        a = box(0.2, -0.4, 0.7, 0.3, theta=0.4)
        b = box(2.5, 1.1, 0.4, 0.6, theta=2.2)
        oracle = brute_boundary_distance(box_outline(a.center, a.theta_a, 0.7, 0.3),
                                         box_outline(b.center, b.theta_a, 0.4, 0.6), per_edge=4000)
        # sampling step bounds the oracle's error from above
        assert shortest_distance(a, b) == pytest.approx(oracle, abs=2e-3)
        assert shortest_distance(a, b) <= oracle + 1e-12

    def test_overlapping_and_touching(self):
        assert shortest_distance(box(0, 0), box(0.5, 0.2)) == 0.0
        assert shortest_distance(box(0, 0), box(1.0, 0)) == 0.0
        assert shortest_distance(box(0, 0, 2, 2), box(0.1, 0.1, 0.2, 0.2)) == 0.0  # contained

    def test_degenerate_box_is_a_point(self):
        pt = OrientedBox((3, 0), 0, (0, 0, 0), 0)
        assert shortest_distance(box(0, 0), pt) == pytest.approx(2.5)
        assert shortest_distance(Point2(3, 0), box(0, 0)) == pytest.approx(2.5)

    def test_box_to_wall(self):
        assert shortest_distance(box(2, 0), Wall((0, -1), (0, 1))) == pytest.approx(1.5)


class TestRays:
    wall = Wall((2, -1), (2, 1))

    def test_wall_examples(self):
        assert ray_hits_wall((0, 0), (1, 0), self.wall)
        assert not ray_hits_wall((0, 0), (-1, 0), self.wall)
        # gamma = 2*sqrt(2) reaches x = 2 at y = 2, outside [-1, 1]
        assert not ray_hits_wall((0, 0), (R2, R2), self.wall)

    def test_wall_endpoint_inclusive(self):
        d = np.array([2.0, 1.0]) / math.sqrt(5)
        assert ray_hits_wall((0, 0), d, self.wall)

    def test_box_examples(self):
        assert ray_hits_box((0, 0), (1, 0), box(3, 0))
        assert ray_hits_box((3.1, 0.2), (0, -1), box(3, 0))
        assert ray_hits_box((3.1, 0.2), (-R2, R2), box(3, 0))
        # footprint spans y in [-0.5, 0.5] only for x in [2.5, 3.5]; the ray stays on x = 0
        assert not ray_hits_box((0, 0), (0, 1), box(3, 0))

    @pytest.mark.parametrize("d", [(0, 0), (2, 0), (np.nan, 1)])
    def test_bad_direction(self, d):
        with pytest.raises(GeometryError):
            ray_hits_wall((0, 0), d, self.wall)
        with pytest.raises(GeometryError):
            ray_hits_box((0, 0), d, box(3, 0))


class TestCentroid:
    def test_unit_square(self):
        c = room_centroid(RoomShell(((0, 0), (1, 0), (1, 1), (0, 1))))
        assert c == pytest.approx((0.5, 0.5))

    def test_l_hexagon(self):
        pts = ((0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2))
        expected = shoelace_centroid(pts)
        # decomposition check of the oracle itself: 2x1 slab plus 1x1 block
        assert expected == pytest.approx(((2 * 1.0 + 1 * 0.5) / 3, (2 * 0.5 + 1 * 1.5) / 3))
        assert room_centroid(RoomShell(pts)) == pytest.approx(expected, abs=1e-12)

    def test_triangle(self):
        assert room_centroid(RoomShell(((0, 0), (3, 0), (0, 3)))) == pytest.approx((1, 1))

    def test_clockwise_same_as_ccw(self):
        pts = ((0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2))
        a = room_centroid(RoomShell(pts))
        b = room_centroid(RoomShell(tuple(reversed(pts))))
        assert a == pytest.approx(b, abs=1e-12)

    def test_invalid_polygons(self):
        with pytest.raises(GeometryError):
            RoomShell(((0, 0), (1, 0), (2, 0)))
        with pytest.raises(GeometryError):
            RoomShell(((0, 0), (1, 1), (1, 0), (0, 1)))  # bow tie


class TestStandardizePose:
    def test_examples(self):
        f = standardize_pose([1, 0, 0])
        assert f.b == pytest.approx([0, 1, 0]) and f.c == pytest.approx([0, 0, 1])
        assert standardize_pose([0, 1, 0]).b == pytest.approx([-1, 0, 0])
        assert standardize_pose([R2, R2, 0]).b == pytest.approx([-R2, R2, 0], abs=1e-15)

    def test_half_extents_follow_axes(self):
        f = standardize_pose([0, 1, 0], half_extents=(0.3, 0.9, 0.4))
        # new a is old y, new b is old -x
        assert f.half_extents == (0.9, 0.3, 0.4)

    def test_errors(self):
        with pytest.raises(GeometryError):
            standardize_pose([0.6, 0, 0.8])
        with pytest.raises(GeometryError):
            standardize_pose([2, 0, 0])
        with pytest.raises(GeometryError):
            standardize_pose([R2, R2, 0], half_extents=(1, 2, 3))

    @given(st.floats(0, 2 * math.pi))
    def test_right_handed_orthonormal(self, th):
        f = standardize_pose([math.cos(th), math.sin(th), 0.0])
        assert abs(f.a @ f.b) <= 1e-12
        assert abs(np.linalg.norm(f.b) - 1) <= 1e-12
        assert abs(np.cross(f.a, f.b) @ [0, 0, 1] - 1) <= 1e-12


class TestBoxesAndAngles:
    def test_canonical_angle(self):
        assert canonical_angle(-math.pi / 2) == pytest.approx(1.5 * math.pi)
        assert canonical_angle(2 * math.pi) == 0.0
        assert 0 <= canonical_angle(-1e-18) < 2 * math.pi

    def test_angle_gap(self):
        assert angle_gap(0.1, 2 * math.pi - 0.1) == pytest.approx(0.2)
        assert angle_gap(0, math.pi) == pytest.approx(math.pi)

    def test_invalid_box(self):
        with pytest.raises(GeometryError):
            OrientedBox((0, 0), 0, (-1, 1, 1), 0)
        with pytest.raises(GeometryError):
            OrientedBox((np.inf, 0), 0, (1, 1, 1), 0)

    @given(st.floats(-20, 20))
    def test_theta_b_quarter_turn(self, th):
        b = OrientedBox((0, 0), 0, (1, 1, 1), th)
        assert angle_gap(b.theta_b - b.theta_a, math.pi / 2) <= 1e-9
        r = b.moved(theta_a=b.theta_a + 1.3)
        assert angle_gap(r.theta_b - r.theta_a, math.pi / 2) <= 1e-9

    def test_thresholds_validation(self):
        assert Thresholds() == Thresholds(0.5, 1.0, math.pi / 12)
        with pytest.raises(GeometryError):
            Thresholds(rho=0)
        with pytest.raises(GeometryError):
            Thresholds(phi=math.pi / 2)


coords = st.floats(-5, 5, allow_nan=False)
sizes = st.floats(0.01, 2)
angles = st.floats(0, 2 * math.pi)


@st.composite
def boxes(draw):
    return OrientedBox((draw(coords), draw(coords)), 0.5, (draw(sizes), draw(sizes), 0.5), draw(angles))


@settings(max_examples=200, deadline=None)
@given(boxes(), boxes())
def test_distance_symmetry(a, b):
    assert shortest_distance(a, b) == pytest.approx(shortest_distance(b, a), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(coords, coords, boxes())
def test_point_box_not_beyond_center(x, y, b):
    assert shortest_distance(Point2(x, y), b) <= shortest_distance(Point2(x, y), b.center) + 1e-12


@settings(max_examples=200, deadline=None)
@given(coords, coords, angles, boxes(), st.floats(1.0, 3.0))
def test_ray_monotone_under_enlargement(x, y, th, b, k):
    d = (math.cos(th), math.sin(th))
    big = OrientedBox(b.center, b.center_z, tuple(h * k for h in b.half_extents), b.theta_a)
    if ray_hits_box((x, y), d, b):
        assert ray_hits_box((x, y), d, big)
