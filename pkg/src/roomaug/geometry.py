"""2.5-D geometry: points, oriented boxes, walls, room shells, distances and rays.

The floor lies in the (x, y) plane. Boxes are compared through their footprints;
``center_z`` and the vertical half extent only matter for support relations.
Angles are canonicalized to [0, 2*pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np

from . import _kernels
from .errors import GeometryError

TWO_PI = 2.0 * math.pi


class Point2(NamedTuple):
    x: float
    y: float


def canonical_angle(theta: float) -> float:
    """Reduce an angle to [0, 2*pi)."""
    t = math.fmod(float(theta), TWO_PI)
    if t < 0.0:
        t += TWO_PI
    if t >= TWO_PI:
        t = 0.0
    return t


def angle_gap(t1: float, t2: float) -> float:
    """Minimal-arc distance between two angles, in [0, pi]."""
    d = abs(math.fmod(float(t1) - float(t2), TWO_PI))
    return min(d, TWO_PI - d)


def unit(theta: float) -> np.ndarray:
    return np.array([math.cos(theta), math.sin(theta)])


@dataclass(frozen=True)
class OrientedBox:
    """Oriented bounding box.

    ``half_extents`` is ordered (along a, along b, along z), where ``a`` is the
    primary axis at ``theta_a`` and ``b`` is ``a`` rotated a quarter turn
    counter-clockwise.
    """

    center: Point2
    center_z: float
    half_extents: tuple[float, float, float]
    theta_a: float

    def __post_init__(self):
        c = Point2(float(self.center[0]), float(self.center[1]))
        h = tuple(float(v) for v in self.half_extents)
        if len(h) != 3:
            raise GeometryError("half_extents needs three entries")
        vals = (c.x, c.y, float(self.center_z), float(self.theta_a)) + h
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError("box has non-finite values")
        if min(h) < 0.0:
            raise GeometryError("half_extents must be nonnegative")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "center_z", float(self.center_z))
        object.__setattr__(self, "half_extents", h)
        object.__setattr__(self, "theta_a", canonical_angle(self.theta_a))

    @property
    def theta_b(self) -> float:
        return canonical_angle(self.theta_a + 0.5 * math.pi)

    @property
    def axis_a(self) -> np.ndarray:
        return unit(self.theta_a)

    @property
    def axis_b(self) -> np.ndarray:
        return unit(self.theta_b)

    @property
    def is_degenerate(self) -> bool:
        return self.half_extents[0] == 0.0 or self.half_extents[1] == 0.0

    @property
    def bottom(self) -> float:
        return self.center_z - self.half_extents[2]

    @property
    def top(self) -> float:
        return self.center_z + self.half_extents[2]

    def corners(self) -> np.ndarray:
        """Footprint corners (4, 2), counter-clockwise."""
        return box_corners(
            np.array([self.center]), np.array([self.theta_a]), np.array([self.half_extents[:2]])
        )[0]

    def moved(self, center=None, theta_a=None, center_z=None) -> "OrientedBox":
        return OrientedBox(
            center=self.center if center is None else Point2(*center),
            center_z=self.center_z if center_z is None else center_z,
            half_extents=self.half_extents,
            theta_a=self.theta_a if theta_a is None else theta_a,
        )


def box_corners(centers: np.ndarray, thetas: np.ndarray, halfs: np.ndarray) -> np.ndarray:
    """Vectorized footprint corners, shape (n, 4, 2), counter-clockwise."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    thetas = np.asarray(thetas, dtype=float).reshape(-1)
    halfs = np.asarray(halfs, dtype=float).reshape(-1, 2)
    a = np.stack([np.cos(thetas), np.sin(thetas)], axis=-1)
    b = np.stack([-a[:, 1], a[:, 0]], axis=-1)
    ha = a * halfs[:, :1]
    hb = b * halfs[:, 1:2]
    c = centers
    return np.stack([c + ha + hb, c - ha + hb, c - ha - hb, c + ha - hb], axis=1)


@dataclass(frozen=True)
class Wall:
    start: Point2
    end: Point2

    def __post_init__(self):
        s = Point2(float(self.start[0]), float(self.start[1]))
        e = Point2(float(self.end[0]), float(self.end[1]))
        if s == e:
            raise GeometryError("wall endpoints must be distinct")
        object.__setattr__(self, "start", s)
        object.__setattr__(self, "end", e)

    @property
    def direction(self) -> np.ndarray:
        d = np.subtract(self.end, self.start)
        return d / np.hypot(*d)

    def as_array(self) -> np.ndarray:
        return np.array([self.start, self.end], dtype=float)


def _polygon_signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    return _kernels._seg_seg(*p1, *p2, *q1, *q2) == 0.0


def is_simple_polygon(pts: np.ndarray) -> bool:
    n = len(pts)
    if n < 3:
        return False
    for i in range(n):
        a1, a2 = pts[i], pts[(i + 1) % n]
        if np.array_equal(a1, a2):
            return False
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if _segments_cross(a1, a2, pts[j], pts[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class RoomShell:
    """Floor polygon with its walls (the polygon edges, in order) and area centroid."""

    floor_polygon: tuple[Point2, ...]
    walls: tuple[Wall, ...] = field(init=False)
    centroid: Point2 = field(init=False)

    def __post_init__(self):
        pts = tuple(Point2(float(p[0]), float(p[1])) for p in self.floor_polygon)
        arr = np.array(pts, dtype=float)
        if len(pts) < 3 or not np.all(np.isfinite(arr)):
            raise GeometryError("floor polygon needs at least three finite vertices")
        if not is_simple_polygon(arr):
            raise GeometryError("floor polygon is not simple")
        object.__setattr__(self, "floor_polygon", pts)
        walls = tuple(Wall(pts[i], pts[(i + 1) % len(pts)]) for i in range(len(pts)))
        object.__setattr__(self, "walls", walls)
        object.__setattr__(self, "centroid", polygon_centroid(arr))

    @property
    def vertices(self) -> np.ndarray:
        return np.array(self.floor_polygon, dtype=float)

    @property
    def wall_array(self) -> np.ndarray:
        """Walls as (l, 2, 2) segments."""
        v = self.vertices
        return np.stack([v, np.roll(v, -1, axis=0)], axis=1)

    @property
    def area(self) -> float:
        return abs(_polygon_signed_area(self.vertices))

    @property
    def is_ccw(self) -> bool:
        return _polygon_signed_area(self.vertices) > 0.0

    def inward_normals(self) -> np.ndarray:
        """Unit normals (l, 2) pointing into the room for every wall."""
        segs = self.wall_array
        d = segs[:, 1] - segs[:, 0]
        d = d / np.linalg.norm(d, axis=1, keepdims=True)
        left = np.stack([-d[:, 1], d[:, 0]], axis=1)
        return left if self.is_ccw else -left

    def bounds(self) -> tuple[float, float, float, float]:
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max())

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> np.ndarray:
        return points_in_polygon(np.asarray(points, dtype=float).reshape(-1, 2), self.vertices, tol)


def polygon_centroid(pts: np.ndarray) -> Point2:
    x, y = pts[:, 0], pts[:, 1]
    x1, y1 = np.roll(x, -1), np.roll(y, -1)
    cr = x * y1 - x1 * y
    a = 0.5 * float(np.sum(cr))
    if abs(a) < 1e-12:
        raise GeometryError("polygon has zero area")
    cx = float(np.sum((x + x1) * cr)) / (6.0 * a)
    cy = float(np.sum((y + y1) * cr)) / (6.0 * a)
    return Point2(cx, cy)


def room_centroid(shell: RoomShell) -> Point2:
    """Area centroid of the floor polygon."""
    return polygon_centroid(shell.vertices)


def points_in_polygon(points: np.ndarray, poly: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Inclusive point-in-polygon test (points on the boundary count as inside)."""
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    x1, y1 = poly[:, 0][None, :], poly[:, 1][None, :]
    x2, y2 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    cond = (y1 > py) != (y2 > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        xin = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
    crossings = np.sum(cond & (px < xin), axis=1)
    inside = (crossings % 2) == 1
    segs = np.stack([poly, np.roll(poly, -1, axis=0)], axis=1)
    on_edge = np.min(_kernels.point_segment_distances(points, segs), axis=1) <= tol
    return inside | on_edge


# ---------------------------------------------------------------------------
# distances and rays
# ---------------------------------------------------------------------------

Shape = Union[Point2, OrientedBox, Wall]


def _as_corners(s) -> np.ndarray:
    if isinstance(s, OrientedBox):
        if s.half_extents[0] == 0.0 and s.half_extents[1] == 0.0:
            return np.repeat(np.array([s.center], dtype=float), 4, axis=0)
        return s.corners()
    if isinstance(s, Wall):
        a = s.as_array()
        return np.array([a[0], a[1], a[1], a[0]])
    p = np.array([float(s[0]), float(s[1])])
    return np.repeat(p[None, :], 4, axis=0)


def shortest_distance(a: Shape, b: Shape) -> float:
    """Euclidean shortest distance between two footprints (points, boxes, walls).

    Returns 0 when the shapes touch or intersect. Every shape is reduced to a
    (possibly degenerate) quadrilateral, which keeps the result symmetric.
    """
    if not isinstance(a, (OrientedBox, Wall)):
        a = Point2(float(a[0]), float(a[1]))
    if not isinstance(b, (OrientedBox, Wall)):
        b = Point2(float(b[0]), float(b[1]))
    if isinstance(a, Point2) and isinstance(b, Point2):
        return float(math.hypot(a.x - b.x, a.y - b.y))
    if isinstance(a, Point2) and isinstance(b, Wall):
        return float(_kernels.point_segment_distances(np.array([a]), b.as_array()[None])[0, 0])
    if isinstance(b, Point2) and isinstance(a, Wall):
        return shortest_distance(b, a)
    return float(_kernels.box_box_distances(_as_corners(a)[None], _as_corners(b)[None])[0, 0])


def _check_direction(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=float).reshape(2)
    n = float(np.hypot(*d))
    if n == 0.0 or not math.isfinite(n):
        raise GeometryError("ray direction must be a nonzero finite vector")
    if abs(n - 1.0) > 1e-6:
        raise GeometryError("ray direction must be a unit vector")
    return d


def ray_hits_wall(origin, direction, wall: Wall) -> bool:
    """Whether ``origin + g * direction`` lies on the wall segment for some g >= 0."""
    d = _check_direction(direction)
    o = np.asarray(origin, dtype=float).reshape(1, 2)
    return bool(_kernels.ray_segment_hits(o, d[None], wall.as_array()[None])[0, 0])


def ray_hits_box(origin, direction, box: OrientedBox) -> bool:
    d = _check_direction(direction)
    o = np.asarray(origin, dtype=float).reshape(1, 2)
    return bool(
        _kernels.ray_box_hits(
            o, d[None], np.array([box.center]), box.axis_a[None], np.array([box.half_extents[:2]])
        )[0, 0]
    )


# ---------------------------------------------------------------------------
# thresholds and pose standardization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thresholds:
    rho: float = 0.5
    epsilon: float = 1.0
    phi: float = math.pi / 12
    support_gap: float = 0.1
    support_overlap_frac: float = 0.5

    def __post_init__(self):
        for name in ("rho", "epsilon", "phi", "support_gap"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise GeometryError(f"threshold {name} must be positive")
        if not self.phi < 0.5 * math.pi:
            raise GeometryError("phi must be below pi/2")
        if not 0.0 < self.support_overlap_frac <= 1.0:
            raise GeometryError("support_overlap_frac must lie in (0, 1]")

    def as_dict(self) -> dict:
        return {
            "rho": self.rho,
            "epsilon": self.epsilon,
            "phi": self.phi,
            "support_gap": self.support_gap,
            "support_overlap_frac": self.support_overlap_frac,
        }


class PoseFrame(NamedTuple):
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    half_extents: tuple[float, float, float] | None


def standardize_pose(
    facing: Sequence[float],
    axes: Sequence[Sequence[float]] | None = None,
    half_extents: Sequence[float] | None = None,
) -> PoseFrame:
    """Relabel box axes so ``a`` is the facing direction and ``c`` is vertical.

    ``axes`` (three row vectors) and ``half_extents`` describe the box as it was
    labelled originally; when given, the half extents are permuted to follow the
    new (a, b, c) labelling by matching each new axis to its parallel original.
    """
    a = np.asarray(facing, dtype=float).reshape(3)
    if abs(a[2]) > 1e-12:
        raise GeometryError("facing direction must lie in the floor plane")
    if abs(np.linalg.norm(a) - 1.0) > 1e-9:
        raise GeometryError("facing direction must be a unit vector")
    c = np.array([0.0, 0.0, 1.0])
    b = np.cross(c, a)
    new_half = None
    if half_extents is not None:
        r = np.asarray(half_extents, dtype=float).reshape(3)
        old = np.eye(3) if axes is None else np.asarray(axes, dtype=float).reshape(3, 3)
        old = old / np.linalg.norm(old, axis=1, keepdims=True)
        perm = []
        for new_axis in (a, b, c):
            k = int(np.argmax(np.abs(old @ new_axis)))
            if abs(abs(old[k] @ new_axis) - 1.0) > 1e-6 or k in perm:
                raise GeometryError("original axes are not aligned with the standardized frame")
            perm.append(k)
        new_half = tuple(float(r[k]) for k in perm)
    return PoseFrame(a, b, c, new_half)
