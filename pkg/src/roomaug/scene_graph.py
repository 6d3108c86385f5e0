"""Spatial scene graph: object, group and room relationships as feature vectors.

Position vector per object (length 3m+1)::

    [RP, AD(g_1..g_m), SP(g_1..g_m), S(g_1..g_m)]

Orientation vector per object with a facing direction (length 2m+4)::

    [RP, TC, DS_same, DS_opp, F(g_1..g_m), NT(g_1..g_m)]

Groups follow the canonical category order of :data:`CATEGORIES`. All
relations are computed in batch through :mod:`roomaug._kernels`, so the same
code path serves whole-scene extraction and hypothetical new-object poses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .errors import GeometryError, SceneValidationError
from .geometry import OrientedBox, Point2, RoomShell, Thresholds, TWO_PI

MISSING_DISTANCE = 1000.0


class Symmetry(str, Enum):
    ASYMMETRIC = "Asymmetric"
    SYMMETRIC = "Symmetric"
    INSIDE_FACING = "InsideFacing"
    OTHER = "Other"


class Category(str, Enum):
    BED = "Bed"
    CHAIR = "Chair"
    DECOR = "Decor"
    PICTURE = "Picture"
    SOFA = "Sofa"
    STORAGE = "Storage"
    TABLE = "Table"
    TV = "TV"
    OTHER = "Other"

    @property
    def symmetry(self) -> Symmetry:
        return _SYMMETRY[self]

    @property
    def index(self) -> int:
        return CATEGORIES.index(self)

    def __str__(self):
        return self.value


_SYMMETRY = {
    Category.BED: Symmetry.ASYMMETRIC,
    Category.CHAIR: Symmetry.ASYMMETRIC,
    Category.SOFA: Symmetry.ASYMMETRIC,
    Category.TV: Symmetry.ASYMMETRIC,
    Category.DECOR: Symmetry.SYMMETRIC,
    Category.TABLE: Symmetry.SYMMETRIC,
    Category.PICTURE: Symmetry.INSIDE_FACING,
    Category.STORAGE: Symmetry.INSIDE_FACING,
    Category.OTHER: Symmetry.OTHER,
}

CATEGORIES: tuple[Category, ...] = tuple(Category)
M = len(CATEGORIES)
POSITION_LENGTH = 3 * M + 1
ORIENTATION_LENGTH = 2 * M + 4


def parse_category(name) -> Category:
    if isinstance(name, Category):
        return name
    try:
        return Category(str(name))
    except ValueError:
        raise SceneValidationError(f"unknown category {name!r}") from None


@dataclass(frozen=True)
class SceneObject:
    id: str
    category: Category
    box: OrientedBox
    has_known_facing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "category", parse_category(self.category))
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "has_known_facing", bool(self.has_known_facing))

    @property
    def center(self) -> Point2:
        return self.box.center


@dataclass(frozen=True)
class Scene:
    shell: RoomShell
    objects: tuple[SceneObject, ...] = ()
    room_type: str = ""
    name: str = ""

    def __post_init__(self):
        objs = tuple(self.objects)
        object.__setattr__(self, "objects", objs)
        ids = [o.id for o in objs]
        if len(set(ids)) != len(ids):
            raise SceneValidationError("object ids must be unique")
        if objs:
            inside = self.shell.contains(np.array([o.center for o in objs]))
            if not np.all(inside):
                bad = objs[int(np.argmin(inside))].id
                raise SceneValidationError(f"object {bad!r} is outside the floor polygon")

    def object(self, obj_id: str) -> SceneObject:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)

    def without(self, obj_id: str) -> "Scene":
        return Scene(self.shell, tuple(o for o in self.objects if o.id != obj_id), self.room_type, self.name)

    def with_object(self, obj: SceneObject) -> "Scene":
        return Scene(self.shell, self.objects + (obj,), self.room_type, self.name)


# ---------------------------------------------------------------------------
# array form used by every feature computation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxArrays:
    centers: np.ndarray
    center_z: np.ndarray
    halfs: np.ndarray
    thetas: np.ndarray
    cats: np.ndarray
    facing: np.ndarray
    corners: np.ndarray = field(init=False)
    axes: np.ndarray = field(init=False)

    def __post_init__(self):
        corners = _box_corners_safe(self.centers, self.thetas, self.halfs)
        object.__setattr__(self, "corners", corners)
        object.__setattr__(self, "axes", np.stack([np.cos(self.thetas), np.sin(self.thetas)], axis=-1).reshape(-1, 2))

    def __len__(self):
        return len(self.cats)

    @property
    def bottoms(self):
        return self.center_z - self.halfs[:, 2]

    @property
    def tops(self):
        return self.center_z + self.halfs[:, 2]

    @property
    def footprint_areas(self):
        return 4.0 * self.halfs[:, 0] * self.halfs[:, 1]

    @classmethod
    def from_objects(cls, objs: Sequence[SceneObject]) -> "BoxArrays":
        n = len(objs)
        return cls(
            centers=np.array([o.box.center for o in objs], dtype=float).reshape(n, 2),
            center_z=np.array([o.box.center_z for o in objs], dtype=float),
            halfs=np.array([o.box.half_extents for o in objs], dtype=float).reshape(n, 3),
            thetas=np.array([o.box.theta_a for o in objs], dtype=float),
            cats=np.array([o.category.index for o in objs], dtype=np.int64),
            facing=np.array([o.has_known_facing for o in objs], dtype=bool),
        )

    @classmethod
    def poses(cls, centers, thetas, half_extents, center_z, category: Category) -> "BoxArrays":
        """Hypothetical boxes sharing one size and category at many poses."""
        centers = np.asarray(centers, dtype=float).reshape(-1, 2)
        n = len(centers)
        thetas = np.broadcast_to(np.asarray(thetas, dtype=float), (n,)).copy()
        return cls(
            centers=centers,
            center_z=np.full(n, float(center_z)),
            halfs=np.tile(np.asarray(half_extents, dtype=float).reshape(1, 3), (n, 1)),
            thetas=thetas,
            cats=np.full(n, category.index, dtype=np.int64),
            facing=np.ones(n, dtype=bool),
        )


def _box_corners_safe(centers, thetas, halfs):
    from .geometry import box_corners

    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    if len(centers) == 0:
        return np.zeros((0, 4, 2))
    return box_corners(centers, thetas, np.asarray(halfs, dtype=float).reshape(-1, 3)[:, :2])


def _self_mask(nq: int, nt: int, self_idx) -> np.ndarray:
    mask = np.ones((nq, nt), dtype=bool)
    if self_idx is not None:
        idx = np.asarray(self_idx)
        rows = np.nonzero(idx >= 0)[0]
        mask[rows, idx[rows]] = False
    return mask


def _group_onehot(cats: np.ndarray) -> np.ndarray:
    onehot = np.zeros((len(cats), M), dtype=bool)
    onehot[np.arange(len(cats)), cats] = True
    return onehot


def room_position_counts(centers: np.ndarray, walls: np.ndarray, rho: float) -> np.ndarray:
    d = _kernels.point_segment_distances(centers, walls)
    return np.sum(d < rho, axis=1)


def position_matrix(q: BoxArrays, t: BoxArrays, walls: np.ndarray, thr: Thresholds, self_idx=None) -> np.ndarray:
    """Position feature rows (len(q), 3m+1) of query boxes against target objects."""
    nq, nt = len(q), len(t)
    out = np.zeros((nq, POSITION_LENGTH))
    if nq == 0:
        return out
    out[:, 0] = room_position_counts(q.centers, walls, thr.rho)
    mask = _self_mask(nq, nt, self_idx)
    onehot = _group_onehot(t.cats)  # (nt, M)
    if nt == 0:
        out[:, 1 : 1 + M] = MISSING_DISTANCE
        return out
    dist = _kernels.box_box_distances(q.corners, t.corners)
    eligible = mask[:, :, None] & onehot[None, :, :]  # (nq, nt, M)
    counts = eligible.sum(axis=1)
    sums = np.einsum("qt,qtm->qm", dist, eligible.astype(float))
    with np.errstate(invalid="ignore", divide="ignore"):
        ad = np.where(counts > 0, sums / np.maximum(counts, 1), MISSING_DISTANCE)
    out[:, 1 : 1 + M] = ad
    out[:, 1 + M : 1 + 2 * M] = support_matrix(q, t, thr, mask, dist)
    close = (dist < thr.epsilon) & mask
    out[:, 1 + 2 * M :] = np.einsum("qt,tm->qm", close.astype(float), onehot.astype(float))
    return out


def support_matrix(q: BoxArrays, t: BoxArrays, thr: Thresholds, mask=None, dist=None) -> np.ndarray:
    """Support relation per group: 1 on top of a member, -1 under one, else 0."""
    nq, nt = len(q), len(t)
    if mask is None:
        mask = np.ones((nq, nt), dtype=bool)
    if nt == 0 or nq == 0:
        return np.zeros((nq, M))
    areas = _kernels.overlap_areas(q.corners, t.corners)
    smaller = np.minimum(q.footprint_areas[:, None], t.footprint_areas[None, :])
    if dist is None:
        dist = _kernels.box_box_distances(q.corners, t.corners)
    with np.errstate(invalid="ignore", divide="ignore"):
        frac_ok = np.where(smaller > 1e-12, areas / np.where(smaller > 1e-12, smaller, 1.0), 0.0) >= thr.support_overlap_frac
    overlap = np.where(smaller > 1e-12, frac_ok, dist == 0.0) & mask
    on_top = overlap & (np.abs(q.bottoms[:, None] - t.tops[None, :]) <= thr.support_gap)
    under = overlap & (np.abs(t.bottoms[None, :] - q.tops[:, None]) <= thr.support_gap)
    onehot = _group_onehot(t.cats).astype(float)
    top_any = (on_top.astype(float) @ onehot) > 0
    under_any = (under.astype(float) @ onehot) > 0
    return np.where(top_any, 1.0, np.where(under_any, -1.0, 0.0))


def far_wall_mask(centers: np.ndarray, walls: np.ndarray) -> np.ndarray:
    """The floor(l/2) walls furthest from each center; ties go to the lower wall index."""
    d = _kernels.point_segment_distances(centers, walls)
    l = walls.shape[0]
    k = l // 2
    mask = np.zeros(d.shape, dtype=bool)
    order = np.argsort(-d, axis=1, kind="stable")[:, :k]
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def _angle_gaps(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    d = np.abs(np.fmod(t1[:, None] - t2[None, :], TWO_PI))
    return np.minimum(d, TWO_PI - d)


def orientation_matrix(q: BoxArrays, t: BoxArrays, walls: np.ndarray, thr: Thresholds, self_idx=None) -> np.ndarray:
    """Orientation feature rows (len(q), 2m+4); every query is assumed to face along its axis a."""
    nq, nt = len(q), len(t)
    out = np.zeros((nq, ORIENTATION_LENGTH))
    if nq == 0:
        return out
    out[:, 0] = room_position_counts(q.centers, walls, thr.rho)
    hits = _kernels.ray_segment_hits(q.centers, q.axes, walls)
    out[:, 1] = np.any(hits & far_wall_mask(q.centers, walls), axis=1)
    if nt == 0:
        return out
    mask = _self_mask(nq, nt, self_idx)
    dist = _kernels.box_box_distances(q.corners, t.corners)
    near = (dist <= thr.epsilon) & mask
    gaps = _angle_gaps(q.thetas, t.thetas)
    oriented = near & t.facing[None, :]
    out[:, 2] = np.sum(oriented & (gaps <= thr.phi), axis=1)
    out[:, 3] = np.sum(oriented & (np.abs(math.pi - gaps) <= thr.phi), axis=1)
    onehot = _group_onehot(t.cats).astype(float)
    th = t.halfs[:, :2]
    fwd = _kernels.ray_box_hits(q.centers, q.axes, t.centers, t.axes, th)
    b = np.stack([-q.axes[:, 1], q.axes[:, 0]], axis=-1)
    side = _kernels.ray_box_hits(q.centers, b, t.centers, t.axes, th) | _kernels.ray_box_hits(
        q.centers, -b, t.centers, t.axes, th
    )
    out[:, 4 : 4 + M] = (fwd & near).astype(float) @ onehot
    out[:, 4 + M :] = (side & near).astype(float) @ onehot
    return out


# ---------------------------------------------------------------------------
# feature records and the scene graph
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PositionFeatures:
    room_position: int
    average_distance: tuple[float, ...]
    support: tuple[int, ...]
    surrounded_by: tuple[int, ...]

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [[self.room_position], self.average_distance, self.support, self.surrounded_by]
        ).astype(float)

    @classmethod
    def from_vector(cls, v) -> "PositionFeatures":
        v = np.asarray(v, dtype=float)
        if v.shape != (POSITION_LENGTH,):
            raise ValueError(f"position vector must have length {POSITION_LENGTH}")
        return cls(
            int(v[0]),
            tuple(float(x) for x in v[1 : 1 + M]),
            tuple(int(x) for x in v[1 + M : 1 + 2 * M]),
            tuple(int(x) for x in v[1 + 2 * M :]),
        )


@dataclass(frozen=True)
class OrientationFeatures:
    room_position: int
    towards_center: int
    direction_similarity: tuple[int, int]
    facing: tuple[int, ...]
    next_to: tuple[int, ...]

    def vector(self) -> np.ndarray:
        return np.concatenate(
            [[self.room_position, self.towards_center], self.direction_similarity, self.facing, self.next_to]
        ).astype(float)

    @classmethod
    def from_vector(cls, v) -> "OrientationFeatures":
        v = np.asarray(v, dtype=float)
        if v.shape != (ORIENTATION_LENGTH,):
            raise ValueError(f"orientation vector must have length {ORIENTATION_LENGTH}")
        return cls(
            int(v[0]),
            int(v[1]),
            (int(v[2]), int(v[3])),
            tuple(int(x) for x in v[4 : 4 + M]),
            tuple(int(x) for x in v[4 + M :]),
        )


@dataclass(frozen=True)
class SceneGraph:
    scene: Scene
    thresholds: Thresholds
    groups: dict
    position: dict
    orientation: dict

    @property
    def position_rows(self) -> np.ndarray:
        return np.array([self.position[o.id].vector() for o in self.scene.objects]).reshape(-1, POSITION_LENGTH)

    def orientation_rows(self) -> np.ndarray:
        rows = [self.orientation[o.id].vector() for o in self.scene.objects if o.id in self.orientation]
        return np.array(rows).reshape(-1, ORIENTATION_LENGTH)


def has_orientation_features(obj: SceneObject) -> bool:
    return obj.category.symmetry is Symmetry.ASYMMETRIC and obj.has_known_facing


def extract_features(scene: Scene, thr: Thresholds) -> SceneGraph:
    """Build the scene graph: groups plus per-object position and orientation features."""
    objs = scene.objects
    arrays = BoxArrays.from_objects(objs)
    walls = scene.shell.wall_array
    idx = np.arange(len(objs))
    pos = position_matrix(arrays, arrays, walls, thr, self_idx=idx)
    groups = {c: tuple(o.id for o in objs if o.category is c) for c in CATEGORIES}
    position = {o.id: PositionFeatures.from_vector(pos[k]) for k, o in enumerate(objs)}
    orient_idx = [k for k, o in enumerate(objs) if has_orientation_features(o)]
    orientation = {}
    if orient_idx:
        sel = np.array(orient_idx)
        q = BoxArrays(
            arrays.centers[sel], arrays.center_z[sel], arrays.halfs[sel], arrays.thetas[sel],
            arrays.cats[sel], arrays.facing[sel],
        )
        rows = orientation_matrix(q, arrays, walls, thr, self_idx=sel)
        for r, k in enumerate(orient_idx):
            orientation[objs[k].id] = OrientationFeatures.from_vector(rows[r])
    return SceneGraph(scene, thr, groups, position, orientation)


# ---------------------------------------------------------------------------
# single-relation helpers
# ---------------------------------------------------------------------------


def _members(obj: SceneObject, group: Iterable[SceneObject]) -> list[SceneObject]:
    return [o for o in group if o.id != obj.id]


def _require_facing(obj: SceneObject):
    if not obj.has_known_facing:
        raise GeometryError(f"object {obj.id!r} has no facing direction")


def room_position(obj: SceneObject, shell: RoomShell, t: Thresholds) -> int:
    return int(room_position_counts(np.array([obj.center]), shell.wall_array, t.rho)[0])


def _distances(obj: SceneObject, members: list[SceneObject]) -> np.ndarray:
    if not members:
        return np.zeros(0)
    q = BoxArrays.from_objects([obj])
    return _kernels.box_box_distances(q.corners, BoxArrays.from_objects(members).corners)[0]


def average_distance(obj: SceneObject, group: Iterable[SceneObject]) -> float:
    d = _distances(obj, _members(obj, group))
    return float(np.mean(d)) if len(d) else MISSING_DISTANCE


def surrounded_by(obj: SceneObject, group: Iterable[SceneObject], t: Thresholds) -> int:
    return int(np.sum(_distances(obj, _members(obj, group)) < t.epsilon))


def support(obj: SceneObject, group: Iterable[SceneObject], t: Thresholds) -> int:
    members = _members(obj, group)
    if not members:
        return 0
    tgt = BoxArrays.from_objects(members)
    # collapse every member into one group so the per-group reduction acts on all of them
    tgt = BoxArrays(tgt.centers, tgt.center_z, tgt.halfs, tgt.thetas, np.zeros(len(members), dtype=np.int64), tgt.facing)
    return int(support_matrix(BoxArrays.from_objects([obj]), tgt, t)[0, 0])


def towards_center(obj: SceneObject, shell: RoomShell) -> int:
    _require_facing(obj)
    q = BoxArrays.from_objects([obj])
    walls = shell.wall_array
    hits = _kernels.ray_segment_hits(q.centers, q.axes, walls)
    return int(np.any(hits & far_wall_mask(q.centers, walls)))


def away_from_wall(obj: SceneObject, shell: RoomShell, t: Thresholds) -> int:
    """1 when the back ray hits the closest wall and the facing is normal to it within phi."""
    _require_facing(obj)
    q = BoxArrays.from_objects([obj])
    walls = shell.wall_array
    d = _kernels.box_box_distances(q.corners, np.array([[w[0], w[1], w[1], w[0]] for w in walls]))[0]
    c1 = int(np.argmin(d))
    back = _kernels.ray_segment_hits(q.centers, -q.axes, walls[c1 : c1 + 1])[0, 0]
    wall_dir = shell.walls[c1].direction
    cosang = abs(float(np.dot(q.axes[0], wall_dir)))
    perpendicular = cosang <= math.sin(t.phi) + 1e-12
    return int(bool(back) and perpendicular)


def direction_similarity(obj: SceneObject, others: Iterable[SceneObject], t: Thresholds) -> tuple[int, int]:
    _require_facing(obj)
    members = _members(obj, others)
    if not members:
        return (0, 0)
    row = orientation_matrix(
        BoxArrays.from_objects([obj]), BoxArrays.from_objects(members), _NO_WALLS, t
    )[0]
    return int(row[2]), int(row[3])


def facing(obj: SceneObject, group: Iterable[SceneObject], t: Thresholds) -> int:
    _require_facing(obj)
    members = _members(obj, group)
    if not members:
        return 0
    row = orientation_matrix(BoxArrays.from_objects([obj]), BoxArrays.from_objects(members), _NO_WALLS, t)[0]
    return int(np.sum(row[4 : 4 + M]))


def next_to(obj: SceneObject, group: Iterable[SceneObject], t: Thresholds) -> int:
    _require_facing(obj)
    members = _members(obj, group)
    if not members:
        return 0
    row = orientation_matrix(BoxArrays.from_objects([obj]), BoxArrays.from_objects(members), _NO_WALLS, t)[0]
    return int(np.sum(row[4 + M :]))


_NO_WALLS = np.zeros((0, 2, 2))
