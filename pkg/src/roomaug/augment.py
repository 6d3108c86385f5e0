"""Candidate-pose sampling, heat maps and placement recommendations.

Positions are scored first on a uniform grid clipped to the floor polygon;
orientations are then scored only at the chosen positions. A joint mode
scores every (cell, angle) pair instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .collision import DEFAULT_ALLOWED_OVERLAPS, colliding, footprints_inside, push_inside
from .errors import NoValidCellError, PlacementStepError, RoomAugError
from .geometry import OrientedBox, Point2, Thresholds, TWO_PI
from .knowledge_model import KnowledgeModel
from .scene_graph import (
    BoxArrays,
    Category,
    Scene,
    SceneObject,
    Symmetry,
    orientation_matrix,
    parse_category,
    position_matrix,
)

HEATMAP_SCHEMA_VERSION = 1
COLLISION_POLICIES = ("reject_overlap", "allow_listed_pairs")

# reasons a grid cell carries no score
OUTSIDE, NO_FIT, COLLISION = "outside_room", "does_not_fit", "collision"


@dataclass(frozen=True)
class SamplingSpec:
    target_samples: int = 250
    orientation_count: int = 16
    collision_policy: str = "allow_listed_pairs"
    overlap_allow_list: frozenset = DEFAULT_ALLOWED_OVERLAPS
    random_seed: int = 0  # the grid is deterministic; kept for request compatibility
    top_k: int = 5
    joint: bool = False

    def __post_init__(self):
        if self.target_samples < 1:
            raise ValueError("target_samples must be at least 1")
        if self.orientation_count < 4:
            raise ValueError("orientation_count must be at least 4")
        if self.collision_policy not in COLLISION_POLICIES:
            raise ValueError(f"collision_policy must be one of {COLLISION_POLICIES}")
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")

    @property
    def allowed(self) -> frozenset:
        return self.overlap_allow_list if self.collision_policy == "allow_listed_pairs" else frozenset()

    def angles(self) -> np.ndarray:
        return np.arange(self.orientation_count) * (TWO_PI / self.orientation_count)


@dataclass(frozen=True)
class HeatMap:
    """Scored grid. Arrays are indexed by cell index ``j * nx + i``."""

    category: Category
    origin: tuple[float, float]
    cell_size: tuple[float, float]
    shape: tuple[int, int]  # (nx, ny)
    half_extents: tuple[float, float, float]
    center_z: float
    cell_xy: np.ndarray
    pose_xy: np.ndarray
    theta: np.ndarray
    log_likelihood: np.ndarray  # -inf for invalid cells
    valid: np.ndarray
    reasons: tuple[str, ...]
    best_cell: int

    @property
    def raw(self) -> np.ndarray:
        return np.where(self.valid, np.exp(self.log_likelihood), 0.0)

    @property
    def normalized(self) -> np.ndarray:
        top = self.log_likelihood[self.best_cell]
        return np.where(self.valid, np.exp(self.log_likelihood - top), 0.0)

    def ranked(self, k: int) -> np.ndarray:
        """Indices of the k best valid cells; ties go to the lower index."""
        idx = np.nonzero(self.valid)[0]
        order = np.lexsort((idx, -self.log_likelihood[idx]))
        return idx[order[:k]]

    def to_dict(self) -> dict:
        norm, raw = self.normalized, self.raw
        nx = self.shape[0]
        cells = []
        for g in range(len(self.valid)):
            ok = bool(self.valid[g])
            cells.append(
                {
                    "index": g,
                    "i": g % nx,
                    "j": g // nx,
                    "position": [float(self.cell_xy[g, 0]), float(self.cell_xy[g, 1])],
                    "pose": [float(self.pose_xy[g, 0]), float(self.pose_xy[g, 1])] if ok else None,
                    "theta_a": float(self.theta[g]) if ok else None,
                    "log_likelihood": float(self.log_likelihood[g]) if ok else None,
                    "raw": float(raw[g]),
                    "normalized": float(norm[g]),
                    "valid": ok,
                    "reason": self.reasons[g],
                }
            )
        return {
            "schema_version": HEATMAP_SCHEMA_VERSION,
            "category": self.category.value,
            "grid": {
                "origin": list(self.origin),
                "cell_size": list(self.cell_size),
                "shape": list(self.shape),
            },
            "half_extents": list(self.half_extents),
            "center_z": self.center_z,
            "best_cell": self.best_cell,
            "cells": cells,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"


@dataclass(frozen=True)
class RankedPose:
    cell: int
    position: Point2
    theta_a: float
    position_score: float
    orientation_score: float | None

    def as_dict(self) -> dict:
        return {
            "cell": self.cell,
            "position": [self.position.x, self.position.y],
            "theta_a": self.theta_a,
            "position_score": self.position_score,
            "orientation_score": self.orientation_score,
        }


@dataclass(frozen=True)
class PlacementRecommendation:
    category: Category
    half_extents: tuple[float, float, float]
    center_z: float
    poses: tuple[RankedPose, ...]

    @property
    def best(self) -> RankedPose:
        return self.poses[0]

    def to_object(self, obj_id: str, rank: int = 0) -> SceneObject:
        p = self.poses[rank]
        box = OrientedBox(p.position, self.center_z, self.half_extents, p.theta_a)
        return SceneObject(obj_id, self.category, box, self.category.symmetry is not Symmetry.SYMMETRIC)

    def to_dict(self) -> dict:
        return {
            "category": self.category.value,
            "half_extents": list(self.half_extents),
            "center_z": self.center_z,
            "poses": [p.as_dict() for p in self.poses],
        }


# ---------------------------------------------------------------------------


def _grid(shell, target: int):
    x0, y0, x1, y1 = shell.bounds()
    w, h = x1 - x0, y1 - y0

    def build(step):
        nx = max(1, int(round(w / step)))
        ny = max(1, int(round(h / step)))
        dx, dy = w / nx, h / ny
        ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
        xy = np.stack([x0 + (ii.ravel() + 0.5) * dx, y0 + (jj.ravel() + 0.5) * dy], axis=1)
        return nx, ny, dx, dy, xy

    step = math.sqrt(shell.area / target)
    nx, ny, dx, dy, xy = build(step)
    # one refinement so that in-polygon cells, not bounding-box cells, approach the target
    inside = int(shell.contains(xy).sum())
    if inside > 0 and inside != target:
        nx, ny, dx, dy, xy = build(step * math.sqrt(inside / target))
    return (x0, y0), (dx, dy), (nx, ny), xy


def _nearest_wall_normals(points: np.ndarray, shell) -> np.ndarray:
    d = _kernels.point_segment_distances(points, shell.wall_array)
    return shell.inward_normals()[np.argmin(d, axis=1)]


def rule_angle(position, shell) -> float:
    """Facing for wall-backed categories: the inward normal of the nearest wall."""
    n = _nearest_wall_normals(np.asarray(position, dtype=float).reshape(1, 2), shell)[0]
    return math.atan2(n[1], n[0])


@dataclass
class _Context:
    scene: Scene
    category: Category
    half_extents: tuple[float, float, float]
    center_z: float
    allowed: frozenset
    others: BoxArrays = field(init=False)

    def __post_init__(self):
        self.others = BoxArrays.from_objects(self.scene.objects)

    def fit(self, xy: np.ndarray, thetas: np.ndarray, snap: bool = True):
        """Wall-snapped pose centers plus a fit code per pose (0 ok, 1 no fit, 2 collision)."""
        shell = self.scene.shell
        q = BoxArrays.poses(xy, thetas, self.half_extents, self.center_z, self.category)
        if snap:
            xy = xy + push_inside(q.corners, shell)
            q = BoxArrays.poses(xy, thetas, self.half_extents, self.center_z, self.category)
        code = np.zeros(len(xy), dtype=np.int64)
        inside = footprints_inside(q.corners, shell) & shell.contains(xy)
        code[~inside] = 1
        hit = colliding(q, self.category, self.others, self.allowed)
        code[inside & hit] = 2
        return xy, code


def _resolve(model: KnowledgeModel, category, t: Thresholds | None, half_extents, center_z):
    cat = parse_category(category)
    prior = model.prior(cat)
    t = model.thresholds if t is None else t
    model.check_thresholds(t)
    ext = prior.mean_extents
    he = tuple(float(v) for v in (ext[:3] if half_extents is None else half_extents))
    if len(he) != 3 or min(he) < 0:
        raise ValueError("half_extents must be three non-negative numbers")
    cz = float(ext[3] if center_z is None else center_z)
    return cat, t, he, cz


@dataclass(frozen=True)
class CandidateGrid:
    """Grid geometry and the new object's position features at every valid cell.

    Independent of the density model, so one grid can be scored under several
    models that share thresholds.
    """

    category: Category
    origin: tuple[float, float]
    cell_size: tuple[float, float]
    shape: tuple[int, int]
    half_extents: tuple[float, float, float]
    center_z: float
    cell_xy: np.ndarray
    pose_xy: np.ndarray
    theta: np.ndarray
    code: np.ndarray  # 0 valid, -1 outside, 1 no fit, 2 collision
    rows: np.ndarray  # position features of valid cells, in cell order

    @property
    def valid(self) -> np.ndarray:
        return self.code == 0

    def heatmap(self, log_likelihood: np.ndarray) -> HeatMap:
        valid = self.valid
        logl = np.full(len(valid), -np.inf)
        logl[valid] = log_likelihood
        best = int(np.argmax(logl))
        reasons = tuple("" if k == 0 else OUTSIDE if k < 0 else NO_FIT if k == 1 else COLLISION for k in self.code)
        return HeatMap(
            category=self.category,
            origin=self.origin,
            cell_size=self.cell_size,
            shape=self.shape,
            half_extents=self.half_extents,
            center_z=self.center_z,
            cell_xy=self.cell_xy,
            pose_xy=self.pose_xy,
            theta=self.theta,
            log_likelihood=logl,
            valid=valid,
            reasons=reasons,
            best_cell=best,
        )


def _angle_sets(cat: Category, cells: np.ndarray, shell, spec: SamplingSpec, theta):
    n = len(cells)
    if theta is not None:
        return [np.full(n, float(theta))]
    if cat.symmetry is Symmetry.INSIDE_FACING:
        nrm = _nearest_wall_normals(cells, shell)
        return [np.arctan2(nrm[:, 1], nrm[:, 0])]
    return [np.full(n, a) for a in spec.angles()]


def candidate_grid(
    scene: Scene,
    category,
    half_extents,
    center_z: float,
    spec: SamplingSpec,
    t: Thresholds,
    theta: float | None = None,
) -> CandidateGrid:
    """Lay the grid and pick each valid cell's pose (first fitting angle)."""
    cat = parse_category(category)
    he = tuple(float(v) for v in half_extents)
    ctx = _Context(scene, cat, he, float(center_z), spec.allowed)
    shell = scene.shell
    origin, cell_size, shape, cells = _grid(shell, spec.target_samples)
    pose = cells.copy()
    thetas = np.zeros(len(cells))
    in_poly = shell.contains(cells)
    code = np.where(in_poly, 1, -1)
    open_cells = np.nonzero(in_poly)[0]
    for angles in _angle_sets(cat, cells, shell, spec, theta):
        if len(open_cells) == 0:
            break
        xy, c = ctx.fit(cells[open_cells], angles[open_cells])
        # keep the most informative failure: collision beats no-fit
        code[open_cells] = np.where(c == 0, 0, np.maximum(code[open_cells], c))
        ok = open_cells[c == 0]
        pose[ok] = xy[c == 0]
        thetas[ok] = angles[ok]
        open_cells = open_cells[c != 0]
    valid = code == 0
    if not valid.any():
        raise NoValidCellError(f"no valid cell for {cat.value}: the room has no free space for this footprint")
    q = BoxArrays.poses(pose[valid], thetas[valid], he, center_z, cat)
    rows = position_matrix(q, ctx.others, shell.wall_array, t)
    return CandidateGrid(
        cat,
        (float(origin[0]), float(origin[1])),
        (float(cell_size[0]), float(cell_size[1])),
        (int(shape[0]), int(shape[1])),
        he,
        float(center_z),
        cells,
        pose,
        thetas,
        code,
        rows,
    )


def _joint_grid(scene, cat, he, cz, model, spec, t):
    """Joint mode: each cell keeps the angle maximizing position plus orientation log-likelihood."""
    ctx = _Context(scene, cat, he, cz, spec.allowed)
    shell = scene.shell
    walls = shell.wall_array
    origin, cell_size, shape, cells = _grid(shell, spec.target_samples)
    n = len(cells)
    pose = cells.copy()
    thetas = np.zeros(n)
    logl = np.full(n, -np.inf)
    in_poly = shell.contains(cells)
    code = np.where(in_poly, 1, -1)
    idx = np.nonzero(in_poly)[0]
    for angles in _angle_sets(cat, cells, shell, spec, None):
        xy, c = ctx.fit(cells[idx], angles[idx])
        code[idx] = np.where(c == 0, 0, np.where(code[idx] == 0, 0, np.maximum(code[idx], c)))
        ok = idx[c == 0]
        if len(ok) == 0:
            continue
        q = BoxArrays.poses(xy[c == 0], angles[ok], he, cz, cat)
        score = model.position_log_likelihood(cat, position_matrix(q, ctx.others, walls, t))
        score = score + model.orientation_log_likelihood(cat, orientation_matrix(q, ctx.others, walls, t))
        better = score > logl[ok]  # strict: ties keep the lower angle index
        sel = ok[better]
        logl[sel] = score[better]
        pose[sel] = xy[c == 0][better]
        thetas[sel] = angles[sel]
    valid = code == 0
    if not valid.any():
        raise NoValidCellError(f"no valid cell for {cat.value}: the room has no free space for this footprint")
    grid = CandidateGrid(
        cat,
        (float(origin[0]), float(origin[1])),
        (float(cell_size[0]), float(cell_size[1])),
        (int(shape[0]), int(shape[1])),
        he,
        cz,
        cells,
        pose,
        thetas,
        code,
        np.zeros((int(valid.sum()), 0)),
    )
    return grid.heatmap(logl[valid])


def position_heatmap(
    scene: Scene,
    category,
    model: KnowledgeModel,
    spec: SamplingSpec | None = None,
    t: Thresholds | None = None,
    *,
    half_extents=None,
    center_z=None,
    theta: float | None = None,
) -> HeatMap:
    """Score a hypothetical new object on a grid over the room.

    Only the new object's position features are computed; existing objects
    keep theirs. A cell's pose orientation is ``theta`` when given, the wall
    rule for inside-facing categories, and otherwise the first sampled angle
    whose footprint fits (the best-scoring angle in joint mode).
    """
    spec = spec or SamplingSpec()
    cat, t, he, cz = _resolve(model, category, t, half_extents, center_z)
    if spec.joint and theta is None and cat.symmetry is Symmetry.ASYMMETRIC:
        return _joint_grid(scene, cat, he, cz, model, spec, t)
    grid = candidate_grid(scene, cat, he, cz, spec, t, theta)
    return grid.heatmap(model.position_log_likelihood(cat, grid.rows))


def _orientation_table(ctx: _Context, model, t, position, spec: SamplingSpec, enforce_fit: bool):
    """Per sampled angle: pose center, log-likelihood and whether the pose fits."""
    angles = spec.angles()
    xy = np.tile(np.asarray(position, dtype=float).reshape(1, 2), (len(angles), 1))
    if enforce_fit:
        xy, code = ctx.fit(xy, angles)
        ok = code == 0
    else:
        ok = np.ones(len(angles), dtype=bool)
    q = BoxArrays.poses(xy, angles, ctx.half_extents, ctx.center_z, ctx.category)
    rows = orientation_matrix(q, ctx.others, ctx.scene.shell.wall_array, t)
    return angles, xy, model.orientation_log_likelihood(ctx.category, rows), ok


def orientation_scores(
    scene: Scene,
    category,
    position,
    model: KnowledgeModel,
    spec: SamplingSpec | None = None,
    t: Thresholds | None = None,
    *,
    half_extents=None,
    center_z=None,
    enforce_fit: bool = True,
) -> list[tuple[float, float]]:
    """(theta, score) pairs at a fixed position, scores scaled so the best is 1.

    Symmetric categories give an empty list and inside-facing ones the single
    wall-rule angle. With ``enforce_fit`` angles whose footprint does not fit
    are dropped.
    """
    spec = spec or SamplingSpec()
    cat = parse_category(category)
    if cat.symmetry is Symmetry.SYMMETRIC:
        return []
    if cat.symmetry is Symmetry.INSIDE_FACING:
        return [(rule_angle(position, scene.shell), 1.0)]
    model._orientation_prior(cat)
    cat, t, he, cz = _resolve(model, cat, t, half_extents, center_z)
    ctx = _Context(scene, cat, he, cz, spec.allowed)
    angles, _, logl, ok = _orientation_table(ctx, model, t, position, spec, enforce_fit)
    if not ok.any():
        return []
    top = logl[ok].max()
    return [(float(a), float(math.exp(l - top))) for a, l, f in zip(angles, logl, ok) if f]


def place(
    scene: Scene,
    category,
    model: KnowledgeModel,
    spec: SamplingSpec | None = None,
    t: Thresholds | None = None,
    *,
    half_extents=None,
    center_z=None,
) -> tuple[PlacementRecommendation, HeatMap]:
    """Top-k poses: the best distinct cells, each with its best orientation."""
    spec = spec or SamplingSpec()
    hm = position_heatmap(scene, category, model, spec, t, half_extents=half_extents, center_z=center_z)
    cat = hm.category
    t = model.thresholds if t is None else t
    norm = hm.normalized
    ctx = _Context(scene, cat, hm.half_extents, hm.center_z, spec.allowed)
    poses = []
    for g in hm.ranked(spec.top_k):
        xy, theta = hm.pose_xy[g], float(hm.theta[g])
        o_score = None
        if cat.symmetry is Symmetry.INSIDE_FACING:
            o_score = 1.0
        elif cat.symmetry is Symmetry.ASYMMETRIC:
            angles, axy, logl, ok = _orientation_table(ctx, model, t, xy, spec, True)
            if not ok.any():
                o_score = None
            elif spec.joint:
                k = int(np.argmin(np.abs(angles - theta)))
                o_score = float(math.exp(logl[k] - logl[ok].max()))
            else:
                k = int(np.argmax(np.where(ok, logl, -np.inf)))
                xy, theta, o_score = axy[k], float(angles[k]), 1.0
        poses.append(RankedPose(int(g), Point2(float(xy[0]), float(xy[1])), theta, float(norm[g]), o_score))
    rec = PlacementRecommendation(cat, hm.half_extents, hm.center_z, tuple(poses))
    return rec, hm


@dataclass(frozen=True)
class PlacementStep:
    category: Category
    object_id: str
    recommendation: PlacementRecommendation
    heatmap: HeatMap


def fresh_id(scene: Scene, category: Category) -> str:
    taken = {o.id for o in scene.objects}
    k = 0
    while f"{category.value.lower()}_new_{k}" in taken:
        k += 1
    return f"{category.value.lower()}_new_{k}"


def place_iterative(
    scene: Scene,
    categories: Sequence,
    model: KnowledgeModel,
    spec: SamplingSpec | None = None,
    t: Thresholds | None = None,
) -> tuple[Scene, list[PlacementStep]]:
    """Place categories one after another, committing each best pose before the next."""
    current = scene
    steps = []
    for k, category in enumerate(categories):
        try:
            rec, hm = place(current, category, model, spec, t)
        except RoomAugError as exc:
            raise PlacementStepError(k + 1, str(category), current, exc) from exc
        oid = fresh_id(current, rec.category)
        current = current.with_object(rec.to_object(oid))
        steps.append(PlacementStep(rec.category, oid, rec, hm))
    return current, steps
