"""Footprint containment, wall snapping and the overlap policy."""

from __future__ import annotations

import numpy as np

from . import _kernels
from .geometry import RoomShell
from .scene_graph import CATEGORIES, BoxArrays, Category

C = Category
# natural stacking / wall-mounting pairs whose footprints may overlap
DEFAULT_ALLOWED_OVERLAPS = frozenset(
    frozenset(p)
    for p in [
        (C.DECOR, C.TABLE),
        (C.DECOR, C.STORAGE),
        (C.PICTURE, C.STORAGE),
        (C.PICTURE, C.SOFA),
        (C.PICTURE, C.BED),
        (C.PICTURE, C.TABLE),
        (C.PICTURE, C.TV),
        (C.TV, C.STORAGE),
    ]
)


def allowed_pair(a: Category, b: Category, allow=DEFAULT_ALLOWED_OVERLAPS) -> bool:
    return frozenset((a, b)) in allow


def footprints_inside(corners: np.ndarray, shell: RoomShell, tol: float = 1e-7) -> np.ndarray:
    """Whether each footprint (k, 4, 2) lies within the floor polygon (boundary contact allowed)."""
    k = corners.shape[0]
    if k == 0:
        return np.zeros(0, dtype=bool)
    inside = shell.contains(corners.reshape(-1, 2), tol).reshape(k, 4).all(axis=1)
    v = shell.vertices
    e = np.roll(corners, -1, axis=1) - corners  # (k, 4, 2)
    rel = v[None, :, None, :] - corners[:, None, :, :]  # (k, nv, 4, 2)
    cr = e[:, None, :, 0] * rel[..., 1] - e[:, None, :, 1] * rel[..., 0]
    vertex_inside = np.all(cr > tol, axis=2).any(axis=1)
    return inside & ~vertex_inside


def push_inside(corners: np.ndarray, shell: RoomShell, iterations: int = 6) -> np.ndarray:
    """Translations (k, 2) that slide footprints off the walls they poke through.

    Only corners that project onto a wall segment are considered, so the push
    also behaves near reflex corners. Callers must re-check containment.
    """
    k = corners.shape[0]
    shift = np.zeros((k, 2))
    if k == 0:
        return shift
    segs = shell.wall_array
    normals = shell.inward_normals()
    reach = np.max(np.linalg.norm(corners - corners.mean(axis=1, keepdims=True), axis=2), axis=1) * 2.0
    for _ in range(iterations):
        moved = False
        for w in range(len(segs)):
            a, b = segs[w]
            d = b - a
            length = float(np.hypot(*d))
            u = ((corners + shift[:, None, :] - a) @ d) / length
            s = (corners + shift[:, None, :] - a) @ normals[w]
            relevant = (u >= -1e-9) & (u <= length + 1e-9) & (s < 0.0) & (s > -reach[:, None])
            pen = np.where(relevant, -s, 0.0).max(axis=1)
            if np.any(pen > 0.0):
                shift += pen[:, None] * normals[w][None, :]
                moved = True
        if not moved:
            break
    return shift


def colliding(cand: BoxArrays, category: Category, others: BoxArrays, allow=DEFAULT_ALLOWED_OVERLAPS) -> np.ndarray:
    """Whether each candidate footprint overlaps an existing object it may not overlap."""
    if len(others) == 0 or len(cand) == 0:
        return np.zeros(len(cand), dtype=bool)
    ok = np.array([allowed_pair(category, CATEGORIES[int(c)], allow) for c in others.cats])
    ov = _kernels.footprint_overlaps(cand.corners, others.corners)
    return np.any(ov & ~ok[None, :], axis=1)
