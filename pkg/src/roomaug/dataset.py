"""Scene records on disk, corpus loading and validation, and K-fold splits."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._io import atomic_write_text
from .errors import CorpusError, FoldError, GeometryError, RoomAugError, SceneValidationError
from .geometry import OrientedBox, RoomShell
from .scene_graph import Scene, SceneObject, parse_category

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SCENE_SUFFIX = ".scn"
CORPUS_MANIFEST = "manifest.json"
SYNTH_MANIFEST = "synth_manifest.json"
DEFAULT_AREA_BOUNDS = (4.0, 100.0)


def scene_to_record(scene: Scene) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": scene.name,
        "room_type": scene.room_type,
        "floor": [[p.x, p.y] for p in scene.shell.floor_polygon],
        "objects": [
            {
                "id": o.id,
                "category": o.category.value,
                "center": [o.box.center.x, o.box.center.y, o.box.center_z],
                "half_extents": list(o.box.half_extents),
                "theta_a": o.box.theta_a,
                "has_known_facing": o.has_known_facing,
            }
            for o in scene.objects
        ],
    }


def _finite(values, what):
    vals = [float(v) for v in values]
    if not all(math.isfinite(v) for v in vals):
        raise SceneValidationError(f"non-finite value in {what}")
    return vals


def record_to_scene(record: dict) -> Scene:
    """Parse and validate one scene record; raises SceneValidationError with a reason."""
    if not isinstance(record, dict):
        raise SceneValidationError("scene record must be an object")
    version = record.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SceneValidationError(f"unsupported schema_version {version!r}")
    try:
        floor = [_finite(p, "floor") for p in record["floor"]]
        if any(len(p) != 2 for p in floor):
            raise SceneValidationError("floor vertices need two coordinates")
        try:
            shell = RoomShell(tuple(tuple(p) for p in floor))
        except GeometryError as exc:
            raise SceneValidationError(f"invalid floor polygon: {exc}") from None
        objects = []
        for raw in record.get("objects", []):
            cat = parse_category(raw["category"])
            c = _finite(raw["center"], "center")
            h = _finite(raw["half_extents"], "half_extents")
            (theta,) = _finite([raw.get("theta_a", 0.0)], "theta_a")
            if len(c) != 3 or len(h) != 3:
                raise SceneValidationError("center and half_extents need three entries")
            try:
                box = OrientedBox((c[0], c[1]), c[2], tuple(h), theta)
            except GeometryError as exc:
                raise SceneValidationError(str(exc)) from None
            objects.append(SceneObject(str(raw["id"]), cat, box, bool(raw.get("has_known_facing", False))))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SceneValidationError):
            raise
        raise SceneValidationError(f"malformed scene record: {exc!r}") from None
    return Scene(shell, tuple(objects), str(record.get("room_type", "")), str(record.get("name", "")))


def dumps_scene(scene: Scene) -> str:
    return json.dumps(scene_to_record(scene), indent=1) + "\n"


def loads_scene(text: str) -> Scene:
    try:
        record = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneValidationError(f"scene file is not valid JSON: {exc}") from None
    return record_to_scene(record)


def save_scene(scene: Scene, path) -> None:
    atomic_write_text(path, dumps_scene(scene))


def load_scene(path) -> Scene:
    return loads_scene(Path(path).read_text(encoding="utf-8"))


@dataclass
class CorpusReport:
    accepted: list[str] = field(default_factory=list)
    rejected: list[tuple[str, str]] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"accepted": list(self.accepted), "rejected": [list(r) for r in self.rejected]}


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_corpus(source, area_bounds: tuple[float, float] = DEFAULT_AREA_BOUNDS) -> tuple[list[Scene], CorpusReport]:
    """Load every ``*.scn`` file in a directory, rejecting invalid or outlier-area rooms.

    A ``manifest.json`` in the directory, when present, is used to verify file
    checksums. Unreadable files are rejected individually; the load fails only if
    nothing usable remains.
    """
    root = Path(source)
    if not root.is_dir():
        raise CorpusError(f"corpus directory {root} does not exist")
    checksums = {}
    manifest_path = root / CORPUS_MANIFEST
    if manifest_path.exists():
        try:
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            checksums = {f["file"]: f["sha256"] for f in manifest.get("files", [])}
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            log.warning("ignoring unreadable corpus manifest: %s", exc)
    lo, hi = area_bounds
    scenes, report = [], CorpusReport()
    for path in sorted(root.glob(f"*{SCENE_SUFFIX}")):
        try:
            data = path.read_bytes()
        except OSError as exc:
            report.rejected.append((path.name, f"unreadable file: {exc}"))
            continue
        expected = checksums.get(path.name)
        if expected is not None and expected != _sha256(data):
            report.rejected.append((path.name, "checksum mismatch with corpus manifest"))
            continue
        try:
            scene = loads_scene(data.decode("utf-8"))
        except UnicodeDecodeError:
            report.rejected.append((path.name, "file is not UTF-8 text"))
            continue
        except RoomAugError as exc:
            report.rejected.append((path.name, str(exc)))
            continue
        area = scene.shell.area
        if not lo <= area <= hi:
            report.rejected.append((path.name, f"outlier area {area:.2f} m^2 outside [{lo}, {hi}]"))
            continue
        if not scene.name:
            scene = Scene(scene.shell, scene.objects, scene.room_type, path.stem)
        scenes.append(scene)
        report.accepted.append(path.name)
    for name, reason in report.rejected:
        log.warning("rejected %s: %s", name, reason)
    if not scenes:
        raise CorpusError(f"no valid scenes in {root}")
    return scenes, report


def write_corpus(scenes: Sequence[Scene], directory, synth_manifest: dict | None = None) -> Path:
    """Write scenes as ``<name>.scn`` plus a checksummed corpus manifest."""
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    files = []
    for k, scene in enumerate(scenes):
        name = scene.name or f"scene_{k:05d}"
        text = dumps_scene(scene)
        fname = f"{name}{SCENE_SUFFIX}"
        atomic_write_text(root / fname, text)
        files.append({"file": fname, "sha256": _sha256(text.encode("utf-8"))})
    manifest = {"schema_version": SCHEMA_VERSION, "files": files}
    atomic_write_text(root / CORPUS_MANIFEST, json.dumps(manifest, indent=1) + "\n")
    if synth_manifest is not None:
        atomic_write_text(root / SYNTH_MANIFEST, json.dumps(synth_manifest, indent=1) + "\n")
    return root


@dataclass(frozen=True)
class FoldSplit:
    """K disjoint partitions of corpus indices."""

    folds: tuple[tuple[int, ...], ...]
    seed: int

    @property
    def k(self) -> int:
        return len(self.folds)

    def validation(self, fold: int) -> tuple[int, ...]:
        return self.folds[fold]

    def training(self, fold: int) -> tuple[int, ...]:
        return tuple(sorted(i for f, part in enumerate(self.folds) if f != fold for i in part))


def kfold(corpus: Sequence | int, k: int, seed: int = 0) -> FoldSplit:
    """Seeded shuffle, then round-robin assignment; fold sizes differ by at most one."""
    n = corpus if isinstance(corpus, int) else len(corpus)
    if k < 2:
        raise FoldError("K must be at least 2")
    if n < k:
        raise FoldError(f"cannot split {n} scenes into {k} folds")
    order = np.random.default_rng(seed).permutation(n)
    return FoldSplit(tuple(tuple(sorted(int(i) for i in order[f::k])) for f in range(k)), seed)
