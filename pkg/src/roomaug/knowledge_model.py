"""Knowledge model: pooled per-category feature rows with fitted densities.

Position rows are collected for every non-Other category; orientation rows only
for Asymmetric objects with a known facing direction. Each category needs at
least two rows before a density is fitted; smaller categories stay queryable
only as "untrained".
"""

from __future__ import annotations

import json
import logging
import math
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kde
from ._io import atomic_write_bytes
from .errors import (
    DensityError,
    ModelChecksumError,
    ModelFileError,
    ModelTruncatedError,
    ModelVersionError,
    OrientationRuleError,
    ThresholdMismatchError,
    TrainingError,
    UntrainedCategoryError,
)
from .geometry import Thresholds
from .scene_graph import (
    CATEGORIES,
    M,
    ORIENTATION_LENGTH,
    POSITION_LENGTH,
    Category,
    OrientationFeatures,
    PositionFeatures,
    Scene,
    Symmetry,
    extract_features,
    has_orientation_features,
    parse_category,
)

log = logging.getLogger(__name__)

AD_BANDWIDTH = 0.1
MIN_ROWS = 2

POSITION_FEATURES = ("RP", "AD", "SP", "S")
ORIENTATION_FEATURES = ("RP", "TC", "DS", "F", "NT")
_ALIASES = {"C": "TC"}

_POSITION_SLICES = {
    "RP": slice(0, 1),
    "AD": slice(1, 1 + M),
    "SP": slice(1 + M, 1 + 2 * M),
    "S": slice(1 + 2 * M, 1 + 3 * M),
}
_ORIENTATION_SLICES = {
    "RP": slice(0, 1),
    "TC": slice(1, 2),
    "DS": slice(2, 4),
    "F": slice(4, 4 + M),
    "NT": slice(4 + M, 4 + 2 * M),
}


def _labels(kind: str) -> list[str]:
    names = [c.value for c in CATEGORIES]
    if kind == "position":
        return ["RP"] + [f"AD[{n}]" for n in names] + [f"SP[{n}]" for n in names] + [f"S[{n}]" for n in names]
    return ["RP", "TC", "DS[same]", "DS[opp]"] + [f"F[{n}]" for n in names] + [f"NT[{n}]" for n in names]


POSITION_LABELS = tuple(_labels("position"))
ORIENTATION_LABELS = tuple(_labels("orientation"))


def _normalize(names, allowed, what) -> tuple[str, ...]:
    if isinstance(names, str):
        names = [p for p in names.replace(",", "+").split("+") if p.strip()]
    picked = {_ALIASES.get(n.strip().upper(), n.strip().upper()) for n in names}
    unknown = picked - set(allowed)
    if unknown:
        raise ValueError(f"unknown {what} features: {sorted(unknown)}")
    if not picked:
        raise ValueError(f"{what} selection must not be empty")
    return tuple(f for f in allowed if f in picked)


@dataclass(frozen=True)
class FeatureSelection:
    position: tuple[str, ...] = ("RP", "AD", "S")
    orientation: tuple[str, ...] = ("RP", "TC", "F")

    def __post_init__(self):
        object.__setattr__(self, "position", _normalize(self.position, POSITION_FEATURES, "position"))
        object.__setattr__(self, "orientation", _normalize(self.orientation, ORIENTATION_FEATURES, "orientation"))

    def position_columns(self) -> np.ndarray:
        return np.concatenate([np.arange(POSITION_LENGTH)[_POSITION_SLICES[f]] for f in self.position])

    def orientation_columns(self) -> np.ndarray:
        return np.concatenate([np.arange(ORIENTATION_LENGTH)[_ORIENTATION_SLICES[f]] for f in self.orientation])

    def as_dict(self) -> dict:
        return {"position": list(self.position), "orientation": list(self.orientation)}

    @staticmethod
    def label(names: Sequence[str]) -> str:
        return "+".join(names)


def _position_kinds(cols: np.ndarray) -> tuple[list, dict]:
    ad = _POSITION_SLICES["AD"]
    kinds, overrides = [], {}
    for j, c in enumerate(cols):
        if ad.start <= c < ad.stop:
            kinds.append(kde.VariableKind.CONTINUOUS)
            overrides[j] = AD_BANDWIDTH
        else:
            kinds.append(kde.VariableKind.ORDERED)
    return kinds, overrides


@dataclass(frozen=True)
class CategoryPrior:
    category: Category
    position_samples: np.ndarray
    orientation_samples: np.ndarray | None
    mean_extents: np.ndarray  # (hx, hy, hz, center_z)
    position_density: kde.DensityModel | None = None
    orientation_density: kde.DensityModel | None = None


@dataclass(frozen=True)
class KnowledgeModel:
    thresholds: Thresholds
    selection: FeatureSelection
    priors: dict = field(default_factory=dict)
    dataset_id: str = ""
    trained_at: str = ""

    @property
    def taxonomy(self) -> tuple[Category, ...]:
        return CATEGORIES

    def trained_categories(self) -> list[Category]:
        return [c for c in CATEGORIES if c in self.priors and self.priors[c].position_density is not None]

    def row_counts(self) -> dict[str, tuple[int, int]]:
        out = {}
        for c, p in self.priors.items():
            no = 0 if p.orientation_samples is None else len(p.orientation_samples)
            out[c.value] = (len(p.position_samples), no)
        return out

    def check_thresholds(self, t: Thresholds | None):
        if t is not None and t != self.thresholds:
            raise ThresholdMismatchError(
                "features were extracted with thresholds that differ from the model's training thresholds"
            )

    def prior(self, category) -> CategoryPrior:
        c = parse_category(category)
        p = self.priors.get(c)
        if p is None or p.position_density is None:
            raise UntrainedCategoryError(f"category {c.value} is not trained in this model")
        return p

    def default_extents(self, category) -> np.ndarray:
        return self.prior(category).mean_extents.copy()

    # --- batched log-likelihoods (rows are full-length feature vectors) ---

    def position_log_likelihood(self, category, rows: np.ndarray) -> np.ndarray:
        p = self.prior(category)
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != POSITION_LENGTH:
            raise DensityError(f"position rows must have length {POSITION_LENGTH}")
        return p.position_density.log_pdf(rows[:, self.selection.position_columns()])

    def orientation_log_likelihood(self, category, rows: np.ndarray) -> np.ndarray:
        p = self._orientation_prior(category)
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.shape[1] != ORIENTATION_LENGTH:
            raise DensityError(f"orientation rows must have length {ORIENTATION_LENGTH}")
        return p.orientation_density.log_pdf(rows[:, self.selection.orientation_columns()])

    def _orientation_prior(self, category) -> CategoryPrior:
        c = parse_category(category)
        if c.symmetry is not Symmetry.ASYMMETRIC:
            raise OrientationRuleError(
                f"{c.value} is {c.symmetry.value}: its orientation follows from the adjacent wall "
                "or it has no facing direction, so no orientation likelihood exists"
            )
        p = self.priors.get(c)
        if p is None or p.orientation_density is None:
            raise UntrainedCategoryError(f"orientation model for {c.value} is not trained")
        return p


def _project(vec, full_len: int, cols: np.ndarray) -> np.ndarray:
    v = np.asarray(vec.vector() if hasattr(vec, "vector") else vec, dtype=float).reshape(-1)
    if v.shape[0] == full_len:
        return v[cols]
    if v.shape[0] == len(cols):
        return v
    raise DensityError(f"feature vector has length {v.shape[0]}; expected {full_len} or {len(cols)}")


def likelihood_position(model: KnowledgeModel, category, d_p, thresholds: Thresholds | None = None) -> float:
    """Density of the category's position prior at ``d_p`` (full or projected vector)."""
    model.check_thresholds(thresholds)
    p = model.prior(category)
    x = _project(d_p, POSITION_LENGTH, model.selection.position_columns())
    return float(p.position_density.pdf(x))


def likelihood_orientation(model: KnowledgeModel, category, d_o, thresholds: Thresholds | None = None) -> float:
    model.check_thresholds(thresholds)
    p = model._orientation_prior(category)
    x = _project(d_o, ORIENTATION_LENGTH, model.selection.orientation_columns())
    return float(p.orientation_density.pdf(x))


def _fit_priors(
    category: Category,
    pos: np.ndarray,
    ori: np.ndarray | None,
    extents: np.ndarray,
    sel: FeatureSelection,
    pos_bw: np.ndarray | None = None,
    ori_bw: np.ndarray | None = None,
) -> CategoryPrior:
    pos_density = ori_density = None
    pcols = sel.position_columns()
    kinds, overrides = _position_kinds(pcols)
    labels = [POSITION_LABELS[c] for c in pcols]
    if len(pos) >= MIN_ROWS:
        if pos_bw is None:
            pos_density = kde.fit(pos[:, pcols], kinds, overrides, labels)
        else:
            pos_density = kde.DensityModel(pos[:, pcols], tuple(kinds), pos_bw, tuple(labels))
    if ori is not None and len(ori) >= MIN_ROWS:
        ocols = sel.orientation_columns()
        okinds = [kde.VariableKind.ORDERED] * len(ocols)
        olabels = [ORIENTATION_LABELS[c] for c in ocols]
        if ori_bw is None:
            ori_density = kde.fit(ori[:, ocols], okinds, None, olabels)
        else:
            ori_density = kde.DensityModel(ori[:, ocols], tuple(okinds), ori_bw, tuple(olabels))
    return CategoryPrior(category, pos, ori, extents, pos_density, ori_density)


def collect_rows(scenes: Iterable[Scene], t: Thresholds):
    """Pool feature rows and box sizes per category across scenes."""
    pos = {c: [] for c in CATEGORIES if c is not Category.OTHER}
    ori = {c: [] for c in CATEGORIES if c.symmetry is Symmetry.ASYMMETRIC}
    ext = {c: [] for c in pos}
    for scene in scenes:
        graph = extract_features(scene, t)
        for o in scene.objects:
            if o.category is Category.OTHER:
                continue
            pos[o.category].append(graph.position[o.id].vector())
            ext[o.category].append((*o.box.half_extents, o.box.center_z))
            if has_orientation_features(o):
                ori[o.category].append(graph.orientation[o.id].vector())
    return pos, ori, ext


def train(
    scenes: Sequence[Scene],
    t: Thresholds | None = None,
    sel: FeatureSelection | None = None,
    dataset_id: str = "",
    trained_at: str = "",
) -> KnowledgeModel:
    """Extract scene graphs, pool rows per category and fit one density per prior.

    ``trained_at`` is recorded verbatim; it defaults to empty so identical inputs
    produce byte-identical model files.
    """
    t = t or Thresholds()
    scenes = list(scenes)
    if not scenes:
        raise TrainingError("training needs at least one scene")
    pos, ori, ext = collect_rows(scenes, t)
    return fit_rows(pos, ori, ext, t, sel, dataset_id, trained_at)


def fit_rows(pos, ori, ext, t: Thresholds, sel: FeatureSelection | None = None, dataset_id: str = "",
             trained_at: str = "") -> KnowledgeModel:
    """Fit priors from pooled rows as returned by :func:`collect_rows`."""
    sel = sel or FeatureSelection()
    priors = {}
    for c in pos:
        if not pos[c]:
            continue
        p = np.array(pos[c], dtype=float)
        o = np.array(ori[c], dtype=float).reshape(-1, ORIENTATION_LENGTH) if c in ori else None
        e = np.mean(np.array(ext[c], dtype=float), axis=0)
        priors[c] = _fit_priors(c, p, o, e, sel)
    model = KnowledgeModel(t, sel, priors, dataset_id, trained_at)
    if not model.trained_categories():
        raise TrainingError("no category has enough rows to fit a density")
    for c in CATEGORIES:
        if c is not Category.OTHER and c not in model.trained_categories():
            n = len(pos.get(c, ()))
            # absent categories are routine (focused corpora, CV folds); too few rows is worth a warning
            log.log(logging.WARNING if n else logging.INFO, "category %s is untrained (%d rows)", c.value, n)
    return model


# ---------------------------------------------------------------------------
# priors report
# ---------------------------------------------------------------------------


def _histogram(values: np.ndarray, cap: int = 2) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    n = max(len(v), 1)
    out = {str(k): float(np.sum(v == k)) / n for k in range(cap)}
    out[f"{cap}+"] = float(np.sum(v >= cap)) / n
    return out


def priors_summary(model: KnowledgeModel) -> dict:
    """Empirical marginal frequencies of the stored rows for every trained category."""
    names = [c.value for c in CATEGORIES]
    report = {}
    for c in model.trained_categories():
        p = model.priors[c]
        rows = p.position_samples
        entry = {
            "rows": int(len(rows)),
            "room_position": _histogram(rows[:, 0]),
            "surrounded_by": {
                names[g]: _histogram(rows[:, _POSITION_SLICES["S"].start + g]) for g in range(M)
            },
        }
        if p.orientation_samples is not None and len(p.orientation_samples):
            o = p.orientation_samples
            entry["orientation_rows"] = int(len(o))
            entry["facing"] = {names[g]: _histogram(o[:, _ORIENTATION_SLICES["F"].start + g]) for g in range(M)}
            entry["towards_center"] = float(np.mean(o[:, 1]))
        report[c.value] = entry
    return report


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------

MAGIC = b"RAKM"
FORMAT_MAJOR = 1
FORMAT_MINOR = 0
_PREFIX = struct.Struct("<4sHHQI")  # magic, major, minor, total length, header length


def _f64(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def to_bytes(model: KnowledgeModel) -> bytes:
    blocks, payload = [], []

    def add(cat, name, arr):
        arr = np.asarray(arr, dtype=float)
        blocks.append({"category": cat.value, "name": name, "shape": list(arr.shape)})
        payload.append(_f64(arr))

    for c in CATEGORIES:
        p = model.priors.get(c)
        if p is None:
            continue
        add(c, "position_samples", p.position_samples)
        add(c, "mean_extents", p.mean_extents)
        if p.position_density is not None:
            add(c, "position_bandwidths", p.position_density.bandwidths)
        if p.orientation_samples is not None:
            add(c, "orientation_samples", p.orientation_samples)
            if p.orientation_density is not None:
                add(c, "orientation_bandwidths", p.orientation_density.bandwidths)
    header = {
        "format_version": [FORMAT_MAJOR, FORMAT_MINOR],
        "m": M,
        "categories": [c.value for c in CATEGORIES],
        "selection": model.selection.as_dict(),
        "thresholds": model.thresholds.as_dict(),
        "row_counts": {k: list(v) for k, v in model.row_counts().items()},
        "dataset_id": model.dataset_id,
        "trained_at": model.trained_at,
        "blocks": blocks,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(payload)
    total = _PREFIX.size + len(hb) + len(body) + 4
    head = _PREFIX.pack(MAGIC, FORMAT_MAJOR, FORMAT_MINOR, total, len(hb))
    data = head + hb + body
    return data + struct.pack("<I", zlib.crc32(data) & 0xFFFFFFFF)


def from_bytes(data: bytes) -> KnowledgeModel:
    if len(data) < _PREFIX.size:
        raise ModelTruncatedError("model file is shorter than its fixed header")
    magic, major, minor, total, hlen = _PREFIX.unpack_from(data, 0)
    if magic != MAGIC:
        raise ModelFileError("not a knowledge model file (bad magic)")
    if major > FORMAT_MAJOR:
        raise ModelVersionError(f"model format {major}.{minor} is newer than supported {FORMAT_MAJOR}.x")
    if len(data) < total:
        raise ModelTruncatedError(f"model file is truncated ({len(data)} of {total} bytes)")
    if len(data) != total:
        raise ModelChecksumError("model file length does not match its header")
    (crc,) = struct.unpack_from("<I", data, total - 4)
    if zlib.crc32(data[: total - 4]) & 0xFFFFFFFF != crc:
        raise ModelChecksumError("model file checksum mismatch")
    try:
        header = json.loads(data[_PREFIX.size : _PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"model header is unreadable: {exc}") from exc
    if header.get("m") != M or header.get("categories") != [c.value for c in CATEGORIES]:
        raise ModelFileError("model taxonomy does not match this build")
    offset = _PREFIX.size + hlen
    arrays: dict = {}
    for b in header["blocks"]:
        shape = tuple(b["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > total - 4:
            raise ModelTruncatedError("model payload is shorter than its block table")
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64).reshape(shape)
        arrays.setdefault(b["category"], {})[b["name"]] = arr
        offset += nbytes
    sel = FeatureSelection(**header["selection"])
    t = Thresholds(**header["thresholds"])
    priors = {}
    for name, a in arrays.items():
        c = parse_category(name)
        priors[c] = _fit_priors(
            c,
            a["position_samples"],
            a.get("orientation_samples"),
            a["mean_extents"],
            sel,
            a.get("position_bandwidths"),
            a.get("orientation_bandwidths"),
        )
    return KnowledgeModel(t, sel, priors, header.get("dataset_id", ""), header.get("trained_at", ""))


def save(model: KnowledgeModel, destination) -> bytes:
    data = to_bytes(model)
    atomic_write_bytes(destination, data)
    return data


def load(source) -> KnowledgeModel:
    return from_bytes(Path(source).read_bytes())


def model_checksum(model: KnowledgeModel) -> str:
    """The file's CRC32 trailer as hex. (A CRC over the whole file, trailer included, is a constant.)"""
    data = to_bytes(model)
    return f"{zlib.crc32(data[:-4]) & 0xFFFFFFFF:08x}"
