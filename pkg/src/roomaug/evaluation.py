"""Remove-and-re-predict ablation over K folds.

Position: each validation object is removed and its position re-predicted
with its true footprint and orientation; the distance from the true center to
the top-1 cell and to the nearest of the top-k cells is recorded. Orientation:
the object stays at its true position and the best sampled angle is compared
with the true one.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import SamplingSpec, candidate_grid
from .dataset import kfold
from .errors import NoValidCellError
from .geometry import TWO_PI, Thresholds
from .knowledge_model import FeatureSelection, collect_rows, fit_rows
from .scene_graph import CATEGORIES, BoxArrays, Category, Scene, has_orientation_features, orientation_matrix

POSITION_VARIANTS = ("AD+S+RP", "AD+RP", "S+RP", "RP")
ORIENTATION_VARIANTS = ("F+C+RP", "F", "F+C", "F+C+NT", "F+C+DS", "F+C+DS+NT")


def angular_distance(theta1, theta2):
    """Smallest absolute angle between two directions, in [0, pi]."""
    d = np.abs(np.fmod(np.asarray(theta1, dtype=float) - np.asarray(theta2, dtype=float), TWO_PI))
    out = np.minimum(d, TWO_PI - d)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AblationConfig:
    task: str = "position"
    variants: tuple[str, ...] = ()
    k: int = 4
    seed: int = 0
    top_k: int = 5
    spec: SamplingSpec = field(default_factory=SamplingSpec)

    def __post_init__(self):
        if self.task not in ("position", "orientation"):
            raise ValueError("task must be 'position' or 'orientation'")
        if not self.variants:
            default = POSITION_VARIANTS if self.task == "position" else ORIENTATION_VARIANTS
            object.__setattr__(self, "variants", default)
        if self.top_k < 1:
            raise ValueError("top_k must be at least 1")

    def selections(self) -> list[tuple[str, FeatureSelection]]:
        out = []
        for v in self.variants:
            sel = FeatureSelection(position=v) if self.task == "position" else FeatureSelection(orientation=v)
            names = sel.position if self.task == "position" else sel.orientation
            out.append((_label(names, self.task), sel))
        return out


def _label(names, task) -> str:
    order = ("AD", "S", "SP", "RP") if task == "position" else ("F", "TC", "DS", "NT", "RP")
    short = {"TC": "C"}
    return "+".join(short.get(n, n) for n in sorted(names, key=order.index))


@dataclass(frozen=True)
class SampleRecord:
    variant: str
    fold: int
    scene: str
    object_id: str
    category: Category
    value: float  # top-1 distance (m) or angular error (rad)
    value_topk: float | None = None  # nearest-of-top-k distance, position only


@dataclass
class EvalReport:
    task: str
    variants: list[str]
    top_k: int
    records: list[SampleRecord] = field(default_factory=list)
    skipped: list[tuple[str, str, str, str]] = field(default_factory=list)  # scene, object, category, reason

    def metrics(self) -> list[str]:
        return ["top1", f"top{self.top_k}"] if self.task == "position" else ["angular"]

    def _values(self, rec: SampleRecord, metric: str) -> float:
        return rec.value_topk if metric.startswith("top") and metric != "top1" else rec.value

    def categories(self) -> list[Category]:
        present = {r.category for r in self.records}
        return [c for c in CATEGORIES if c in present]

    def table(self, metric: str | None = None) -> dict[str, dict[str, float]]:
        """Mean per (variant, category) plus an 'Overall' column over all samples."""
        metric = metric or self.metrics()[0]
        out = {}
        for v in self.variants:
            recs = [r for r in self.records if r.variant == v]
            row = {}
            for c in self.categories():
                vals = [self._values(r, metric) for r in recs if r.category is c]
                row[c.value] = float(np.mean(vals)) if vals else float("nan")
            row["Overall"] = float(np.mean([self._values(r, metric) for r in recs])) if recs else float("nan")
            out[v] = row
        return out

    def mean(self, variant: str, metric: str | None = None) -> float:
        return self.table(metric)[variant]["Overall"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cats = [c.value for c in self.categories()]
        w.writerow(["metric", "variant", *cats, "Overall"])
        for metric in self.metrics():
            for v, row in self.table(metric).items():
                w.writerow([metric, v, *(f"{row[c]:.6f}" for c in cats), f"{row['Overall']:.6f}"])
        counts = {c.value: 0 for c in self.categories()}
        for r in self.records:
            if r.variant == self.variants[0]:
                counts[r.category.value] += 1
        w.writerow(["samples", "", *(counts[c] for c in cats), sum(counts.values())])
        w.writerow(["skipped", "", *("" for _ in cats), len(self.skipped)])
        return buf.getvalue()

    def cdf(self, variant: str, metric: str | None = None) -> tuple[np.ndarray, np.ndarray]:
        metric = metric or self.metrics()[0]
        vals = np.sort([self._values(r, metric) for r in self.records if r.variant == variant])
        frac = np.arange(1, len(vals) + 1) / max(len(vals), 1)
        return vals, frac

    def cdf_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "variant", "value", "fraction"])
        for metric in self.metrics():
            for v in self.variants:
                vals, frac = self.cdf(v, metric)
                for x, f in zip(vals, frac):
                    w.writerow([metric, v, f"{x:.6f}", f"{f:.6f}"])
        return buf.getvalue()

    def samples_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "fold", "scene", "object_id", "category", "value", "value_topk"])
        for r in self.records:
            w.writerow([r.variant, r.fold, r.scene, r.object_id, r.category.value, f"{r.value:.6f}",
                        "" if r.value_topk is None else f"{r.value_topk:.6f}"])
        return buf.getvalue()


def _merge_rows(parts):
    pos, ori, ext = {}, {}, {}
    for p, o, e in parts:
        for c, rows in p.items():
            pos.setdefault(c, []).extend(rows)
        for c, rows in o.items():
            ori.setdefault(c, []).extend(rows)
        for c, rows in e.items():
            ext.setdefault(c, []).extend(rows)
    return pos, ori, ext


def _scene_name(scene: Scene, k: int) -> str:
    return scene.name or f"scene_{k:05d}"


def _run(corpus: Sequence[Scene], config: AblationConfig, t: Thresholds, evaluate) -> EvalReport:
    corpus = list(corpus)
    split = kfold(corpus, config.k, config.seed)
    selections = config.selections()
    report = EvalReport(config.task, [label for label, _ in selections], config.top_k)
    per_scene = [collect_rows([s], t) for s in corpus]
    for fold in range(split.k):
        rows = _merge_rows(per_scene[i] for i in split.training(fold))
        models = [(label, fit_rows(*rows, t, sel)) for label, sel in selections]
        for i in split.validation(fold):
            evaluate(report, fold, _scene_name(corpus[i], i), corpus[i], models)
    return report


def eval_position(corpus: Sequence[Scene], config: AblationConfig | None = None,
                  t: Thresholds | None = None) -> EvalReport:
    config = config or AblationConfig("position")
    t = t or Thresholds()
    spec = SamplingSpec(
        target_samples=config.spec.target_samples,
        orientation_count=config.spec.orientation_count,
        collision_policy=config.spec.collision_policy,
        overlap_allow_list=config.spec.overlap_allow_list,
        top_k=config.top_k,
    )

    def evaluate(report, fold, name, scene, models):
        for o in scene.objects:
            if o.category is Category.OTHER:
                continue
            if any(o.category not in m.trained_categories() for _, m in models):
                report.skipped.append((name, o.id, o.category.value, "category untrained in fold"))
                continue
            try:
                grid = candidate_grid(scene.without(o.id), o.category, o.box.half_extents, o.box.center_z,
                                      spec, t, theta=o.box.theta_a)
            except NoValidCellError:
                report.skipped.append((name, o.id, o.category.value, "no valid cell"))
                continue
            truth = np.array(o.center)
            for label, m in models:
                hm = grid.heatmap(m.position_log_likelihood(o.category, grid.rows))
                top = hm.ranked(config.top_k)
                d = np.linalg.norm(hm.pose_xy[top] - truth, axis=1)
                report.records.append(SampleRecord(label, fold, name, o.id, o.category, float(d[0]), float(d.min())))

    return _run(corpus, config, t, evaluate)


def eval_orientation(corpus: Sequence[Scene], config: AblationConfig | None = None,
                     t: Thresholds | None = None) -> EvalReport:
    config = config or AblationConfig("orientation")
    t = t or Thresholds()
    angles = config.spec.angles()

    def evaluate(report, fold, name, scene, models):
        for o in scene.objects:
            if not has_orientation_features(o):
                continue
            usable = all(
                o.category in m.priors and m.priors[o.category].orientation_density is not None for _, m in models
            )
            if not usable:
                report.skipped.append((name, o.id, o.category.value, "orientation untrained in fold"))
                continue
            rest = scene.without(o.id)
            q = BoxArrays.poses(np.tile(np.array(o.center), (len(angles), 1)), angles, o.box.half_extents,
                                o.box.center_z, o.category)
            rows = orientation_matrix(q, BoxArrays.from_objects(rest.objects), scene.shell.wall_array, t)
            for label, m in models:
                logl = m.orientation_log_likelihood(o.category, rows)
                best = int(np.argmax(logl))  # first maximum: lowest angle index
                err = angular_distance(angles[best], o.box.theta_a)
                report.records.append(SampleRecord(label, fold, name, o.id, o.category, err))

    return _run(corpus, config, t, evaluate)


def evaluate(corpus: Sequence[Scene], config: AblationConfig, t: Thresholds | None = None) -> EvalReport:
    fn = eval_position if config.task == "position" else eval_orientation
    return fn(corpus, config, t)


__all__ = [
    "AblationConfig",
    "EvalReport",
    "ORIENTATION_VARIANTS",
    "POSITION_VARIANTS",
    "SampleRecord",
    "angular_distance",
    "eval_orientation",
    "eval_position",
    "evaluate",
]
