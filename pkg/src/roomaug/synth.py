"""Rule-driven synthetic rooms with a ground-truth manifest.

Each rule places a number of objects of one category with a fixed placement
pattern (corner, edge, middle, facing a table, on a table, anywhere).
Candidates are rejection-sampled until they sit inside the room without a
disallowed footprint overlap, so generated corpora are collision-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .collision import DEFAULT_ALLOWED_OVERLAPS, colliding, footprints_inside
from .errors import UnsatisfiableRuleError
from .geometry import OrientedBox, RoomShell, Thresholds
from .scene_graph import BoxArrays, Category, Scene, SceneObject, Symmetry, room_position, towards_center

PLACEMENTS = ("corner", "edge", "middle", "faces_table", "on_table", "anywhere")


@dataclass(frozen=True)
class SynthRule:
    category: Category
    placement: str
    count: tuple[int, int]
    size: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    room_types: tuple[str, ...] = ()
    elevation: float | None = None
    require_towards_center: bool = False

    def __post_init__(self):
        object.__setattr__(self, "category", Category(self.category))
        if self.placement not in PLACEMENTS:
            raise ValueError(f"unknown placement {self.placement!r}")
        lo, hi = self.count
        if not 0 <= lo <= hi:
            raise ValueError("count range must satisfy 0 <= lo <= hi")

    @property
    def label(self) -> str:
        return f"{self.category.value}:{self.placement}"


C = Category
LIVING, BEDROOM = "living room", "bedroom"

DEFAULT_RULES: tuple[SynthRule, ...] = (
    SynthRule(C.TABLE, "middle", (1, 1), ((0.45, 0.7), (0.35, 0.5), (0.36, 0.38)), (LIVING,)),
    SynthRule(C.CHAIR, "faces_table", (2, 4), ((0.22, 0.27), (0.22, 0.27), (0.4, 0.45)), (LIVING,),
              require_towards_center=True),
    SynthRule(C.SOFA, "edge", (0, 1), ((0.4, 0.5), (0.8, 1.1), (0.35, 0.45)), (LIVING,)),
    SynthRule(C.TV, "edge", (0, 1), ((0.15, 0.25), (0.45, 0.7), (0.3, 0.5)), (LIVING,)),
    SynthRule(C.BED, "edge", (1, 1), ((0.95, 1.05), (0.7, 0.9), (0.25, 0.3)), (BEDROOM,)),
    SynthRule(C.STORAGE, "corner", (1, 2), ((0.2, 0.3), (0.25, 0.42), (0.4, 1.0))),
    SynthRule(C.DECOR, "on_table", (0, 1), ((0.08, 0.15), (0.08, 0.15), (0.1, 0.2)), (LIVING,)),
    SynthRule(C.PICTURE, "edge", (0, 2), ((0.015, 0.03), (0.25, 0.5), (0.2, 0.35)), elevation=1.5),
    SynthRule(C.OTHER, "anywhere", (0, 1), ((0.15, 0.3), (0.15, 0.3), (0.2, 0.5))),
)

# Few groups per room, so each presence pattern of groups has many rows.
FOCUSED_RULES: tuple[SynthRule, ...] = tuple(
    r for r in DEFAULT_RULES if r.category in (C.TABLE, C.CHAIR, C.STORAGE, C.BED)
)
PRESETS = {"default": DEFAULT_RULES, "focused": FOCUSED_RULES}


@dataclass(frozen=True)
class SynthConfig:
    rules: tuple[SynthRule, ...] = DEFAULT_RULES
    room_width: tuple[float, float] = (3.5, 6.0)
    room_depth: tuple[float, float] = (3.5, 6.0)
    room_types: tuple[tuple[str, float], ...] = ((LIVING, 0.6), (BEDROOM, 0.4))
    l_shape_prob: float = 0.0
    max_attempts: int = 200
    max_room_retries: int = 25
    thresholds: Thresholds = field(default_factory=Thresholds)
    allowed_overlaps: frozenset = DEFAULT_ALLOWED_OVERLAPS


class _RuleFailure(Exception):
    def __init__(self, rule: SynthRule):
        self.rule = rule


def _room_polygon(rng, cfg: SynthConfig):
    w = float(rng.uniform(*cfg.room_width))
    h = float(rng.uniform(*cfg.room_depth))
    if rng.random() < cfg.l_shape_prob:
        nw = w * float(rng.uniform(0.3, 0.45))
        nh = h * float(rng.uniform(0.3, 0.45))
        return [(0.0, 0.0), (w, 0.0), (w, h - nh), (w - nw, h - nh), (w - nw, h), (0.0, h)]
    return [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]


def _angle(v) -> float:
    return math.atan2(float(v[1]), float(v[0]))


def _convex_vertices(shell: RoomShell) -> list[int]:
    v = shell.vertices
    n = len(v)
    sign = 1.0 if shell.is_ccw else -1.0
    out = []
    for i in range(n):
        e1 = v[i] - v[i - 1]
        e2 = v[(i + 1) % n] - v[i]
        if sign * (e1[0] * e2[1] - e1[1] * e2[0]) > 0:
            out.append(i)
    return out


class _RoomBuilder:
    def __init__(self, rng, cfg: SynthConfig, shell: RoomShell):
        self.rng = rng
        self.cfg = cfg
        self.shell = shell
        self.objects: list[SceneObject] = []
        self.normals = shell.inward_normals()
        self.segs = shell.wall_array

    def _size(self, rule):
        return tuple(float(self.rng.uniform(lo, hi)) for lo, hi in rule.size)

    def _fits(self, obj: SceneObject) -> bool:
        cand = BoxArrays.from_objects([obj])
        if not footprints_inside(cand.corners, self.shell)[0]:
            return False
        if not self.shell.contains(cand.centers)[0]:
            return False
        if self.objects:
            others = BoxArrays.from_objects(self.objects)
            if colliding(cand, obj.category, others, self.cfg.allowed_overlaps)[0]:
                return False
        return True

    def _tables(self):
        return [o for o in self.objects if o.category is C.TABLE]

    def propose(self, rule: SynthRule, oid: str) -> SceneObject | None:
        rng = self.rng
        ha, hb, hz = self._size(rule)
        cz = rule.elevation if rule.elevation is not None else hz
        facing = rule.category.symmetry in (Symmetry.ASYMMETRIC, Symmetry.INSIDE_FACING)
        p = rule.placement
        if p == "corner":
            corners = _convex_vertices(self.shell)
            i = corners[int(rng.integers(len(corners)))]
            n = len(self.segs)
            w_in, w_out = (i - 1) % n, i
            back, side = (w_in, w_out) if rng.random() < 0.5 else (w_out, w_in)
            nb, ns = self.normals[back], self.normals[side]
            g1, g2 = rng.uniform(0.0, 0.03, size=2)
            c = self.shell.vertices[i] + nb * (ha + g1) + ns * (hb + g2)
            theta = _angle(nb)
        elif p == "edge":
            lengths = np.linalg.norm(self.segs[:, 1] - self.segs[:, 0], axis=1)
            w = int(rng.choice(len(lengths), p=lengths / lengths.sum()))
            if lengths[w] < 2 * hb:
                return None
            d = (self.segs[w, 1] - self.segs[w, 0]) / lengths[w]
            u = rng.uniform(hb, lengths[w] - hb)
            gap = 0.0 if rule.category is C.PICTURE else rng.uniform(0.0, 0.03)
            c = self.segs[w, 0] + d * u + self.normals[w] * (ha + gap)
            theta = _angle(self.normals[w])
        elif p == "middle":
            x0, y0, x1, y1 = self.shell.bounds()
            margin = max(ha, hb) + 1.1
            if x1 - x0 <= 2 * margin or y1 - y0 <= 2 * margin:
                return None
            c = np.array([rng.uniform(x0 + margin, x1 - margin), rng.uniform(y0 + margin, y1 - margin)])
            theta = 0.5 * math.pi * int(rng.integers(2))
        elif p in ("faces_table", "on_table"):
            tables = self._tables()
            if not tables:
                return None
            t = tables[int(rng.integers(len(tables)))]
            tc = np.array(t.center)
            ta, tb = t.box.axis_a, t.box.axis_b
            if p == "on_table":
                slack = np.maximum(np.array(t.box.half_extents[:2]) - max(ha, hb), 0.0) * 0.5
                c = tc + ta * rng.uniform(-slack[0], slack[0]) + tb * rng.uniform(-slack[1], slack[1])
                cz = t.box.top + hz
                theta = t.box.theta_a
            else:
                k = int(rng.integers(4))
                dirs = [ta, tb, -ta, -tb]
                hs = [t.box.half_extents[0], t.box.half_extents[1]] * 2
                hp = [t.box.half_extents[1], t.box.half_extents[0]] * 2
                dvec = dirs[k]
                perp = np.array([-dvec[1], dvec[0]])
                offset = hs[k] + rng.uniform(0.05, 0.25) + ha
                c = tc + dvec * offset + perp * rng.uniform(-0.6 * hp[k], 0.6 * hp[k])
                theta = _angle(-dvec)
        else:
            x0, y0, x1, y1 = self.shell.bounds()
            c = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
            theta = 0.5 * math.pi * int(rng.integers(2))
        box = OrientedBox((float(c[0]), float(c[1])), cz, (ha, hb, hz), theta)
        obj = SceneObject(oid, rule.category, box, facing)
        if not self._fits(obj):
            return None
        t = self.cfg.thresholds
        if p == "corner" and room_position(obj, self.shell, t) < 2:
            return None
        if p == "middle" and room_position(obj, self.shell, t) != 0:
            return None
        if rule.require_towards_center and not towards_center(obj, self.shell):
            return None
        return obj


def _generate_room(rng, cfg: SynthConfig, name: str):
    shell = RoomShell(tuple(_room_polygon(rng, cfg)))
    types, weights = zip(*cfg.room_types)
    weights = np.asarray(weights, dtype=float)
    room_type = types[int(rng.choice(len(types), p=weights / weights.sum()))]
    b = _RoomBuilder(rng, cfg, shell)
    entries = []
    for rule in cfg.rules:
        if rule.room_types and room_type not in rule.room_types:
            continue
        n = int(rng.integers(rule.count[0], rule.count[1] + 1))
        for k in range(n):
            oid = f"{rule.category.value.lower()}_{k}"
            for attempt in range(1, cfg.max_attempts + 1):
                obj = b.propose(rule, oid)
                if obj is not None:
                    break
            else:
                raise _RuleFailure(rule)
            b.objects.append(obj)
            entries.append({"id": oid, "category": rule.category.value, "placement": rule.placement,
                            "attempts": attempt})
    scene = Scene(shell, tuple(b.objects), room_type, name)
    return scene, entries


def synthesize(config: SynthConfig | None = None, room_count: int = 10, seed: int = 0):
    """Generate ``room_count`` rooms; returns (scenes, manifest).

    Room ``i`` draws from its own stream seeded by ``(seed, i, retry)``, so a
    room does not depend on how many rooms precede it.
    """
    cfg = config or SynthConfig()
    scenes, rooms = [], []
    counts = {c.value: 0 for c in Category}
    for i in range(room_count):
        name = f"synth_{seed}_{i:05d}"
        failure = None
        for retry in range(cfg.max_room_retries):
            rng = np.random.default_rng([seed, i, retry])
            try:
                scene, entries = _generate_room(rng, cfg, name)
                break
            except _RuleFailure as f:
                failure = f
        else:
            raise UnsatisfiableRuleError(
                failure.rule.label,
                f"rule {failure.rule.label} could not be satisfied after {cfg.max_room_retries} room retries",
            )
        scenes.append(scene)
        for e in entries:
            counts[e["category"]] += 1
        x0, y0, x1, y1 = scene.shell.bounds()
        rooms.append({"name": name, "room_type": scene.room_type, "retries": retry,
                      "floor_vertices": len(scene.shell.floor_polygon), "objects": entries})
    manifest = {"seed": seed, "room_count": room_count, "counts": counts, "rooms": rooms}
    return scenes, manifest
