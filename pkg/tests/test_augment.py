import math

import numpy as np
import pytest
from shapely.geometry import Point, Polygon

from conftest import obj, square
from roomaug import _kernels
from roomaug import knowledge_model as km
from roomaug.augment import (
    COLLISION,
    OUTSIDE,
    SamplingSpec,
    candidate_grid,
    fresh_id,
    orientation_scores,
    place,
    place_iterative,
    position_heatmap,
    rule_angle,
)
from roomaug.collision import colliding, footprints_inside
from roomaug.dataset import dumps_scene
from roomaug.errors import NoValidCellError, PlacementStepError, ThresholdMismatchError, UntrainedCategoryError
from roomaug.geometry import RoomShell, Thresholds, ray_hits_box, unit
from roomaug.scene_graph import BoxArrays, Category, Scene, room_position

T = Thresholds()


def corner_model():
    corners = [(0.3, 0.3), (3.7, 0.3), (3.7, 3.7), (0.3, 3.7)]
    scenes = [Scene(square(), (obj("s", "Storage", *c, 0.2, 0.25),)) for c in corners]
    return km.train(scenes, T)


def test_corner_prior_puts_best_cell_in_a_corner():
    m = corner_model()
    hm = position_heatmap(Scene(square()), "Storage", m)
    best = obj("x", "Storage", *hm.pose_xy[hm.best_cell], *hm.half_extents[:2])
    assert room_position(best, square(), T) == 2


def test_grid_size_near_target(focused_model):
    for target in (100, 250, 400):
        hm = position_heatmap(Scene(square(5.0)), "Table", focused_model, SamplingSpec(target_samples=target))
        inside = sum(r != OUTSIDE for r in hm.reasons)
        assert abs(inside - target) <= 0.15 * target


def test_l_room_cells_outside_flagged(focused_model):
    shell = RoomShell(((0, 0), (5, 0), (5, 2.5), (2.5, 2.5), (2.5, 5), (0, 5)))
    hm = position_heatmap(Scene(shell), "Table", focused_model)
    outside = np.array([r == OUTSIDE for r in hm.reasons])
    assert outside.any()
    assert not shell.contains(hm.cell_xy[outside]).any()
    assert np.all(hm.normalized[outside] == 0)


def test_sofa_blocks_cells_under_reject_overlap(default_model):
    sofa = obj("sofa", "Sofa", 2.0, 0.6, 0.45, 1.0, theta=math.pi / 2)
    scene = Scene(square(), (sofa,))
    hm = position_heatmap(scene, "Chair", default_model, SamplingSpec(collision_policy="reject_overlap"))
    under = BoxArrays.from_objects([sofa])
    poly = Polygon(under.corners[0])
    inside_sofa = np.array([poly.contains(Point(p)) for p in hm.cell_xy])
    assert inside_sofa.sum() > 3
    assert not hm.valid[inside_sofa].any()
    assert np.all(hm.normalized[inside_sofa] == 0)
    assert {hm.reasons[g] for g in np.nonzero(inside_sofa)[0]} == {COLLISION}


def test_heatmap_invariants(focused_model, dining):
    hm = position_heatmap(dining.without("storage"), "Storage", focused_model)
    n = hm.normalized
    assert np.all((n >= 0) & (n <= 1))
    assert n[hm.best_cell] == 1.0
    # the best cell is the lowest index among the maxima
    assert hm.best_cell == int(np.flatnonzero(hm.log_likelihood == hm.log_likelihood.max())[0])
    assert np.all(hm.raw[~hm.valid] == 0)
    doc = hm.to_dict()
    assert doc["best_cell"] == hm.best_cell and len(doc["cells"]) == hm.shape[0] * hm.shape[1]
    assert doc["cells"][hm.best_cell]["normalized"] == 1.0


def test_heatmap_deterministic(focused_model, dining):
    a = position_heatmap(dining.without("chair_w"), "Chair", focused_model)
    b = position_heatmap(dining.without("chair_w"), "Chair", focused_model)
    assert a.to_json() == b.to_json()


def test_valid_cells_are_valid_poses(focused_model, dining):
    scene = dining.without("chair_e")
    hm = position_heatmap(scene, "Chair", focused_model)
    q = BoxArrays.poses(hm.pose_xy[hm.valid], hm.theta[hm.valid], hm.half_extents, hm.center_z, Category.CHAIR)
    assert footprints_inside(q.corners, scene.shell).all()
    assert not colliding(q, Category.CHAIR, BoxArrays.from_objects(scene.objects)).any()


def test_chair_argmax_faces_the_table(focused_model, dining):
    scene = dining.without("chair_w")
    pos = (1.1, 2.0)
    scores = orientation_scores(scene, "Chair", pos, focused_model)
    assert len(scores) >= 1 and max(s for _, s in scores) == 1.0
    best = max(scores, key=lambda p: p[1])[0]
    assert ray_hits_box(pos, unit(best), scene.object("table").box)


def test_rule_and_symmetric_orientations(focused_model, room):
    scene = Scene(room)
    (theta, score), = orientation_scores(scene, "Picture", (2.0, 0.05), focused_model)
    assert theta == pytest.approx(math.pi / 2) and score == 1.0
    assert rule_angle((3.95, 2.0), room) == pytest.approx(math.pi)
    assert orientation_scores(scene, "Table", (2, 2), focused_model) == []


def test_orientation_untrained(focused_model, room):
    with pytest.raises(UntrainedCategoryError):
        orientation_scores(Scene(room), "Sofa", (2, 2), focused_model)


def bedroom():
    objs = (
        obj("bed", "Bed", 2.0, 1.05, 1.0, 0.8, theta=math.pi / 2, cz=0.28, hz=0.28),
        obj("stand", "Storage", 0.3, 0.3, 0.25, 0.3, theta=math.pi / 2),
    )
    return Scene(RoomShell(((0, 0), (4.2, 0), (4.2, 3.8), (0, 3.8))), objs, "bedroom", "bedroom")


def test_place_bed_into_bedroom(focused_model):
    scene = bedroom().without("bed")
    before = dumps_scene(scene)
    rec, hm = place(scene, "Bed", focused_model)
    assert dumps_scene(scene) == before
    assert len(rec.poses) == 5
    others = BoxArrays.from_objects(scene.objects)
    for p in rec.poses:
        q = BoxArrays.poses([p.position], p.theta_a, rec.half_extents, rec.center_z, Category.BED)
        assert footprints_inside(q.corners, scene.shell)[0]
        assert not colliding(q, Category.BED, others)[0]
    assert rec.best.cell == hm.best_cell and rec.best.position_score == 1.0
    scores = [p.position_score for p in rec.poses]
    assert scores == sorted(scores, reverse=True)
    assert all(p.orientation_score == 1.0 for p in rec.poses)


def test_top_k_monotone(focused_model, dining):
    scene = dining.without("storage")
    rec1, _ = place(scene, "Storage", focused_model, SamplingSpec(top_k=1))
    rec5, _ = place(scene, "Storage", focused_model, SamplingSpec(top_k=5))
    assert rec1.best == rec5.best
    ref = np.array([0.3, 3.6])
    d = [float(np.hypot(*(np.array(p.position) - ref))) for p in rec5.poses]
    assert all(min(d[: k + 1]) <= min(d[:k]) for k in range(1, 5))
    assert min(d) <= d[0]


def test_explicit_extents_and_theta(focused_model, room):
    hm = position_heatmap(Scene(room), "Table", focused_model, half_extents=(0.3, 0.2, 0.35), center_z=0.35,
                          theta=0.5)
    assert hm.half_extents == (0.3, 0.2, 0.35)
    assert np.allclose(hm.theta[hm.valid], 0.5)


def test_threshold_mismatch(focused_model, room):
    with pytest.raises(ThresholdMismatchError):
        position_heatmap(Scene(room), "Table", focused_model, t=Thresholds(epsilon=2.0))


def test_no_valid_cell(focused_model):
    tiny = Scene(RoomShell(((0, 0), (1, 0), (1, 1), (0, 1))))
    with pytest.raises(NoValidCellError):
        position_heatmap(tiny, "Bed", focused_model)


def test_joint_mode(focused_model, dining):
    scene = dining.without("chair_w")
    spec = SamplingSpec(joint=True)
    hm = position_heatmap(scene, "Chair", focused_model, spec)
    two = position_heatmap(scene, "Chair", focused_model)
    assert hm.shape == two.shape and np.array_equal(hm.valid, two.valid)
    rec, _ = place(scene, "Chair", focused_model, spec)
    assert rec.best.theta_a == hm.theta[hm.best_cell]
    assert 0 < rec.best.orientation_score <= 1.0


def test_place_iterative_living_room(default_model):
    scene = Scene(RoomShell(((0, 0), (5.5, 0), (5.5, 4.5), (0, 4.5))), (obj("s", "Storage", 0.3, 0.4, 0.25, 0.35),),
                  "living room", "living")
    out, steps = place_iterative(scene, ["Sofa", "Table", "Sofa"], default_model)
    assert [s.object_id for s in steps] == ["sofa_new_0", "table_new_0", "sofa_new_1"]
    assert out.objects[: len(scene.objects)] == scene.objects
    new = BoxArrays.from_objects(out.objects)
    over = _kernels.footprint_overlaps(new.corners, new.corners)
    np.fill_diagonal(over, False)
    assert not over.any()
    again, _ = place_iterative(scene, ["Sofa", "Table", "Sofa"], default_model)
    assert dumps_scene(again) == dumps_scene(out)


def test_place_iterative_failure_keeps_partial_scene(default_model):
    scene = Scene(RoomShell(((0, 0), (2.3, 0), (2.3, 1.8), (0, 1.8))), (), "bedroom", "closet")
    with pytest.raises(PlacementStepError) as info:
        place_iterative(scene, ["Bed", "Bed"], default_model)
    err = info.value
    assert err.step == 2 and err.category == "Bed"
    assert [o.id for o in err.partial_scene.objects] == ["bed_new_0"]
    assert isinstance(err.cause, NoValidCellError)


def test_fresh_id(dining):
    assert fresh_id(dining, Category.CHAIR) == "chair_new_0"
    s = dining.with_object(obj("chair_new_0", "Chair", 3.5, 3.5))
    assert fresh_id(s, Category.CHAIR) == "chair_new_1"


def test_candidate_grid_reusable_across_models(focused_model, dining):
    scene = dining.without("storage")
    g = candidate_grid(scene, "Storage", (0.25, 0.35, 0.8), 0.8, SamplingSpec(), T)
    hm = g.heatmap(focused_model.position_log_likelihood(Category.STORAGE, g.rows))
    full = position_heatmap(scene, "Storage", focused_model, half_extents=(0.25, 0.35, 0.8), center_z=0.8)
    assert hm.to_json() == full.to_json()


def test_sampling_spec_validation():
    for bad in (dict(target_samples=0), dict(orientation_count=3), dict(collision_policy="x"), dict(top_k=0)):
        with pytest.raises(ValueError):
            SamplingSpec(**bad)
    assert SamplingSpec(collision_policy="reject_overlap").allowed == frozenset()
    assert len(SamplingSpec().angles()) == 16
