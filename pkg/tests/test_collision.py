import numpy as np
import pytest
from shapely.geometry import Polygon

from conftest import obj
from oracles import box_outline
from roomaug.collision import allowed_pair, colliding, footprints_inside, push_inside
from roomaug.geometry import RoomShell, box_corners
from roomaug.scene_graph import BoxArrays, Category

L_ROOM = RoomShell(((0, 0), (4, 0), (4, 2), (2, 2), (2, 4), (0, 4)))


def corners(x, y, ha, hb, th=0.0):
    return box_corners(np.array([[x, y]]), np.array([th]), np.array([[ha, hb]]))


@pytest.mark.parametrize(
    "x, y, ha, hb, th, inside",
    [
        (1, 1, 0.5, 0.5, 0.0, True),
        (0.5, 0.5, 0.5, 0.5, 0.0, True),  # flush with two walls
        (0.3, 1, 0.5, 0.5, 0.0, False),
        (2.2, 2.2, 0.5, 0.5, 0.0, False),  # covers the reflex corner
        (3, 1, 0.7, 0.3, 0.8, True),
    ],
)
def test_footprints_inside_matches_shapely(x, y, ha, hb, th, inside):
    c = corners(x, y, ha, hb, th)
    room = Polygon(L_ROOM.vertices)
    oracle = room.buffer(1e-9).contains(Polygon(box_outline((x, y), th, ha, hb)))
    assert oracle == inside
    assert footprints_inside(c, L_ROOM)[0] == inside


def test_footprints_inside_random_against_shapely():
    rng = np.random.default_rng(0)
    room = Polygon(L_ROOM.vertices).buffer(1e-9)
    xs = rng.uniform(-0.5, 4.5, (300, 2))
    th = rng.uniform(0, 2 * np.pi, 300)
    h = rng.uniform(0.05, 0.8, (300, 2))
    c = box_corners(xs, th, h)
    got = footprints_inside(c, L_ROOM)
    want = [room.contains(Polygon(q)) for q in c]
    assert got.tolist() == want


def test_push_inside_slides_off_walls():
    c = np.concatenate([corners(0.2, 1, 0.5, 0.3), corners(3.9, 0.1, 0.3, 0.3), corners(1, 1, 0.3, 0.3)])
    shift = push_inside(c, L_ROOM)
    np.testing.assert_allclose(shift[0], [0.3, 0.0], atol=1e-12)
    np.testing.assert_allclose(shift[1], [-0.2, 0.2], atol=1e-12)
    np.testing.assert_allclose(shift[2], [0.0, 0.0])
    assert footprints_inside(c + shift[:, None, :], L_ROOM).all()


def test_colliding_respects_allow_list():
    table = obj("t", "Table", 2, 2, 0.5, 0.5)
    others = BoxArrays.from_objects([table])
    cand = BoxArrays.poses([[2.1, 2.0], [3.0, 2.0], [2.0, 2.8]], 0.0, (0.1, 0.1, 0.1), 0.8, Category.DECOR)
    assert colliding(cand, Category.DECOR, others).tolist() == [False, False, False]
    chairs = BoxArrays.poses([[2.1, 2.0], [2.75, 2.0], [2.0, 2.7]], 0.0, (0.25, 0.25, 0.4), 0.4, Category.CHAIR)
    # the middle chair touches the table edge, the last one overlaps it by 0.05 m
    assert colliding(chairs, Category.CHAIR, others).tolist() == [True, False, True]
    assert colliding(chairs, Category.CHAIR, others, allow=frozenset({frozenset({Category.CHAIR, Category.TABLE})})).sum() == 0


def test_allowed_pair_is_symmetric():
    assert allowed_pair(Category.TABLE, Category.DECOR) and allowed_pair(Category.DECOR, Category.TABLE)
    assert not allowed_pair(Category.CHAIR, Category.TABLE)
