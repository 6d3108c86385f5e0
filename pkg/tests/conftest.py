import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from roomaug import OrientedBox, RoomShell, Scene, SceneObject, Thresholds  # noqa: E402


def box(x, y, ha=0.5, hb=0.5, theta=0.0, cz=0.5, hz=0.5):
    return OrientedBox((x, y), cz, (ha, hb, hz), theta)


def obj(oid, cat, x, y, ha=0.25, hb=0.25, theta=0.0, cz=0.4, hz=0.4, facing=None):
    if facing is None:
        facing = cat in ("Bed", "Chair", "Sofa", "TV", "Picture", "Storage")
    return SceneObject(oid, cat, OrientedBox((x, y), cz, (ha, hb, hz), theta), facing)


def square(size=4.0):
    return RoomShell(((0, 0), (size, 0), (size, size), (0, size)))


@pytest.fixture
def thr():
    return Thresholds()


@pytest.fixture
def room():
    return square()


@pytest.fixture
def dining():
    """4x4 room with a table in the middle, chairs on two sides and a corner storage."""
    objs = (
        obj("table", "Table", 2.0, 2.0, 0.6, 0.4, cz=0.37, hz=0.37),
        obj("chair_w", "Chair", 1.1, 2.0, 0.25, 0.25, theta=0.0),
        obj("chair_e", "Chair", 2.9, 2.0, 0.25, 0.25, theta=3.141592653589793),
        obj("storage", "Storage", 0.3, 3.6, 0.25, 0.35, theta=0.0, hz=0.8),
    )
    return Scene(square(), objs, "living room", "dining")


@pytest.fixture(scope="session")
def focused_corpus():
    from roomaug.synth import PRESETS, SynthConfig, synthesize

    scenes, manifest = synthesize(SynthConfig(rules=PRESETS["focused"]), 60, seed=5)
    return scenes, manifest


@pytest.fixture(scope="session")
def focused_model(focused_corpus):
    from roomaug import train

    return train(focused_corpus[0], Thresholds())


@pytest.fixture(scope="session")
def default_model():
    from roomaug import train
    from roomaug.synth import SynthConfig, synthesize

    scenes, _ = synthesize(SynthConfig(), 80, seed=6)
    return train(scenes, Thresholds())
