import json

import pytest

from conftest import obj, square
from roomaug.dataset import (
    CORPUS_MANIFEST,
    dumps_scene,
    kfold,
    load_corpus,
    load_scene,
    record_to_scene,
    save_scene,
    scene_to_record,
    write_corpus,
)
from roomaug.errors import CorpusError, FoldError, SceneValidationError
from roomaug.geometry import RoomShell
from roomaug.scene_graph import Scene
from roomaug.synth import SynthConfig, synthesize


def fixture_scenes(n):
    return [
        Scene(square(3.0 + 0.1 * k), (obj("c", "Chair", 1, 1), obj("t", "Table", 2, 2, 0.4, 0.3)),
              "living room", f"room_{k:02d}")
        for k in range(n)
    ]


def test_round_trip(tmp_path, dining):
    path = tmp_path / "d.scn"
    save_scene(dining, path)
    back = load_scene(path)
    assert scene_to_record(back) == scene_to_record(dining)
    assert dumps_scene(back) == path.read_text()


def test_valid_fixture_corpus(tmp_path):
    write_corpus(fixture_scenes(12), tmp_path)
    scenes, report = load_corpus(tmp_path)
    assert len(scenes) == 12 and report.rejected == []
    assert [s.name for s in scenes] == [f"room_{k:02d}" for k in range(12)]


def test_rejects(tmp_path):
    write_corpus(fixture_scenes(2), tmp_path)
    rec = scene_to_record(fixture_scenes(1)[0])
    rec["objects"][0]["category"] = "Lamp"
    (tmp_path / "lamp.scn").write_text(json.dumps(rec))
    closet = Scene(RoomShell(((0, 0), (2, 0), (2, 1), (0, 1))), (), "closet", "closet")
    save_scene(closet, tmp_path / "closet.scn")
    (tmp_path / "junk.scn").write_text("{not json")
    scenes, report = load_corpus(tmp_path)
    reasons = dict(report.rejected)
    assert len(scenes) == 2
    assert "unknown category" in reasons["lamp.scn"]
    assert "outlier area" in reasons["closet.scn"]
    assert "not valid JSON" in reasons["junk.scn"]


def test_area_bounds_configurable(tmp_path):
    save_scene(Scene(RoomShell(((0, 0), (2, 0), (2, 1), (0, 1))), (), "", "closet"), tmp_path / "closet.scn")
    scenes, _ = load_corpus(tmp_path, area_bounds=(1.0, 10.0))
    assert len(scenes) == 1


def test_checksum_mismatch_and_empty(tmp_path):
    write_corpus(fixture_scenes(1), tmp_path)
    f = tmp_path / "room_00.scn"
    f.write_text(f.read_text().replace("living room", "kitchen"))
    with pytest.raises(CorpusError):
        load_corpus(tmp_path)
    assert json.loads((tmp_path / CORPUS_MANIFEST).read_text())["files"][0]["file"] == "room_00.scn"
    with pytest.raises(CorpusError):
        load_corpus(tmp_path / "missing")


@pytest.mark.parametrize(
    "mutate",
    [
        lambda r: r.update(schema_version=99),
        lambda r: r.update(floor=[[0, 0], [1, 1], [1, 0], [0, 1]]),
        lambda r: r["objects"][0].update(center=[9, 9, 0]),
        lambda r: r["objects"][0].update(half_extents=[1, 1]),
        lambda r: r["objects"][0].update(theta_a=float("nan")),
        lambda r: r["objects"][0].pop("id"),
    ],
)
def test_record_validation(mutate):
    rec = scene_to_record(fixture_scenes(1)[0])
    mutate(rec)
    with pytest.raises(SceneValidationError):
        record_to_scene(rec)


class TestKfold:
    def test_sizes(self):
        assert [len(f) for f in kfold(12, 4, 0).folds] == [3, 3, 3, 3]
        assert sorted(len(f) for f in kfold(10, 4, 0).folds) == [2, 2, 3, 3]

    @pytest.mark.parametrize("n, k, seed", [(12, 4, 0), (10, 4, 3), (7, 2, 9), (101, 5, 1)])
    def test_disjoint_exhaustive(self, n, k, seed):
        split = kfold(n, k, seed)
        flat = [i for f in split.folds for i in f]
        assert sorted(flat) == list(range(n))
        for f in range(k):
            assert set(split.training(f)) | set(split.validation(f)) == set(range(n))
            assert not set(split.training(f)) & set(split.validation(f))

    def test_deterministic(self):
        assert kfold(30, 4, 7) == kfold(30, 4, 7)
        assert kfold(30, 4, 7) != kfold(30, 4, 8)

    def test_errors(self):
        with pytest.raises(FoldError):
            kfold(3, 4)
        with pytest.raises(FoldError):
            kfold(10, 1)


def test_synthetic_corpus_loads_clean(tmp_path):
    scenes, manifest = synthesize(SynthConfig(l_shape_prob=0.3), 20, seed=3)
    write_corpus(scenes, tmp_path, manifest)
    loaded, report = load_corpus(tmp_path)
    assert report.rejected == [] and len(loaded) == 20
    assert [scene_to_record(s) for s in loaded] == [scene_to_record(s) for s in scenes]
