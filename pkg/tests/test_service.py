import json
from concurrent.futures import ThreadPoolExecutor

import pytest
from fastapi.testclient import TestClient

from roomaug import knowledge_model as km
from roomaug.dataset import scene_to_record
from roomaug.geometry import Thresholds
from roomaug.scene_graph import extract_features
from roomaug.service import ModelHolder, create_app, graph_payload


@pytest.fixture(scope="module")
def model_file(tmp_path_factory, focused_model):
    path = tmp_path_factory.mktemp("svc") / "m.rakm"
    km.save(focused_model, path)
    return path


@pytest.fixture(scope="module")
def client(model_file):
    with TestClient(create_app(model_path=str(model_file))) as c:
        yield c


@pytest.fixture
def body(dining):
    return {"scene": scene_to_record(dining.without("chair_w")), "category": "Chair", "sampling": {"top_k": 3}}


def test_healthz_and_model(client, focused_model):
    r = client.get("/healthz")
    assert r.status_code == 200
    h = r.json()
    assert h["model_loaded"] and h["model_checksum"] == km.model_checksum(focused_model)
    info = client.get("/v1/model").json()
    assert info["checksum"] == h["model_checksum"]
    assert len(info["taxonomy"]) == 9 and "Chair" in info["trained_categories"]
    assert info["thresholds"] == Thresholds().as_dict()


def test_request_id_echoed(client):
    r = client.get("/healthz", headers={"X-Request-ID": "abc-1"})
    assert r.headers["X-Request-ID"] == "abc-1"
    assert client.get("/healthz").headers["X-Request-ID"]
    assert float(r.headers["X-Process-Time-Ms"]) >= 0


def test_predict_shape(client, body):
    r = client.post("/v1/predict", json=body)
    assert r.status_code == 200, r.text
    out = r.json()
    (p,) = out["predictions"]
    assert p["category"] == "Chair"
    assert len(p["recommendation"]["poses"]) == 3
    cells = p["heatmap"]["cells"]
    assert max(c["normalized"] for c in cells) == 1.0
    assert all(0 <= c["normalized"] <= 1 for c in cells)
    assert out["model"]["checksum"] == client.get("/healthz").json()["model_checksum"]


def test_graph_payload_equivalence(client, body, dining):
    scene = dining.without("chair_w")
    graph = graph_payload(extract_features(scene, Thresholds()))
    # the payload survives a JSON round trip
    graph = json.loads(json.dumps(graph))
    via_graph = {"graph": graph, "category": "Chair", "sampling": {"top_k": 3}}
    a = client.post("/v1/predict", json=body)
    b = client.post("/v1/predict", json=via_graph)
    assert a.status_code == b.status_code == 200
    assert a.content == b.content


def test_scene_graph_route_matches_local_extraction(client, dining):
    r = client.post("/v1/scene-graph", json={"scene": scene_to_record(dining)})
    assert r.status_code == 200
    local = graph_payload(extract_features(dining, Thresholds()))
    assert r.json() == json.loads(json.dumps(local))
    node = {n["id"]: n for n in r.json()["nodes"]}
    assert len(node["storage"]["position_features"]) == 28
    assert len(node["chair_w"]["orientation_features"]) == 22
    assert node["table"]["orientation_features"] is None


def test_concurrent_identical_requests(client, body):
    def go(_):
        return client.post("/v1/predict", json=body).content

    with ThreadPoolExecutor(max_workers=8) as pool:
        bodies = list(pool.map(go, range(50)))
    assert len(set(bodies)) == 1


def test_batch_categories(client, body):
    b = dict(body)
    b.pop("category")
    b["categories"] = ["Chair", "Storage"]
    out = client.post("/v1/predict", json=b).json()
    assert [p["category"] for p in out["predictions"]] == ["Chair", "Storage"]


@pytest.mark.parametrize(
    "mutate, status, code, field",
    [
        (lambda b: b.update(category="Lamp"), 422, "unknown_category", "category"),
        (lambda b: b.update(category="Sofa"), 409, "untrained_category", "category"),
        (lambda b: b.update(sampling={"top_k": "five"}), 422, "invalid_field", "sampling.top_k"),
        (lambda b: b.update(sampling={"orientation_count": 3}), 422, "invalid_field", "sampling.orientation_count"),
        (lambda b: b.update(sampling={"colour": 1}), 422, "invalid_field", "sampling.colour"),
        (lambda b: b.update(half_extents=[1, 2]), 422, "invalid_field", "half_extents"),
        (lambda b: b.update(schema_version=99), 422, "invalid_field", "schema_version"),
        (lambda b: b.pop("scene"), 422, "invalid_field", "scene"),
        (lambda b: b.update(graph={}), 422, "invalid_field", "scene"),
        (lambda b: b.pop("category"), 422, "invalid_field", "category"),
    ],
)
def test_client_errors_name_the_field(client, body, mutate, status, code, field):
    mutate(body)
    r = client.post("/v1/predict", json=body)
    assert r.status_code == status, r.text
    err = r.json()
    assert err["error"] == code and err["field"] == field
    assert r.headers["X-Request-ID"]


def test_malformed_json(client):
    r = client.post("/v1/predict", content=b"{nope", headers={"content-type": "application/json"})
    assert r.status_code == 400
    assert r.json()["error"] == "malformed_json" and r.json()["field"] == "body"


def test_bad_scene_geometry(client, body):
    body["scene"]["floor"] = [[0, 0], [1, 0]]
    r = client.post("/v1/predict", json=body)
    assert r.status_code == 422 and r.json()["field"] == "scene"


def test_graph_threshold_mismatch(client, dining):
    graph = graph_payload(extract_features(dining, Thresholds(epsilon=0.5)))
    r = client.post("/v1/predict", json={"graph": json.loads(json.dumps(graph)), "category": "Chair"})
    assert r.status_code == 422
    assert r.json()["error"] == "threshold_mismatch" and r.json()["field"] == "graph.thresholds"


def test_no_valid_cell(client):
    tiny = {"schema_version": 1, "name": "tiny", "room_type": "", "floor": [[0, 0], [1, 0], [1, 1], [0, 1]],
            "objects": []}
    r = client.post("/v1/predict", json={"scene": tiny, "category": "Bed"})
    assert r.status_code == 422 and r.json()["error"] == "no_valid_cell"


def test_without_model_predict_refused(dining):
    with TestClient(create_app()) as c:
        assert c.get("/healthz").status_code == 503
        r = c.post("/v1/predict", json={"scene": scene_to_record(dining), "category": "Chair"})
        assert r.status_code == 503 and r.json()["error"] == "model_not_loaded"
        assert c.get("/v1/model").status_code == 503
        # graph extraction does not need a model
        assert c.post("/v1/scene-graph", json={"scene": scene_to_record(dining)}).status_code == 200


def test_reload_swaps_whole_model(tmp_path, focused_model, default_model, monkeypatch):
    monkeypatch.delenv("ROOMAUG_MODEL", raising=False)
    path = tmp_path / "m.rakm"
    km.save(focused_model, path)
    holder = ModelHolder()
    with TestClient(create_app(holder, model_path=str(path))) as c:
        before = c.get("/healthz").json()["model_checksum"]
        km.save(default_model, path)
        r = c.post("/v1/model/reload")
        assert r.status_code == 200
        after = c.get("/healthz").json()["model_checksum"]
        assert after != before and after == km.model_checksum(default_model)
        # a corrupt file leaves the current model in place
        path.write_bytes(path.read_bytes()[:-10])
        r = c.post("/v1/model/reload")
        assert r.status_code == 409
        assert c.get("/healthz").json()["model_checksum"] == after
