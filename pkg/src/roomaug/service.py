"""HTTP inference service.

Routes: ``POST /v1/predict``, ``POST /v1/scene-graph``, ``GET /v1/model``,
``GET /healthz`` and ``POST /v1/model/reload``. Bodies are deterministic JSON;
the request id and timing travel in headers so identical requests get
byte-identical bodies.
"""

from __future__ import annotations

import json
import logging
import math
import os
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import Response
from starlette.concurrency import run_in_threadpool

from . import __version__
from .augment import COLLISION_POLICIES, SamplingSpec, place
from .dataset import SCHEMA_VERSION, record_to_scene, scene_to_record
from .errors import (
    ModelFileError,
    NoValidCellError,
    RoomAugError,
    SceneValidationError,
    ThresholdMismatchError,
    UntrainedCategoryError,
)
from .geometry import Thresholds
from .knowledge_model import KnowledgeModel, from_bytes, model_checksum, priors_summary
from .scene_graph import CATEGORIES, Scene, SceneGraph, extract_features, parse_category

log = logging.getLogger("roomaug.service")

GRAPH_KIND = "scene_graph"
MAX_BATCH = len(CATEGORIES)


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        super().__init__(message)
        self.status, self.code, self.field = status, code, field


def _dumps(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)).encode("utf-8")


def _json_response(obj, status: int = 200) -> Response:
    return Response(content=_dumps(obj), status_code=status, media_type="application/json")


# ---------------------------------------------------------------------------
# model holder
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoadedModel:
    model: KnowledgeModel
    checksum: str
    source: str


class ModelHolder:
    """The service's single model; replaced whole, never mutated."""

    def __init__(self, model: KnowledgeModel | None = None, source: str = ""):
        self._lock = threading.Lock()
        self._current = None if model is None else LoadedModel(model, model_checksum(model), source)

    def get(self) -> LoadedModel | None:
        return self._current

    def swap(self, model: KnowledgeModel, source: str = "") -> LoadedModel:
        loaded = LoadedModel(model, model_checksum(model), source)
        with self._lock:
            self._current = loaded
        return loaded

    def load(self, path) -> LoadedModel:
        """Read and verify the file fully before switching, so a bad file leaves the old model."""
        model = from_bytes(Path(path).read_bytes())
        return self.swap(model, str(path))


# ---------------------------------------------------------------------------
# payloads
# ---------------------------------------------------------------------------


def graph_payload(graph: SceneGraph) -> dict:
    """Extracted scene graph in wire form: room, boxes, groups and feature vectors."""
    record = scene_to_record(graph.scene)
    nodes = []
    for raw, o in zip(record["objects"], graph.scene.objects):
        node = dict(raw)
        node["position_features"] = [float(v) for v in graph.position[o.id].vector()]
        of = graph.orientation.get(o.id)
        node["orientation_features"] = None if of is None else [float(v) for v in of.vector()]
        nodes.append(node)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": GRAPH_KIND,
        "thresholds": graph.thresholds.as_dict(),
        "room": {"name": record["name"], "room_type": record["room_type"], "floor": record["floor"]},
        "groups": {c.value: list(ids) for c, ids in graph.groups.items()},
        "nodes": nodes,
    }


def scene_from_graph(payload: dict) -> tuple[Scene, Thresholds]:
    """Rebuild the scene geometry carried by a graph payload."""
    if not isinstance(payload, dict):
        raise ApiError(422, "invalid_field", "graph must be an object", "graph")
    if payload.get("kind") != GRAPH_KIND:
        raise ApiError(422, "invalid_field", f"graph.kind must be {GRAPH_KIND!r}", "graph.kind")
    room = payload.get("room")
    if not isinstance(room, dict):
        raise ApiError(422, "invalid_field", "graph.room must be an object", "graph.room")
    nodes = payload.get("nodes")
    if not isinstance(nodes, list):
        raise ApiError(422, "invalid_field", "graph.nodes must be a list", "graph.nodes")
    keys = ("id", "category", "center", "half_extents", "theta_a", "has_known_facing")
    objects = []
    for k, node in enumerate(nodes):
        if not isinstance(node, dict):
            raise ApiError(422, "invalid_field", "graph node must be an object", f"graph.nodes[{k}]")
        objects.append({key: node[key] for key in keys if key in node})
    record = {
        "schema_version": payload.get("schema_version"),
        "name": room.get("name", ""),
        "room_type": room.get("room_type", ""),
        "floor": room.get("floor"),
        "objects": objects,
    }
    try:
        scene = record_to_scene(record)
    except SceneValidationError as exc:
        raise ApiError(422, exc.code, str(exc), "graph") from None
    return scene, _thresholds(payload.get("thresholds"), "graph.thresholds")


def _thresholds(raw, field: str) -> Thresholds | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ApiError(422, "invalid_field", "thresholds must be an object", field)
    try:
        return Thresholds(**{k: float(v) for k, v in raw.items()})
    except (TypeError, ValueError) as exc:
        raise ApiError(422, "invalid_field", f"invalid thresholds: {exc}", field) from None


def _scene_from_request(body: dict) -> tuple[Scene, Thresholds | None]:
    has_scene, has_graph = "scene" in body, "graph" in body
    if has_scene == has_graph:
        raise ApiError(422, "invalid_field", "exactly one of 'scene' or 'graph' is required", "scene")
    if has_graph:
        return scene_from_graph(body["graph"])
    try:
        return record_to_scene(body["scene"]), None
    except SceneValidationError as exc:
        raise ApiError(422, exc.code, str(exc), "scene") from None


def _sampling(raw, default_top_k: int = 5) -> SamplingSpec:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ApiError(422, "invalid_field", "sampling must be an object", "sampling")
    ints = ("target_samples", "orientation_count", "top_k", "random_seed")
    kwargs = {"top_k": default_top_k}
    for key, value in raw.items():
        field = f"sampling.{key}"
        if key in ints:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ApiError(422, "invalid_field", f"{key} must be an integer", field)
            kwargs[key] = value
        elif key == "collision_policy":
            if value not in COLLISION_POLICIES:
                raise ApiError(422, "invalid_field", f"collision_policy must be one of {COLLISION_POLICIES}", field)
            kwargs[key] = value
        elif key == "joint":
            if not isinstance(value, bool):
                raise ApiError(422, "invalid_field", "joint must be a boolean", field)
            kwargs[key] = value
        else:
            raise ApiError(422, "invalid_field", f"unknown sampling option {key!r}", field)
    if kwargs.get("target_samples", 1) > 20000:
        raise ApiError(422, "invalid_field", "target_samples is limited to 20000", "sampling.target_samples")
    try:
        return SamplingSpec(**kwargs)
    except ValueError as exc:
        bad = next((k for k in kwargs if k in str(exc)), None)
        raise ApiError(422, "invalid_field", str(exc), f"sampling.{bad}" if bad else "sampling") from None


def _categories(body: dict) -> list:
    if "categories" in body:
        raw = body["categories"]
        field = "categories"
        if not isinstance(raw, list) or not raw or len(raw) > MAX_BATCH:
            raise ApiError(422, "invalid_field", f"categories must be a list of 1..{MAX_BATCH} names", field)
    elif "category" in body:
        raw, field = [body["category"]], "category"
    else:
        raise ApiError(422, "invalid_field", "category is required", "category")
    out = []
    for name in raw:
        try:
            out.append(parse_category(name))
        except (ValueError, KeyError, TypeError) as exc:
            raise ApiError(422, "unknown_category", str(exc), field) from None
    return out


def _extents(body: dict):
    he = body.get("half_extents")
    if he is not None:
        ok = isinstance(he, list) and len(he) == 3 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) and v >= 0 for v in he
        )
        if not ok:
            raise ApiError(422, "invalid_field", "half_extents must be three non-negative numbers", "half_extents")
    cz = body.get("center_z")
    if cz is not None and (isinstance(cz, bool) or not isinstance(cz, (int, float)) or not math.isfinite(cz)):
        raise ApiError(422, "invalid_field", "center_z must be a finite number", "center_z")
    return he, cz


def predict(loaded: LoadedModel, body) -> dict:
    """Answer one predict request; raises ApiError for client faults."""
    if not isinstance(body, dict):
        raise ApiError(422, "invalid_field", "request body must be an object", "body")
    version = body.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ApiError(422, "invalid_field", f"unsupported schema_version {version!r}", "schema_version")
    model = loaded.model
    scene, graph_t = _scene_from_request(body)
    if graph_t is not None and graph_t != model.thresholds:
        raise ApiError(422, ThresholdMismatchError.code,
                       "graph was extracted with thresholds that differ from the model's", "graph.thresholds")
    cats = _categories(body)
    he, cz = _extents(body)
    spec = _sampling(body.get("sampling"))
    predictions = []
    for cat in cats:
        try:
            rec, hm = place(scene, cat, model, spec, half_extents=he, center_z=cz)
        except UntrainedCategoryError as exc:
            raise ApiError(409, exc.code, str(exc), "category") from None
        except NoValidCellError as exc:
            raise ApiError(422, exc.code, str(exc), "scene") from None
        predictions.append({"category": cat.value, "heatmap": hm.to_dict(), "recommendation": rec.to_dict()})
    return {
        "schema_version": SCHEMA_VERSION,
        "model": {"checksum": loaded.checksum, "dataset_id": model.dataset_id, "engine_version": __version__},
        "predictions": predictions,
    }


def model_info(loaded: LoadedModel) -> dict:
    m = loaded.model
    return {
        "schema_version": SCHEMA_VERSION,
        "checksum": loaded.checksum,
        "dataset_id": m.dataset_id,
        "trained_at": m.trained_at,
        "taxonomy": [c.value for c in CATEGORIES],
        "trained_categories": [c.value for c in m.trained_categories()],
        "thresholds": m.thresholds.as_dict(),
        "selection": m.selection.as_dict(),
        "row_counts": {k: list(v) for k, v in m.row_counts().items()},
        "priors": priors_summary(m),
    }


# ---------------------------------------------------------------------------
# app
# ---------------------------------------------------------------------------


def create_app(holder: ModelHolder | None = None, model_path: str | None = None) -> FastAPI:
    holder = holder or ModelHolder()
    if model_path is not None:
        holder.load(model_path)
    app = FastAPI(title="roomaug", version=__version__)
    app.state.holder = holder

    @app.middleware("http")
    async def request_context(request: Request, call_next):
        rid = request.headers.get("x-request-id") or uuid.uuid4().hex
        t0 = time.perf_counter()
        try:
            response = await call_next(request)
        except Exception:  # pragma: no cover - routes convert their own failures
            log.exception("unhandled error")
            response = _json_response({"error": "internal", "message": "internal server error"}, 500)
        ms = (time.perf_counter() - t0) * 1000.0
        response.headers["X-Request-ID"] = rid
        response.headers["X-Process-Time-Ms"] = f"{ms:.3f}"
        log.info(json.dumps({"request_id": rid, "method": request.method, "path": request.url.path,
                             "status": response.status_code, "ms": round(ms, 3)}))
        return response

    def fail(exc: ApiError) -> Response:
        body = {"error": exc.code, "message": str(exc)}
        if exc.field:
            body["field"] = exc.field
        return _json_response(body, exc.status)

    async def read_json(request: Request):
        raw = await request.body()
        try:
            return json.loads(raw)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ApiError(400, "malformed_json", f"request body is not valid JSON: {exc}", "body") from None

    def require_model() -> LoadedModel:
        loaded = holder.get()
        if loaded is None:
            raise ApiError(503, "model_not_loaded", "no model is loaded")
        return loaded

    def guarded(fn):
        try:
            return fn()
        except ApiError as exc:
            return fail(exc)
        except RoomAugError as exc:
            return fail(ApiError(422, exc.code, str(exc)))
        except Exception:
            log.exception("internal failure")
            return fail(ApiError(500, "internal", "internal server error"))

    @app.get("/healthz")
    def healthz():
        loaded = holder.get()
        body = {"status": "ok" if loaded else "no_model", "model_loaded": loaded is not None,
                "model_checksum": loaded.checksum if loaded else None}
        return _json_response(body, 200 if loaded else 503)

    @app.get("/v1/model")
    def get_model():
        return guarded(lambda: _json_response(model_info(require_model())))

    @app.post("/v1/predict")
    async def post_predict(request: Request):
        try:
            body = await read_json(request)
        except ApiError as exc:
            return fail(exc)
        # scoring is CPU-bound; run it off the event loop
        return await run_in_threadpool(guarded, lambda: _json_response(predict(require_model(), body)))

    @app.post("/v1/scene-graph")
    async def post_scene_graph(request: Request):
        try:
            body = await read_json(request)
        except ApiError as exc:
            return fail(exc)

        def run():
            if not isinstance(body, dict):
                raise ApiError(422, "invalid_field", "request body must be an object", "body")
            record = body.get("scene", body)
            try:
                scene = record_to_scene(record)
            except SceneValidationError as exc:
                raise ApiError(422, exc.code, str(exc), "scene") from None
            t = _thresholds(body.get("thresholds"), "thresholds")
            if t is None:
                loaded = holder.get()
                t = loaded.model.thresholds if loaded else Thresholds()
            return _json_response(graph_payload(extract_features(scene, t)))

        return guarded(run)

    @app.post("/v1/model/reload")
    def reload_model():
        def run():
            loaded = holder.get()
            path = os.environ.get("ROOMAUG_MODEL") or (loaded.source if loaded else "")
            if not path:
                raise ApiError(409, "no_model_path", "no model path is configured")
            try:
                new = holder.load(path)
            except (OSError, ModelFileError) as exc:
                raise ApiError(409, getattr(exc, "code", "model_file"), f"reload failed, old model kept: {exc}")
            return _json_response({"model_checksum": new.checksum})

        return guarded(run)

    return app


def serve(model_path: str, host: str = "127.0.0.1", port: int = 8000) -> None:  # pragma: no cover - blocking
    import uvicorn

    app = create_app(model_path=model_path)
    uvicorn.run(app, host=host, port=port, log_level="info")
