"""HTTP JSON API over the trained pipeline.

Endpoints:

* ``POST /meshes`` — raw mesh upload (OBJ subset or simplified PAT, sniffed
  from content); returns a handle plus mesh summary.
* ``POST /predict`` — run the pipeline for a handle and a gate list.
* ``GET /health`` — liveness, model versions, uptime.

Uploaded meshes live in an LRU session store together with their edge graph
and a per-gate-node geodesic cache, so interactively moving one gate only
recomputes that gate's distances. Models load once at startup and are
read-only afterwards; predictions use a fixed smoothing seed so identical
requests return identical responses (and match the command line).
"""

from __future__ import annotations

import hashlib
import os
import tempfile
import threading
import time
import uuid
from collections import OrderedDict

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import cnn, gbm
from .features import GateDistanceTable
from .mesh import Gate, Mesh, MeshError, build_graph, geodesic_distances
from .pipeline import DEFAULT_FRACTION, DEFAULT_PREDICT_SEED, DEFAULT_SMOOTHING_K, PipelineError, predict_fields

MAX_UPLOAD_BYTES = 64 * 1024 * 1024
DEFAULT_CAPACITY = 8


class _Session:
    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.graph = build_graph(mesh)
        self.geodesics: dict[int, np.ndarray] = {}  # gate node id -> distances

    def distance_table(self, gates: list[Gate]) -> GateDistanceTable:
        rows = []
        for g in gates:
            if g.node_id not in self.geodesics:
                self.geodesics[g.node_id] = geodesic_distances(self.graph, g.node_id)
            rows.append(self.geodesics[g.node_id])
        return GateDistanceTable(np.vstack(rows), gates)


class SessionStore:
    """Thread-safe LRU map from mesh handle to parsed session state."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._lock = threading.Lock()
        self._entries: OrderedDict[str, _Session] = OrderedDict()

    def put(self, mesh: Mesh) -> str:
        handle = uuid.uuid4().hex
        session = _Session(mesh)
        with self._lock:
            self._entries[handle] = session
            while len(self._entries) > self.capacity:
                self._entries.popitem(last=False)
        return handle

    def get(self, handle: str) -> _Session | None:
        with self._lock:
            session = self._entries.get(handle)
            if session is not None:
                self._entries.move_to_end(handle)
            return session

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def handles(self) -> list[str]:
        with self._lock:
            return list(self._entries)


class GateIn(BaseModel):
    node_id: int = Field(ge=0)
    opening_time: float = Field(ge=0)


class PredictRequest(BaseModel):
    handle: str
    gates: list[GateIn]
    targets: list[str] = ["fill_time", "deflection"]


def _file_version(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()[:12]


def _sniff_and_load(body: bytes) -> Mesh:
    text = body.decode("utf-8", errors="replace")
    kind = None
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        kind = line.split()[0]
        break
    if kind not in ("v", "N"):
        raise MeshError("unrecognized mesh format: expected OBJ 'v' or PAT 'N' records")
    from .mesh import load_obj, load_pat

    suffix = ".obj" if kind == "v" else ".pat"
    with tempfile.NamedTemporaryFile("w", suffix=suffix, delete=False) as fh:
        fh.write(text)
        tmp = fh.name
    try:
        return load_obj(tmp) if kind == "v" else load_pat(tmp)
    finally:
        os.unlink(tmp)


def create_app(gbm_path=None, weights_blob=None, weights_manifest=None,
               capacity: int = DEFAULT_CAPACITY,
               max_upload_bytes: int = MAX_UPLOAD_BYTES) -> FastAPI:
    app = FastAPI(title="moldcast", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    state = app.state
    state.store = SessionStore(capacity)
    state.started = time.monotonic()
    state.gbm_model = None
    state.net = None
    state.versions = {}
    if gbm_path and os.path.exists(gbm_path):
        state.gbm_model = gbm.load_model(gbm_path)
        state.versions["fill_time_model"] = _file_version(gbm_path)
    if weights_blob and weights_manifest and os.path.exists(weights_blob) \
            and os.path.exists(weights_manifest):
        state.net = cnn.load_weights(weights_blob, weights_manifest)
        state.versions["deflection_model"] = _file_version(weights_blob)

    @app.post("/meshes")
    async def upload_mesh(request: Request):
        body = await request.body()
        if len(body) > max_upload_bytes:
            return JSONResponse({"error": f"upload exceeds {max_upload_bytes} bytes"},
                                status_code=413)
        try:
            mesh = _sniff_and_load(body)
        except MeshError as e:
            return JSONResponse({"error": str(e)}, status_code=400)
        handle = state.store.put(mesh)
        lo, hi = mesh.bounding_box()
        return {
            "handle": handle,
            "vertex_count": mesh.n_vertices,
            "face_count": mesh.n_faces,
            "bounding_box": {"min": lo.tolist(), "max": hi.tolist()},
        }

    @app.post("/predict")
    def predict(req: PredictRequest):
        session = state.store.get(req.handle)
        if session is None:
            return JSONResponse({"error": f"unknown mesh handle {req.handle!r}"},
                                status_code=404)
        targets = set(req.targets)
        unknown = targets - {"fill_time", "deflection"}
        if unknown or not targets:
            return JSONResponse({"error": f"invalid targets {sorted(unknown)}"},
                                status_code=422)
        if not req.gates:
            return JSONResponse({"error": "at least one gate is required"}, status_code=422)
        for i, g in enumerate(req.gates):
            if g.node_id >= session.mesh.n_vertices:
                return JSONResponse(
                    {"error": f"gate {i} node {g.node_id} exceeds vertex count "
                              f"{session.mesh.n_vertices}"},
                    status_code=422)
        want_deflection = "deflection" in targets
        if state.gbm_model is None or (want_deflection and state.net is None):
            return JSONResponse({"error": "models not loaded"}, status_code=503)
        gates = [Gate(g.node_id, g.opening_time) for g in req.gates]
        table = session.distance_table(gates)
        try:
            result = predict_fields(
                session.mesh, gates, state.gbm_model, state.net,
                graph=session.graph, table=table,
                fraction=DEFAULT_FRACTION, smoothing_k=DEFAULT_SMOOTHING_K,
                seed=DEFAULT_PREDICT_SEED, want_deflection=want_deflection)
        except PipelineError as e:
            return JSONResponse({"error": str(e)}, status_code=422)
        body = {
            "fill_time": result.fill_time.tolist(),
            "timings": result.timings,
            "model_versions": state.versions,
        }
        if want_deflection:
            body["deflection"] = result.deflection.tolist()
        return body

    @app.get("/health")
    def health():
        missing = []
        if state.gbm_model is None:
            missing.append("fill_time_model")
        if state.net is None:
            missing.append("deflection_model")
        return {
            "status": "ok" if not missing else "degraded",
            "missing": missing,
            "model_versions": state.versions,
            "uptime_s": time.monotonic() - state.started,
        }

    return app
