"""End-to-end prediction for one mesh: the three timed stages.

Stage boundaries (used by the benchmark, the CLI and the service alike):

* pre-processing: edge graph, per-gate geodesic distances, random point
  subset, k-nearest neighborhoods for smoothing;
* fill time: gate features, boosted-tree prediction, neighborhood smoothing;
* deflection: plane fit, rasterization, mirror-averaged network prediction,
  bilinear upscale, reprojection onto vertices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .features import GateDistanceTable, extract_features, reachable_mask
from .gbm import GBMModel, smooth_predictions
from .mesh import Gate, Mesh, MeshGraph, build_graph, knn_batch, subsample
from .projection import fit_plane, project, reproject, upscale_bilinear

DEFAULT_FRACTION = 0.125  # sampled points per vertex
DEFAULT_SMOOTHING_K = 100
DEFAULT_PREDICT_SEED = 0


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineResult:
    fill_time: np.ndarray
    deflection: np.ndarray | None
    timings: dict  # stage -> seconds, plus "total"


def predict_fields(mesh: Mesh, gates: list[Gate], gbm_model: GBMModel, net=None,
                   *, graph: MeshGraph | None = None, table: GateDistanceTable | None = None,
                   fraction: float = DEFAULT_FRACTION, smoothing_k: int = DEFAULT_SMOOTHING_K,
                   seed: int = DEFAULT_PREDICT_SEED, want_deflection: bool = True) -> PipelineResult:
    """Run the full surrogate pipeline on one (mesh, gates) scenario.

    ``graph`` and ``table`` may be passed in when already available (the
    service caches both); they are rebuilt here otherwise.
    """
    if not gates:
        raise PipelineError("at least one gate is required")
    for g in gates:
        if g.node_id >= mesh.n_vertices:
            raise PipelineError(f"gate node {g.node_id} out of range")
    if want_deflection and net is None:
        raise PipelineError("deflection requested but no network given")

    t0 = time.perf_counter()
    if graph is None:
        graph = build_graph(mesh)
    if table is None:
        table = GateDistanceTable.compute(graph, gates)
    sampled = subsample(mesh, fraction, seed)
    ok = reachable_mask(table, sampled)
    sampled = sampled[ok]
    if len(sampled) == 0:
        raise PipelineError("no sampled point is reachable from the gates")
    areas = knn_batch(mesh.vertices, mesh.vertices[sampled], min(smoothing_k, mesh.n_vertices))
    t1 = time.perf_counter()

    feats = extract_features(mesh, gates, table, sampled)
    point_preds = gbm_model.predict(feats)
    fill_field = smooth_predictions(mesh, sampled, point_preds, smoothing_k, areas=areas)
    t2 = time.perf_counter()

    deflection = None
    if want_deflection:
        from .cnn import predict_deflection  # deferred: keeps mesh-only use light

        plane = fit_plane(mesh.vertices)
        raster, corr = project(mesh, fill_field, plane)
        coarse = predict_deflection(net, raster)
        deflection = reproject(upscale_bilinear(coarse), corr)
    t3 = time.perf_counter()

    timings = {
        "pre_processing": t1 - t0,
        "fill_time": t2 - t1,
        "deflection": t3 - t2,
    }
    timings["total"] = timings["pre_processing"] + timings["fill_time"] + timings["deflection"]
    return PipelineResult(fill_field, deflection, timings)
