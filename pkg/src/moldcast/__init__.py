"""Fast surrogate prediction of fill time and deflection for injection-molded parts.

The pipeline stages:

1. mesh ingestion and geodesic distances over the edge graph (``mesh``)
2. per-point gate feature vectors (``features``)
3. gradient-boosted fill-time regression plus neighborhood smoothing (``gbm``)
4. least-squares plane projection to a 384x768 raster (``projection``)
5. convolutional deflection prediction on the raster (``cnn``)
6. reprojection of the predicted map onto mesh vertices (``projection``)

``synth`` generates analytic training scenarios, ``crossval`` runs the k-fold
evaluation harness, ``service`` exposes the trained pipeline over HTTP and
``cli`` is the command-line entry point.
"""

from .mesh import (
    Gate,
    Mesh,
    MeshGraph,
    TechnologicalParameters,
    build_graph,
    geodesic_distances,
    knn_euclidean,
    load_gates,
    load_obj,
    load_pat,
    save_gates,
    save_obj,
    save_pat,
    subsample,
)
from .features import GateDistanceTable, extract_features, gate_orientation, nearest_gates
from .gbm import GBMConfig, GBMModel, smooth_predictions
from .projection import (
    Correspondence,
    ProjectionPlane,
    RasterMap,
    fit_plane,
    mirror_variants,
    project,
    reproject,
    upscale_bilinear,
)
from .metrics import mae, rmse

__all__ = [
    "Mesh",
    "MeshGraph",
    "Gate",
    "TechnologicalParameters",
    "load_obj",
    "load_pat",
    "save_obj",
    "save_pat",
    "load_gates",
    "save_gates",
    "build_graph",
    "geodesic_distances",
    "knn_euclidean",
    "subsample",
    "GateDistanceTable",
    "nearest_gates",
    "gate_orientation",
    "extract_features",
    "GBMConfig",
    "GBMModel",
    "smooth_predictions",
    "ProjectionPlane",
    "RasterMap",
    "Correspondence",
    "fit_plane",
    "project",
    "upscale_bilinear",
    "reproject",
    "mirror_variants",
    "rmse",
    "mae",
]
