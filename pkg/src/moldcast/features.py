"""Per-point gate feature vectors for the fill-time regressor.

Each point gets 8 predictors: geodesic distances to its 3 nearest gates
(ascending), those gates' opening times, and the cosines of the angles between
the chord to the nearest gate and the chords to the second and third gates.
"""

from __future__ import annotations

import numpy as np

from .mesh import Gate, Mesh, MeshGraph, geodesic_distances

FEATURE_NAMES = ("d1", "d2", "d3", "t1", "t2", "t3", "cos_a1", "cos_a2")


class FeatureError(ValueError):
    pass


class GateDistanceTable:
    """Geodesic distances indexed [gate, vertex]."""

    def __init__(self, distances: np.ndarray, gates: list[Gate]):
        self.distances = np.asarray(distances, dtype=np.float64)
        self.gates = list(gates)
        if not self.gates:
            raise FeatureError("at least one gate is required")
        if self.distances.ndim != 2 or len(self.gates) != self.distances.shape[0]:
            raise FeatureError("distance table must have one row per gate")
        with np.errstate(invalid="ignore"):
            if np.any(self.distances < 0):
                raise FeatureError("negative geodesic distance")

    @classmethod
    def compute(cls, graph: MeshGraph, gates: list[Gate]) -> "GateDistanceTable":
        if not gates:
            raise FeatureError("at least one gate is required")
        rows = np.empty((len(gates), graph.n_vertices))
        for i, g in enumerate(gates):
            rows[i] = geodesic_distances(graph, g.node_id)
        return cls(rows, gates)

    @property
    def n_gates(self) -> int:
        return len(self.gates)


def nearest_gates(table: GateDistanceTable, point: int) -> np.ndarray:
    """Ids of the 3 gates nearest to ``point`` by geodesic distance, ascending.

    Ties break toward the lower gate index. With fewer than 3 gates the
    nearest id is repeated to keep the feature width fixed.
    """
    if table.n_gates == 0:
        raise FeatureError("at least one gate is required")
    order = np.argsort(table.distances[:, point], kind="stable")
    picked = order[:3]
    if len(picked) < 3:
        picked = np.concatenate([picked, np.repeat(picked[0], 3 - len(picked))])
    return picked


def gate_orientation(mesh: Mesh, point: int, gate: Gate):
    """Unit chord from a point toward a gate node.

    Returns (vector, coincident). A point sitting exactly on the gate node has
    no direction; the zero vector is returned with ``coincident=True``.
    """
    chord = mesh.vertices[gate.node_id] - mesh.vertices[point]
    norm = np.sqrt(chord[0] * chord[0] + chord[1] * chord[1] + chord[2] * chord[2])
    if norm == 0.0:
        return np.zeros(3), True
    return chord / norm, False


def extract_features(mesh: Mesh, gates: list[Gate], table: GateDistanceTable,
                     points: np.ndarray) -> np.ndarray:
    """Feature rows (n_points, 8) in FEATURE_NAMES order.

    Points whose three nearest gate distances include the unreachable sentinel
    are rejected: the caller is expected to filter those out first (see
    ``reachable_mask``).
    """
    if table.n_gates == 0:
        raise FeatureError("at least one gate is required")
    points = np.asarray(points, dtype=np.int64)
    dist = table.distances
    # stable argsort along gates: ascending distance, ties to lower gate index
    order = np.argsort(dist[:, points], axis=0, kind="stable")
    g1 = order[0]
    g2 = order[1] if table.n_gates >= 2 else g1
    g3 = order[2] if table.n_gates >= 3 else g1
    d = np.stack([dist[g1, points], dist[g2, points], dist[g3, points]], axis=1)
    if not np.all(np.isfinite(d)):
        bad = points[~np.isfinite(d).all(axis=1)][0]
        raise FeatureError(
            f"point {bad} is unreachable from one of its 3 nearest gates; "
            "filter points with reachable_mask first")
    times = np.array([g.opening_time for g in table.gates])
    t = np.stack([times[g1], times[g2], times[g3]], axis=1)
    node_ids = np.array([g.node_id for g in table.gates])
    p = mesh.vertices[points]
    chords = mesh.vertices[node_ids][np.stack([g1, g2, g3])] - p[None, :, :]  # (3, n, 3)
    norms = np.sqrt((chords * chords).sum(axis=2))
    unit = np.zeros_like(chords)
    nz = norms > 0
    unit[nz] = chords[nz] / norms[nz][:, None]
    cos1 = (unit[0] * unit[1]).sum(axis=1)
    cos2 = (unit[0] * unit[2]).sum(axis=1)
    # a coincident point-gate pair has no direction; define the cosine as 1
    deg1 = ~nz[0] | ~nz[1]
    deg2 = ~nz[0] | ~nz[2]
    cos1[deg1] = 1.0
    cos2[deg2] = 1.0
    np.clip(cos1, -1.0, 1.0, out=cos1)
    np.clip(cos2, -1.0, 1.0, out=cos2)
    return np.column_stack([d, t, cos1, cos2])


def reachable_mask(table: GateDistanceTable, points: np.ndarray) -> np.ndarray:
    """True where a point's 3 nearest gate distances are all finite."""
    points = np.asarray(points, dtype=np.int64)
    d = np.sort(table.distances[:, points], axis=0)[:3]
    return np.isfinite(d).all(axis=0)


def save_feature_table(path, features: np.ndarray, targets: np.ndarray) -> None:
    """Write a delimiter-separated table with header and a target column."""
    features = np.asarray(features)
    targets = np.asarray(targets)
    if len(features) != len(targets):
        raise FeatureError("features and targets must have equal length")
    with open(path, "w") as fh:
        fh.write(",".join(FEATURE_NAMES) + ",target\n")
        for row, y in zip(features, targets):
            fh.write(",".join(repr(float(v)) for v in row) + f",{float(y)!r}\n")


def load_feature_table(path):
    """Read a feature table written by save_feature_table -> (features, targets)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header != list(FEATURE_NAMES) + ["target"]:
            raise FeatureError(f"{path}: unexpected feature table header")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    data = np.array(rows, dtype=np.float64).reshape(-1, 9)
    return data[:, :8], data[:, 8]
