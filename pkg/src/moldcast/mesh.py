"""Triangle mesh ingestion, edge graph construction and geodesic distances.

Meshes are triangle surfaces in millimeters. Supported file formats:

* OBJ subset: ``v x y z`` and ``f i j k`` records (1-based indices) plus
  ``#`` comments. Nothing else.
* Simplified PATRAN-style text: ``N <id> <x> <y> <z>`` node cards and
  ``E <id> <n1> <n2> <n3>`` triangle cards. Node ids may be sparse; they are
  densely remapped in order of appearance and the mapping is kept on the mesh.
* Gates file: JSON with a ``gates`` list of ``{node_id, opening_time}`` and an
  optional ``parameters`` block of scalar technological parameters. ``node_id``
  is a 0-based vertex index of the (remapped) mesh.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, fields
from heapq import heappop, heappush

import numpy as np


class MeshError(ValueError):
    """Invalid mesh data or unparseable mesh file."""


@dataclass(frozen=True)
class Gate:
    """Injection gate: the vertex where melt enters, and when it opens."""

    node_id: int
    opening_time: float  # seconds

    def __post_init__(self):
        if self.node_id < 0:
            raise MeshError(f"gate node_id must be >= 0, got {self.node_id}")
        if not math.isfinite(self.opening_time) or self.opening_time < 0:
            raise MeshError(f"gate opening_time must be finite and >= 0, got {self.opening_time}")


@dataclass
class TechnologicalParameters:
    """Optional scalar process metadata carried alongside a mesh.

    Not used by the predictors; ingested for provenance and possible future
    feature experiments.
    """

    melt_temperature: float | None = None  # degC
    cooling_time: float | None = None  # s
    duration: float | None = None  # s
    filling_pressure: float | None = None  # MPa
    ambient_temperature: float | None = None  # degC
    mold_temperature: float | None = None  # degC
    fill_end_time: float | None = None  # s

    _NONNEGATIVE = ("cooling_time", "duration", "filling_pressure", "fill_end_time")

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            v = float(v)
            if not math.isfinite(v):
                raise MeshError(f"technological parameter {f.name} must be finite")
            if f.name in self._NONNEGATIVE and v < 0:
                raise MeshError(f"technological parameter {f.name} must be >= 0")
            object.__setattr__(self, f.name, v)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}


class Mesh:
    """Immutable triangle surface mesh.

    Attributes:
        vertices: (n, 3) float64 coordinates in mm, file order preserved.
        faces: (m, 3) int vertex-index triples.
        source_node_ids: original file node ids per vertex (PAT loads only).
    """

    def __init__(self, vertices, faces, source_node_ids=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError("vertices must be an (n, 3) array")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise MeshError("faces must be an (m, 3) array")
        self.source_node_ids = None if source_node_ids is None else np.asarray(source_node_ids, dtype=np.int64)
        self._validate()
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)

    def _validate(self):
        n = len(self.vertices)
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinate")
        if len(self.faces):
            if self.faces.min() < 0 or self.faces.max() >= n:
                bad = int(np.argmax((self.faces < 0) | (self.faces >= n)))
                raise MeshError(f"face {bad // 3} references vertex index out of range [0, {n})")
            a, b, c = self.faces[:, 0], self.faces[:, 1], self.faces[:, 2]
            dup = (a == b) | (b == c) | (a == c)
            if dup.any():
                raise MeshError(f"face {int(np.argmax(dup))} repeats a vertex index")
            for u, v in ((a, b), (b, c), (a, c)):
                d = self.vertices[u] - self.vertices[v]
                if np.any((d * d).sum(axis=1) == 0.0):
                    raise MeshError("face edge with zero length")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bounding_box(self):
        """(min_xyz, max_xyz) corner arrays."""
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


class MeshGraph:
    """Undirected edge graph of a mesh, CSR adjacency weighted by edge length."""

    def __init__(self, n_vertices, edges, weights):
        # edges: (e, 2) unique undirected pairs, weights: (e,) mm
        self.n_vertices = int(n_vertices)
        self.edges = np.asarray(edges, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        if np.any(self.weights <= 0):
            raise MeshError("graph edge with non-positive weight")
        both = np.concatenate([self.edges, self.edges[:, ::-1]])
        w2 = np.concatenate([self.weights, self.weights])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both, w2 = both[order], w2[order]
        self.indptr = np.zeros(self.n_vertices + 1, dtype=np.int64)
        np.add.at(self.indptr, both[:, 0] + 1, 1)
        np.cumsum(self.indptr, out=self.indptr)
        self.indices = np.ascontiguousarray(both[:, 1])
        self.csr_weights = np.ascontiguousarray(w2)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, u: int):
        """(neighbor ids, edge lengths) for vertex u."""
        s, e = self.indptr[u], self.indptr[u + 1]
        return self.indices[s:e], self.csr_weights[s:e]


def _edge_length(vertices, u, v):
    # subtraction/square/sum order fixed so recomputation is bit-identical
    d = vertices[u] - vertices[v]
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2])


def build_graph(mesh: Mesh) -> MeshGraph:
    """Build the edge-length-weighted graph over unique undirected face edges."""
    f = mesh.faces
    pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [0, 2]]])
    pairs = np.sort(pairs, axis=1)
    pairs = np.unique(pairs, axis=0)
    w = _edge_length(mesh.vertices, pairs[:, 0], pairs[:, 1])
    return MeshGraph(mesh.n_vertices, pairs, w)


def geodesic_distances(graph: MeshGraph, source: int) -> np.ndarray:
    """Single-source shortest-path distances along graph edges (Dijkstra).

    Unreachable vertices get ``inf``. Ties pop in (distance, vertex id) order
    so results are deterministic.
    """
    n = graph.n_vertices
    if not 0 <= source < n:
        raise MeshError(f"source vertex {source} out of range [0, {n})")
    dist = np.full(n, np.inf)
    dist[source] = 0.0
    indptr, indices, weights = graph.indptr, graph.indices, graph.csr_weights
    heap = [(0.0, source)]
    while heap:
        d, u = heappop(heap)
        if d > dist[u]:
            continue
        for i in range(indptr[u], indptr[u + 1]):
            v = indices[i]
            nd = d + weights[i]
            if nd < dist[v]:
                dist[v] = nd
                heappush(heap, (nd, v))
    return dist


def knn_euclidean(mesh: Mesh, query: int, k: int) -> np.ndarray:
    """Ids of the k vertices closest to ``query`` (itself included).

    Distance ties break toward the smaller vertex index; the result equals an
    exhaustive stable sort by squared Euclidean distance.
    """
    n = mesh.n_vertices
    if not 1 <= k <= n:
        raise MeshError(f"k={k} out of range [1, {n}]")
    if not 0 <= query < n:
        raise MeshError(f"query vertex {query} out of range [0, {n})")
    d = mesh.vertices - mesh.vertices[query]
    d2 = (d * d).sum(axis=1)
    return np.argsort(d2, kind="stable")[:k]


def knn_batch(vertices: np.ndarray, query_points: np.ndarray, k: int) -> np.ndarray:
    """k nearest vertex ids for each query point, same tie rule as knn_euclidean."""
    out = np.empty((len(query_points), k), dtype=np.int64)
    chunk = max(1, int(4e6) // max(len(vertices), 1))
    for s in range(0, len(query_points), chunk):
        q = query_points[s:s + chunk]
        d2 = ((q[:, None, :] - vertices[None, :, :]) ** 2).sum(axis=2)
        out[s:s + chunk] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def subsample(mesh: Mesh, fraction: float, seed: int) -> np.ndarray:
    """Uniform random vertex ids without replacement, floor(fraction * n) of them."""
    if not 0 < fraction <= 1:
        raise MeshError(f"fraction {fraction} out of range (0, 1]")
    n = mesh.n_vertices
    m = int(fraction * n)
    rng = np.random.default_rng(seed)
    ids = rng.choice(n, size=m, replace=False)
    ids.sort()
    return ids


# ---------------------------------------------------------------------------
# file I/O


def load_obj(path) -> Mesh:
    """Load the OBJ subset: 'v x y z' and 'f i j k' lines, '#' comments."""
    vertices, faces = [], []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            if tok[0] == "v":
                if len(tok) != 4:
                    raise MeshError(f"{path}:{ln}: vertex record needs 3 coordinates")
                try:
                    vertices.append((float(tok[1]), float(tok[2]), float(tok[3])))
                except ValueError:
                    raise MeshError(f"{path}:{ln}: bad vertex coordinate") from None
            elif tok[0] == "f":
                if len(tok) != 4:
                    raise MeshError(f"{path}:{ln}: only triangular faces are supported")
                try:
                    idx = [int(t) for t in tok[1:]]
                except ValueError:
                    raise MeshError(f"{path}:{ln}: bad face index") from None
                if any(i < 1 for i in idx):
                    raise MeshError(f"{path}:{ln}: face indices are 1-based positive integers")
                faces.append([i - 1 for i in idx])
            else:
                raise MeshError(f"{path}:{ln}: unsupported record '{tok[0]}'")
    if not vertices:
        raise MeshError(f"{path}: no vertices")
    try:
        return Mesh(np.array(vertices), np.array(faces).reshape(-1, 3))
    except MeshError as e:
        raise MeshError(f"{path}: {e}") from None


def save_obj(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices:
            # repr of Python floats round-trips bit-exactly
            fh.write(f"v {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for a, b, c in mesh.faces:
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def load_pat(path) -> Mesh:
    """Load the simplified PATRAN-style subset ('N' node and 'E' element cards)."""
    node_ids, coords, elems = [], [], []
    with open(path) as fh:
        for ln, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tok = line.split()
            if tok[0] == "N":
                if len(tok) != 5:
                    raise MeshError(f"{path}:{ln}: node card needs id and 3 coordinates")
                try:
                    node_ids.append(int(tok[1]))
                    coords.append((float(tok[2]), float(tok[3]), float(tok[4])))
                except ValueError:
                    raise MeshError(f"{path}:{ln}: bad node card") from None
                if node_ids[-1] <= 0:
                    raise MeshError(f"{path}:{ln}: node ids are positive integers")
            elif tok[0] == "E":
                if len(tok) != 5:
                    raise MeshError(f"{path}:{ln}: element card needs id and 3 node ids")
                try:
                    elems.append((ln, int(tok[2]), int(tok[3]), int(tok[4])))
                except ValueError:
                    raise MeshError(f"{path}:{ln}: bad element card") from None
            else:
                raise MeshError(f"{path}:{ln}: unknown card type '{tok[0]}'")
    if not node_ids:
        raise MeshError(f"{path}: no node cards")
    remap = {}
    for nid in node_ids:
        if nid in remap:
            raise MeshError(f"{path}: duplicate node id {nid}")
        remap[nid] = len(remap)
    faces = []
    for ln, n1, n2, n3 in elems:
        try:
            faces.append((remap[n1], remap[n2], remap[n3]))
        except KeyError as e:
            raise MeshError(f"{path}:{ln}: element references missing node id {e.args[0]}") from None
    try:
        return Mesh(np.array(coords), np.array(faces, dtype=np.int64).reshape(-1, 3),
                    source_node_ids=node_ids)
    except MeshError as e:
        raise MeshError(f"{path}: {e}") from None


def save_pat(mesh: Mesh, path) -> None:
    ids = mesh.source_node_ids
    if ids is None:
        ids = np.arange(1, mesh.n_vertices + 1)
    with open(path, "w") as fh:
        for nid, (x, y, z) in zip(ids, mesh.vertices):
            fh.write(f"N {nid} {float(x)!r} {float(y)!r} {float(z)!r}\n")
        for e, (a, b, c) in enumerate(mesh.faces, start=1):
            fh.write(f"E {e} {ids[a]} {ids[b]} {ids[c]}\n")


def load_gates(path, mesh: Mesh | None = None):
    """Load (gates, technological parameters) from a gates JSON file.

    When a mesh is given, gate node ids are validated against it.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise MeshError(f"{path}: invalid gates document: {e}") from None
    if not isinstance(doc, dict) or "gates" not in doc:
        raise MeshError(f"{path}: gates document needs a 'gates' list")
    gates = []
    for i, g in enumerate(doc["gates"]):
        try:
            gate = Gate(node_id=int(g["node_id"]), opening_time=float(g["opening_time"]))
        except (KeyError, TypeError, ValueError) as e:
            raise MeshError(f"{path}: gate {i}: {e}") from None
        if mesh is not None and gate.node_id >= mesh.n_vertices:
            raise MeshError(
                f"{path}: gate {i} node_id {gate.node_id} out of range for mesh "
                f"with {mesh.n_vertices} vertices")
        gates.append(gate)
    if not gates:
        raise MeshError(f"{path}: empty gate list")
    params = None
    if doc.get("parameters"):
        known = {f.name for f in fields(TechnologicalParameters)}
        extra = set(doc["parameters"]) - known
        if extra:
            raise MeshError(f"{path}: unknown technological parameters {sorted(extra)}")
        params = TechnologicalParameters(**doc["parameters"])
    return gates, params


def save_gates(gates, path, params: TechnologicalParameters | None = None) -> None:
    doc = {"gates": [{"node_id": int(g.node_id), "opening_time": float(g.opening_time)} for g in gates]}
    if params is not None:
        doc["parameters"] = params.to_dict()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
