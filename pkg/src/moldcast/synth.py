"""Synthetic molding scenarios with analytic ground truth.

Stands in for proprietary simulation exports. Each sample is a bent thin
plate (randomized curvature, optional interior rectangular cutouts, optional
rim flange) with random injection gates. Ground-truth fields are analytic:

* fill time: ``t(p) = min over gates g of opening(g) + geodesic(p, g) / v``
  for a scenario flow speed ``v`` — the physical signal the gate features
  are built to capture;
* deflection: ``d(p) = a * t(p) * r(p)/L + b * h(p)`` where ``r`` is distance
  to the vertex centroid, ``L`` the bounding-box diagonal and ``h`` the
  normalized height magnitude above the least-squares plane. A smooth,
  learnable stand-in, not a physical model.

Oracle arithmetic sticks to plain elementwise expressions so a scalar
reference loop reproduces stored fields bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import SimulationSample
from .features import GateDistanceTable
from .mesh import Gate, Mesh, MeshError, TechnologicalParameters, build_graph
from .projection import fit_plane


class SynthError(RuntimeError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_samples: int = 10
    vertex_range: tuple[int, int] = (2000, 10000)
    gate_range: tuple[int, int] = (1, 5)
    # scenario constants are dataset-level, like a single molding material
    flow_speed: float = 50.0  # mm/s
    coeff_a: float = 0.25  # mm per (s * unit radius)
    coeff_b: float = 1.5  # mm
    opening_time_range: tuple[float, float] = (0.0, 2.0)  # s
    cutout_max: int = 2
    flange_probability: float = 0.7
    seed: int = 0

    def __post_init__(self):
        for name in ("vertex_range", "gate_range", "opening_time_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise SynthError(f"{name} is empty: {lo} > {hi}")
        if self.n_samples < 1:
            raise SynthError("n_samples must be >= 1")
        if self.vertex_range[0] < 200:
            raise SynthError("vertex_range lower bound must be >= 200")
        if self.flow_speed <= 0:
            raise SynthError("flow speed must be > 0")


@dataclass
class OracleParams:
    """Scenario constants needed to re-evaluate the analytic fields."""

    flow_speed: float
    coeff_a: float
    coeff_b: float


def _build_plate(rng, target_vertices: int, cutout_max: int, flange_probability: float) -> Mesh:
    aspect = rng.uniform(1.6, 2.4)
    nw = max(10, int(round(np.sqrt(target_vertices / aspect))))
    nu = max(10, int(round(target_vertices / nw)))
    width = rng.uniform(250.0, 500.0)
    length = aspect * width
    u = np.linspace(0.0, length, nu)
    w = np.linspace(0.0, width, nw)
    uu, ww = np.meshgrid(u, w, indexing="ij")
    fu = uu / length
    fw = ww / width
    amp1 = rng.uniform(5.0, 40.0)
    amp2 = rng.uniform(5.0, 40.0)
    bow = rng.uniform(-60.0, 60.0)
    f1 = rng.uniform(0.5, 2.0)
    f2 = rng.uniform(0.5, 2.0)
    ph1 = rng.uniform(0.0, 2 * np.pi)
    ph2 = rng.uniform(0.0, 2 * np.pi)
    zz = (amp1 * np.sin(np.pi * f1 * fu + ph1)
          + amp2 * np.cos(np.pi * f2 * fw + ph2)
          + bow * ((fu - 0.5) ** 2 + (fw - 0.5) ** 2))
    keep = np.ones((nu, nw), dtype=bool)
    n_cut = rng.integers(0, cutout_max + 1)
    # cutouts live in disjoint length-halves, away from the rim, so the plate
    # stays connected
    for ci in range(n_cut):
        lo, hi = (0.15, 0.45) if ci % 2 == 0 else (0.55, 0.85)
        cu0 = rng.uniform(lo, hi - 0.08)
        cu1 = cu0 + rng.uniform(0.05, min(0.25, hi - cu0))
        cw0 = rng.uniform(0.15, 0.6)
        cw1 = cw0 + rng.uniform(0.05, min(0.25, 0.85 - cw0))
        keep &= ~((fu > cu0 * 1.0) & (fu < cu1) & (fw > cw0) & (fw < cw1))
    index = -np.ones((nu, nw), dtype=np.int64)
    index[keep] = np.arange(keep.sum())
    verts = np.column_stack([uu[keep], ww[keep], zz[keep]])
    faces = []
    for i in range(nu - 1):
        for j in range(nw - 1):
            a, b2 = index[i, j], index[i, j + 1]
            c, d = index[i + 1, j], index[i + 1, j + 1]
            if a >= 0 and b2 >= 0 and c >= 0:
                faces.append((a, b2, c))
            if b2 >= 0 and d >= 0 and c >= 0:
                faces.append((b2, d, c))
    faces = np.array(faces, dtype=np.int64)
    used = np.zeros(len(verts), dtype=bool)
    used[faces.ravel()] = True
    if not used.all():
        remap = -np.ones(len(verts), dtype=np.int64)
        remap[used] = np.arange(used.sum())
        verts = verts[used]
        faces = remap[faces]
        grid_ids = index.copy()
        grid_ids[keep] = np.where(index[keep] >= 0, remap[index[keep]], -1)
        index = grid_ids
    if rng.uniform() < flange_probability:
        depth = rng.uniform(5.0, 25.0)
        ring = []
        for j in range(nw):
            ring.append(index[0, j])
        for i in range(1, nu):
            ring.append(index[i, nw - 1])
        for j in range(nw - 2, -1, -1):
            ring.append(index[nu - 1, j])
        for i in range(nu - 2, 0, -1):
            ring.append(index[i, 0])
        ring = [r for r in ring if r >= 0]
        base = len(verts)
        dup = verts[ring] + np.array([0.0, 0.0, -depth])
        verts = np.vstack([verts, dup])
        flange_faces = []
        for t in range(len(ring)):
            a = ring[t]
            b2 = ring[(t + 1) % len(ring)]
            da = base + t
            db = base + (t + 1) % len(ring)
            flange_faces.append((a, b2, da))
            flange_faces.append((da, b2, db))
        faces = np.vstack([faces, np.array(flange_faces, dtype=np.int64)])
    return Mesh(verts, faces)


def _fill_time_field(table: GateDistanceTable, flow_speed: float) -> np.ndarray:
    fills = [g.opening_time + table.distances[i] / flow_speed
             for i, g in enumerate(table.gates)]
    out = fills[0]
    for f in fills[1:]:
        out = np.minimum(out, f)
    return out


def _deflection_field(mesh: Mesh, fill: np.ndarray, a: float, b: float) -> np.ndarray:
    v = mesh.vertices
    # per-column means: reproducible by a per-column reference reduction
    dx = v[:, 0] - v[:, 0].mean()
    dy = v[:, 1] - v[:, 1].mean()
    dz = v[:, 2] - v[:, 2].mean()
    r = np.sqrt(dx * dx + dy * dy + dz * dz)
    lo, hi = mesh.bounding_box()
    ex, ey, ez = hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]
    diag = np.sqrt(ex * ex + ey * ey + ez * ez)
    plane = fit_plane(v)
    sd = ((v[:, 0] - plane.origin[0]) * plane.normal[0]
          + (v[:, 1] - plane.origin[1]) * plane.normal[1]
          + (v[:, 2] - plane.origin[2]) * plane.normal[2])
    sd = np.abs(sd)
    peak = sd.max()
    h = sd / peak if peak > 0 else sd
    return a * fill * (r / diag) + b * h


def _technological_parameters(rng, fill_end: float) -> TechnologicalParameters:
    return TechnologicalParameters(
        melt_temperature=round(rng.uniform(220.0, 280.0), 1),
        cooling_time=round(rng.uniform(10.0, 30.0), 1),
        duration=round(rng.uniform(30.0, 60.0), 1),
        filling_pressure=round(rng.uniform(50.0, 120.0), 1),
        ambient_temperature=25.0,
        mold_temperature=round(rng.uniform(40.0, 80.0), 1),
        fill_end_time=float(fill_end),
    )


def synth_generate(config: SynthConfig) -> list[SimulationSample]:
    """Generate the configured number of samples, deterministic per seed."""
    seq = np.random.SeedSequence(config.seed)
    children = seq.spawn(config.n_samples)
    samples = []
    for idx, child in enumerate(children):
        rng = np.random.default_rng(child)
        sample = None
        for _ in range(10):
            try:
                sample = _generate_one(rng, config, f"synth_{idx:03d}")
                break
            except MeshError:
                continue
        if sample is None:
            raise SynthError(f"degenerate geometry retries exhausted for sample {idx}")
        samples.append(sample)
    return samples


def _generate_one(rng, config: SynthConfig, name: str) -> SimulationSample:
    target_n = int(rng.integers(config.vertex_range[0], config.vertex_range[1] + 1))
    mesh = _build_plate(rng, target_n, config.cutout_max, config.flange_probability)
    n_gates = int(rng.integers(config.gate_range[0], config.gate_range[1] + 1))
    nodes = rng.choice(mesh.n_vertices, size=n_gates, replace=False)
    times = rng.uniform(*config.opening_time_range, size=n_gates)
    gates = [Gate(int(n), float(t)) for n, t in zip(nodes, times)]
    graph = build_graph(mesh)
    table = GateDistanceTable.compute(graph, gates)
    if not np.all(np.isfinite(table.distances)):
        raise MeshError("disconnected plate")
    fill = _fill_time_field(table, config.flow_speed)
    deflection = _deflection_field(mesh, fill, config.coeff_a, config.coeff_b)
    params = _technological_parameters(rng, fill.max())
    return SimulationSample(
        name=name,
        mesh=mesh,
        gates=gates,
        parameters=params,
        fill_time=fill,
        deflection=deflection,
        provenance="synthetic",
        oracle=OracleParams(config.flow_speed, config.coeff_a, config.coeff_b),
    )
