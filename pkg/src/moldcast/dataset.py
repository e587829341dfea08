"""Simulation samples and their on-disk layout.

A dataset directory holds one subdirectory per sample plus a manifest:

    dataset/
      manifest.json
      sample_000/
        mesh.obj
        gates.json          gates plus optional technological parameters
        fields.csv          vertex_id,fill_time,deflection ground truth
        meta.json           name, provenance, oracle constants (synthetic only)

``import_sample`` ingests foreign (mesh, gates) pairs; without truth fields
the sample can be predicted on but not used for training.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .mesh import (
    Gate,
    Mesh,
    MeshError,
    TechnologicalParameters,
    load_gates,
    load_obj,
    load_pat,
    save_gates,
    save_obj,
)


class DatasetError(ValueError):
    pass


@dataclass
class SimulationSample:
    name: str
    mesh: Mesh
    gates: list[Gate]
    parameters: TechnologicalParameters | None
    fill_time: np.ndarray | None  # (n_vertices,) seconds
    deflection: np.ndarray | None  # (n_vertices,) mm
    provenance: str  # "synthetic" | "imported"
    oracle: object | None = None  # synthetic-only scenario constants

    def __post_init__(self):
        n = self.mesh.n_vertices
        for fname in ("fill_time", "deflection"):
            v = getattr(self, fname)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            if v.shape != (n,):
                raise DatasetError(f"{fname} must have one value per vertex")
            setattr(self, fname, v)
        if self.fill_time is not None and np.any(self.fill_time < 0):
            raise DatasetError("fill times must be >= 0")
        for g in self.gates:
            if g.node_id >= n:
                raise DatasetError(f"gate node {g.node_id} out of range")

    @property
    def has_truth(self) -> bool:
        return self.fill_time is not None and self.deflection is not None


def save_fields(path, fill_time, deflection) -> None:
    fill = np.asarray(fill_time, dtype=np.float64)
    defl = np.asarray(deflection, dtype=np.float64)
    with open(path, "w") as fh:
        fh.write("vertex_id,fill_time,deflection\n")
        for i, (f, d) in enumerate(zip(fill, defl)):
            fh.write(f"{i},{float(f)!r},{float(d)!r}\n")


def load_fields(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "vertex_id,fill_time,deflection":
            raise DatasetError(f"{path}: unexpected fields header {header!r}")
        fill, defl = [], []
        for ln, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DatasetError(f"{path}:{ln}: expected 3 columns")
            if int(parts[0]) != len(fill):
                raise DatasetError(f"{path}:{ln}: vertex ids must be dense and ordered")
            fill.append(float(parts[1]))
            defl.append(float(parts[2]))
    return np.array(fill), np.array(defl)


def save_sample(sample: SimulationSample, directory) -> None:
    os.makedirs(directory, exist_ok=True)
    save_obj(sample.mesh, os.path.join(directory, "mesh.obj"))
    save_gates(sample.gates, os.path.join(directory, "gates.json"), sample.parameters)
    if sample.has_truth:
        save_fields(os.path.join(directory, "fields.csv"), sample.fill_time, sample.deflection)
    meta = {"name": sample.name, "provenance": sample.provenance}
    if sample.oracle is not None:
        meta["oracle"] = {
            "flow_speed": sample.oracle.flow_speed,
            "coeff_a": sample.oracle.coeff_a,
            "coeff_b": sample.oracle.coeff_b,
        }
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def load_sample(directory) -> SimulationSample:
    from .synth import OracleParams  # local import; synth depends on this module

    mesh = load_obj(os.path.join(directory, "mesh.obj"))
    gates, params = load_gates(os.path.join(directory, "gates.json"), mesh)
    fields_path = os.path.join(directory, "fields.csv")
    fill = defl = None
    if os.path.exists(fields_path):
        fill, defl = load_fields(fields_path)
    meta_path = os.path.join(directory, "meta.json")
    name = os.path.basename(os.path.normpath(directory))
    provenance = "imported"
    oracle = None
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
        name = meta.get("name", name)
        provenance = meta.get("provenance", provenance)
        if "oracle" in meta:
            oracle = OracleParams(**meta["oracle"])
    return SimulationSample(name, mesh, gates, params, fill, defl, provenance, oracle)


def save_dataset(samples: list[SimulationSample], directory, seed: int | None = None) -> None:
    os.makedirs(directory, exist_ok=True)
    entries = []
    for i, sample in enumerate(samples):
        sub = f"sample_{i:03d}"
        save_sample(sample, os.path.join(directory, sub))
        entries.append({
            "dir": sub,
            "name": sample.name,
            "vertices": sample.mesh.n_vertices,
            "faces": sample.mesh.n_faces,
            "gates": len(sample.gates),
        })
    manifest = {"n_samples": len(samples), "samples": entries}
    if seed is not None:
        manifest["seed"] = seed
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def load_dataset(directory) -> list[SimulationSample]:
    manifest_path = os.path.join(directory, "manifest.json")
    if not os.path.exists(manifest_path):
        raise DatasetError(f"{directory}: no manifest.json")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    return [load_sample(os.path.join(directory, e["dir"])) for e in manifest["samples"]]


def import_sample(mesh_path, gates_path, fields_path=None, name: str | None = None) -> SimulationSample:
    """Build an imported sample from loose files; format by extension sniffing."""
    text = str(mesh_path)
    if text.endswith(".pat"):
        mesh = load_pat(mesh_path)
    elif text.endswith(".obj"):
        mesh = load_obj(mesh_path)
    else:
        # content sniff: first meaningful line decides
        with open(mesh_path) as fh:
            first = ""
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if line:
                    first = line.split()[0]
                    break
        if first == "N":
            mesh = load_pat(mesh_path)
        elif first == "v":
            mesh = load_obj(mesh_path)
        else:
            raise MeshError(f"{mesh_path}: cannot determine mesh format")
    gates, params = load_gates(gates_path, mesh)
    fill = defl = None
    if fields_path is not None:
        fill, defl = load_fields(fields_path)
    return SimulationSample(
        name=name or os.path.splitext(os.path.basename(text))[0],
        mesh=mesh,
        gates=gates,
        parameters=params,
        fill_time=fill,
        deflection=defl,
        provenance="imported",
    )
