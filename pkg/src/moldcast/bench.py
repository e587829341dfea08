"""Wall-clock timing of the three pipeline stages."""

from __future__ import annotations

import os
import platform

from .dataset import SimulationSample
from .pipeline import DEFAULT_FRACTION, DEFAULT_SMOOTHING_K, predict_fields


def machine_descriptor() -> dict:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "cpu_count": os.cpu_count(),
        "python": platform.python_version(),
    }


def benchmark(sample: SimulationSample, gbm_model, net,
              fraction: float = DEFAULT_FRACTION, smoothing_k: int = DEFAULT_SMOOTHING_K,
              seed: int = 0) -> dict:
    """Run the pipeline once and report per-stage seconds plus the machine."""
    result = predict_fields(sample.mesh, sample.gates, gbm_model, net,
                            fraction=fraction, smoothing_k=smoothing_k, seed=seed)
    record = dict(result.timings)
    record["vertices"] = sample.mesh.n_vertices
    record["faces"] = sample.mesh.n_faces
    record["machine"] = machine_descriptor()
    return record
