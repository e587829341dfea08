"""K-fold cross-validation of the two-stage pipeline.

Per fold: the boosted fill-time model trains on the train samples' sampled
points, predicts and smooths fill time for every sample, and the deflection
network trains on the train samples' rasters — one row per sample for the
predicted fill-time raster and one for the ground-truth raster, each expanded
into 4 mirror variants. Test metrics are computed on the per-vertex fields
after smoothing (fill time) and after reprojection (deflection), in both
aggregations: the mean of per-sample metrics and pooled over every point of
the fold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import gbm
from .cnn import TrainConfig, build_network, predict_deflection, train
from .dataset import SimulationSample
from .features import GateDistanceTable, extract_features, reachable_mask
from .mesh import build_graph, subsample
from .metrics import mae, rmse
from .pipeline import DEFAULT_FRACTION, DEFAULT_SMOOTHING_K
from .projection import (
    COARSE_HEIGHT,
    COARSE_WIDTH,
    RASTER_HEIGHT,
    RASTER_WIDTH,
    fit_plane,
    project,
    reproject,
    upscale_bilinear,
)


class CrossvalError(ValueError):
    pass


@dataclass(frozen=True)
class CVConfig:
    folds: int = 5
    seed: int = 0
    fraction: float = DEFAULT_FRACTION
    smoothing_k: int = DEFAULT_SMOOTHING_K
    gbm: gbm.GBMConfig = field(default_factory=gbm.GBMConfig)
    cnn_epochs: int = 2
    cnn_batch_size: int = 8
    cnn_step_size: float = 5e-3
    dump_dir: str | None = None  # write per-point test predictions here


def fold_assignment(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Shuffled partition into ``folds`` test sets; the first n % folds folds
    get the extra sample."""
    if folds < 2 or folds > n:
        raise CrossvalError(f"need 2 <= folds <= {n}, got {folds}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xF01D)))
    order = rng.permutation(n)
    base = n // folds
    extra = n % folds
    out = []
    start = 0
    for i in range(folds):
        size = base + (1 if i < extra else 0)
        out.append(np.sort(order[start:start + size]))
        start += size
    return out


def _subsample_seed(seed: int, sample: SimulationSample) -> int:
    """Per-sample smoothing seed, derived from content so identical samples
    subsample identically."""
    import zlib

    content = zlib.crc32(sample.mesh.vertices.tobytes())
    content = zlib.crc32(np.asarray(
        [[g.node_id, g.opening_time] for g in sample.gates]).tobytes(), content)
    return int(np.random.SeedSequence((seed, 0x5A3, content)).generate_state(1)[0])


def coarse_target(raster) -> np.ndarray:
    """Resize a projected 384x768 map to 12x24 by block averaging.

    Blocks average only silhouette pixels so boundary blocks keep the field's
    magnitude instead of bleeding toward the zero background; fully uncovered
    blocks stay 0. Accepts a RasterMap or a plain (values, mask) pair.
    """
    values, mask = (raster.values, raster.mask) if hasattr(raster, "values") else raster
    if values.shape != (RASTER_HEIGHT, RASTER_WIDTH):
        raise CrossvalError(f"expected full raster, got {values.shape}")
    bh = RASTER_HEIGHT // COARSE_HEIGHT
    bw = RASTER_WIDTH // COARSE_WIDTH
    v = values.reshape(COARSE_HEIGHT, bh, COARSE_WIDTH, bw)
    m = mask.astype(np.float64).reshape(COARSE_HEIGHT, bh, COARSE_WIDTH, bw)
    num = (v * m).sum(axis=(1, 3))
    den = m.sum(axis=(1, 3))
    out = np.zeros((COARSE_HEIGHT, COARSE_WIDTH))
    covered = den > 0
    out[covered] = num[covered] / den[covered]
    return out


class _PreparedSample:
    """Per-sample artifacts shared by every fold."""

    def __init__(self, sample: SimulationSample, config: CVConfig):
        if not sample.has_truth:
            raise CrossvalError(f"sample {sample.name} lacks ground-truth fields")
        self.sample = sample
        graph = build_graph(sample.mesh)
        self.table = GateDistanceTable.compute(graph, sample.gates)
        self.subsample_seed = _subsample_seed(config.seed, sample)
        ids = subsample(sample.mesh, config.fraction, self.subsample_seed)
        ids = ids[reachable_mask(self.table, ids)]
        if len(ids) == 0:
            raise CrossvalError(f"sample {sample.name}: no reachable sampled points")
        self.sampled = ids
        self.features = extract_features(sample.mesh, sample.gates, self.table, ids)
        self.fill_at_sampled = sample.fill_time[ids]
        self.plane = fit_plane(sample.mesh.vertices)
        truth_fill_raster, corr = project(sample.mesh, sample.fill_time, self.plane)
        self.truth_fill_raster = truth_fill_raster
        self.correspondence = corr
        defl_raster, _ = project(sample.mesh, sample.deflection, self.plane)
        self.target_coarse = coarse_target(defl_raster)

    def predicted_fill(self, model: gbm.GBMModel, k: int) -> np.ndarray:
        point_preds = model.predict(self.features)
        return gbm.smooth_predictions(self.sample.mesh, self.sampled, point_preds, k)


def crossvalidate(samples: list[SimulationSample], config: CVConfig | None = None) -> dict:
    """Run the k-fold evaluation; returns the report as a JSON-ready dict."""
    config = config or CVConfig()
    n = len(samples)
    if n < config.folds:
        raise CrossvalError(f"dataset of {n} samples is smaller than {config.folds} folds")
    prepared = [_PreparedSample(s, config) for s in samples]
    folds = fold_assignment(n, config.folds, config.seed)
    fold_reports = []
    for fold_idx, test_ids in enumerate(folds):
        test_set = set(int(i) for i in test_ids)
        train_ids = [i for i in range(n) if i not in test_set]
        fold_reports.append(_run_fold(prepared, train_ids, sorted(test_set), config, fold_idx))
    report = {
        "n_samples": n,
        "folds": config.folds,
        "seed": config.seed,
        "fold_sizes": [len(f) for f in folds],
        "subsample_seeds": [p.subsample_seed for p in prepared],
        "per_fold": fold_reports,
        "mean": _mean_over_folds(fold_reports),
    }
    return report


def _run_fold(prepared, train_ids, test_ids, config: CVConfig, fold_idx: int) -> dict:
    # stage 1: fill-time regressor on the train folds' sampled points
    X = np.vstack([prepared[i].features for i in train_ids])
    y = np.concatenate([prepared[i].fill_at_sampled for i in train_ids])
    model = gbm.fit(X, y, config.gbm)

    # stage 2 training set: predicted and ground-truth fill-time rasters
    rows = []
    for i in train_ids:
        p = prepared[i]
        fill_pred = p.predicted_fill(model, config.smoothing_k)
        raster_pred, _ = project(p.sample.mesh, fill_pred, p.plane)
        rows.append((raster_pred.channels(), p.target_coarse))
        rows.append((p.truth_fill_raster.channels(), p.target_coarse))
    # one seed for every fold: identical train folds then give identical nets
    net = build_network(seed=config.seed)
    tc = TrainConfig(step_size=config.cnn_step_size, batch_size=config.cnn_batch_size,
                     epochs=config.cnn_epochs, seed=config.seed)
    train(net, rows, tc)

    # evaluation on the test fold
    fill_sample_rmse, fill_sample_mae = [], []
    defl_sample_rmse, defl_sample_mae = [], []
    fill_pred_all, fill_true_all = [], []
    defl_pred_all, defl_true_all = [], []
    for i in test_ids:
        p = prepared[i]
        fill_pred = p.predicted_fill(model, config.smoothing_k)
        raster_pred, corr = project(p.sample.mesh, fill_pred, p.plane)
        coarse = predict_deflection(net, raster_pred)
        defl_pred = reproject(upscale_bilinear(coarse), corr)
        fill_true = p.sample.fill_time
        defl_true = p.sample.deflection
        fill_sample_rmse.append(rmse(fill_pred, fill_true))
        fill_sample_mae.append(mae(fill_pred, fill_true))
        defl_sample_rmse.append(rmse(defl_pred, defl_true))
        defl_sample_mae.append(mae(defl_pred, defl_true))
        fill_pred_all.append(fill_pred)
        fill_true_all.append(fill_true)
        defl_pred_all.append(defl_pred)
        defl_true_all.append(defl_true)
        if config.dump_dir:
            import os

            from .dataset import save_fields

            os.makedirs(config.dump_dir, exist_ok=True)
            save_fields(os.path.join(config.dump_dir, f"fold{fold_idx}_sample{i:03d}.csv"),
                        fill_pred, defl_pred)
    fill_pred_all = np.concatenate(fill_pred_all)
    fill_true_all = np.concatenate(fill_true_all)
    defl_pred_all = np.concatenate(defl_pred_all)
    defl_true_all = np.concatenate(defl_true_all)
    train_defl_mean = float(np.concatenate(
        [prepared[i].sample.deflection for i in train_ids]).mean())
    baseline = rmse(np.full(len(defl_true_all), train_defl_mean), defl_true_all)
    return {
        "fold": fold_idx,
        "n_train": len(train_ids),
        "n_test": len(test_ids),
        "n_points": int(len(fill_true_all)),
        "fill_time": {
            "rmse_samples": float(np.mean(fill_sample_rmse)),
            "mae_samples": float(np.mean(fill_sample_mae)),
            "rmse_points": rmse(fill_pred_all, fill_true_all),
            "mae_points": mae(fill_pred_all, fill_true_all),
        },
        "deflection": {
            "rmse_samples": float(np.mean(defl_sample_rmse)),
            "mae_samples": float(np.mean(defl_sample_mae)),
            "rmse_points": rmse(defl_pred_all, defl_true_all),
            "mae_points": mae(defl_pred_all, defl_true_all),
        },
        "baseline_deflection_rmse_points": baseline,
        "fill_range": [float(fill_true_all.min()), float(fill_true_all.max())],
    }


def _mean_over_folds(fold_reports: list[dict]) -> dict:
    out = {}
    for target in ("fill_time", "deflection"):
        out[target] = {
            key: float(np.mean([fr[target][key] for fr in fold_reports]))
            for key in ("rmse_samples", "mae_samples", "rmse_points", "mae_points")
        }
    return out


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)
