"""Training loop and test-time mirror-averaged prediction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..projection import MIRROR_FLIPS, RasterMap, flip2d
from .network import (
    OUTPUT_HEIGHT,
    OUTPUT_WIDTH,
    DeflectionNet,
    backward_batch,
    forward_batch,
    mse_loss,
    _to_nchw,
)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    step_size: float = 1e-3
    batch_size: int = 8
    epochs: int = 30
    seed: int = 0
    input_scale: float | None = None  # fill-time max; computed from data when None
    output_scale: float | None = None  # deflection max; computed from data when None

    def __post_init__(self):
        if self.step_size <= 0:
            raise TrainingError("step_size must be > 0")
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.epochs < 1:
            raise TrainingError("epochs must be >= 1")


class Adam:
    """Adam optimizer over the network's parameter arrays, float32 state."""

    def __init__(self, net: DeflectionNet, step_size: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.step_size = np.float32(step_size)
        self.beta1 = np.float32(beta1)
        self.beta2 = np.float32(beta2)
        self.eps = np.float32(eps)
        self.t = 0
        self.state = {}
        for layer, pname, arr in net.parameters():
            key = f"{layer.name}.{pname}"
            self.state[key] = (np.zeros_like(arr), np.zeros_like(arr))

    def step(self, net: DeflectionNet, grads: dict) -> None:
        self.t += 1
        c1 = np.float32(1.0 - self.beta1 ** self.t)
        c2 = np.float32(1.0 - self.beta2 ** self.t)
        for layer, pname, arr in net.parameters():
            key = f"{layer.name}.{pname}"
            g = grads[key].astype(np.float32)
            m, v = self.state[key]
            m *= self.beta1
            m += (np.float32(1.0) - self.beta1) * g
            v *= self.beta2
            v += (np.float32(1.0) - self.beta2) * g * g
            mhat = m / c1
            vhat = v / c2
            arr -= self.step_size * mhat / (np.sqrt(vhat) + self.eps)


def _warm_start_output_bias(net: DeflectionNet, inputs: np.ndarray, targets: np.ndarray) -> None:
    """Point the final bias at the coverage-weighted target mean.

    The first epochs otherwise go on hauling the output level up from zero;
    starting at the mean leaves them for spatial structure.
    """
    mask = inputs[:, 1]
    n = mask.shape[0]
    covered = mask.reshape(n, OUTPUT_HEIGHT, mask.shape[1] // OUTPUT_HEIGHT,
                           OUTPUT_WIDTH, mask.shape[2] // OUTPUT_WIDTH).max(axis=(2, 4)) > 0
    total = float(covered.sum())
    if total == 0:
        return
    warm = float(targets[:, 0][covered].sum()) / total
    net.by_name["conv16"].b[:] = np.float32(warm / net.output_scale)


def mirror_expand(dataset):
    """Each (input image, target map) row becomes its 4 mirror variants."""
    rows = []
    for image, target in dataset:
        target = np.asarray(target)
        if target.ndim == 3:
            target = target[:, :, 0]
        if target.shape != (OUTPUT_HEIGHT, OUTPUT_WIDTH):
            raise TrainingError(
                f"target must be {OUTPUT_HEIGHT}x{OUTPUT_WIDTH}, got {target.shape}")
        for fh, fv in MIRROR_FLIPS:
            rows.append((flip2d(np.asarray(image), fh, fv), flip2d(target, fh, fv)))
    return rows


def train(net: DeflectionNet, dataset, config: TrainConfig | None = None):
    """Train in place on (input raster image, target 12x24 map) pairs.

    Every pair is expanded into its 4 mirror variants. Returns
    (net, per-epoch mean training loss). Deterministic for a fixed seed.
    """
    config = config or TrainConfig()
    if not dataset:
        raise TrainingError("empty training dataset")
    rows = mirror_expand(dataset)
    inputs = np.stack([_to_nchw(img, np.float32)[0] for img, _ in rows])
    targets = np.stack([t for _, t in rows]).astype(np.float32)[:, None, :, :]
    if config.input_scale is not None:
        net.input_scale = config.input_scale
    else:
        net.input_scale = max(float(inputs[:, 0].max()), 1e-12)
    if config.output_scale is not None:
        net.output_scale = config.output_scale
    else:
        m = float(np.abs(targets).max())
        net.output_scale = m if m > 0 else 1.0
    _warm_start_output_bias(net, inputs, targets)
    rng = np.random.default_rng(config.seed)
    opt = Adam(net, config.step_size)
    history = []
    n = len(rows)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            caches: list = []
            out = forward_batch(net, np.ascontiguousarray(inputs[idx]), caches)
            loss, dout = mse_loss(out, targets[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}")
            grads = backward_batch(net, caches, dout.astype(np.float32))
            opt.step(net, grads)
            total += loss * len(idx)
        history.append(total / n)
    return net, history


def predict_deflection(net: DeflectionNet, raster: RasterMap | np.ndarray) -> np.ndarray:
    """Mirror-averaged (12, 24) deflection map for one raster.

    The net runs on the four mirror variants of the input; each output map is
    un-mirrored with the inverse flip and the four aligned maps are averaged.
    Deflection is a displacement magnitude, so the map is clamped at zero.
    """
    image = raster.channels() if isinstance(raster, RasterMap) else np.asarray(raster)
    variants = [flip2d(image, fh, fv) for fh, fv in MIRROR_FLIPS]
    xb = np.stack([_to_nchw(v, np.float32)[0] for v in variants])
    out = forward_batch(net, xb)  # (4, 1, 12, 24)
    # each flip is an involution, so un-mirroring applies the same flip again
    aligned = [flip2d(out[i, 0], fh, fv) for i, (fh, fv) in enumerate(MIRROR_FLIPS)]
    return np.maximum((aligned[0] + aligned[1] + aligned[2] + aligned[3]) / 4.0, 0.0)
