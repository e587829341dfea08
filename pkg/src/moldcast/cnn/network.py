"""The fixed deflection network: a U-Net-style encoder with one skip fusion.

The input is the 384x768 two-channel raster (fill-time values and silhouette
mask); the output is a 12x24 deflection map in millimeters. The layer list,
every intermediate shape and every parameter count are fixed; construction
verifies them and refuses to build anything else. Total trainable parameter
count: 284,363.

Hidden activations are ReLU; the last two convolutions are linear. The two
zero-parameter scaling layers make training well-conditioned: the input
scaling divides the fill-time channel by a dataset-level maximum and the
output scaling multiplies the final map by a dataset-level deflection maximum.
"""

from __future__ import annotations

import io
import json

import numpy as np

from .layers import Conv2D, InputScale, OutputScale, TransposeConv2D

INPUT_HEIGHT = 384
INPUT_WIDTH = 768
INPUT_CHANNELS = 2
OUTPUT_HEIGHT = 12
OUTPUT_WIDTH = 24

# (name, type, kernel, stride, in_ch, out_ch, activation, out_h, out_w, params)
ARCHITECTURE = (
    ("scale_in", "input_scale", 0, 0, 2, 2, "-", 384, 768, 0),
    ("conv1", "conv", 5, 1, 2, 8, "relu", 384, 768, 408),
    ("conv2", "conv", 5, 2, 8, 8, "relu", 192, 384, 1608),
    ("conv3", "conv", 5, 1, 8, 16, "relu", 192, 384, 3216),
    ("conv4", "conv", 5, 2, 16, 16, "relu", 96, 192, 6416),
    ("conv5", "conv", 3, 1, 16, 32, "relu", 96, 192, 4640),
    ("conv6", "conv", 3, 2, 32, 32, "relu", 48, 96, 9248),
    ("conv7", "conv", 3, 1, 32, 64, "relu", 48, 96, 18496),
    ("conv8", "conv", 3, 2, 64, 64, "relu", 24, 48, 36928),
    ("conv9", "conv", 3, 1, 64, 64, "relu", 24, 48, 36928),
    ("conv10", "conv", 3, 2, 64, 64, "relu", 12, 24, 36928),
    ("conv11", "conv", 3, 1, 64, 64, "relu", 12, 24, 36928),
    ("conv12", "conv", 3, 2, 64, 64, "relu", 6, 12, 36928),
    ("up1", "transpose", 3, 2, 64, 32, "relu", 12, 24, 18464),
    ("concat", "concat", 0, 0, 96, 96, "-", 12, 24, 0),
    ("conv13", "conv", 3, 1, 96, 32, "relu", 12, 24, 27680),
    ("conv14", "conv", 3, 1, 32, 32, "relu", 12, 24, 9248),
    ("conv15", "conv", 3, 1, 32, 1, "linear", 12, 24, 289),
    ("conv16", "conv", 3, 1, 1, 1, "linear", 12, 24, 10),
    ("scale_out", "output_scale", 0, 0, 1, 1, "-", 12, 24, 0),
)

SKIP_SOURCE = "conv10"  # its output is concatenated with the upsampled branch
TOTAL_PARAMS = 284_363

WEIGHTS_FORMAT = "moldcast-weights"
WEIGHTS_VERSION = 1


class NetworkError(ValueError):
    pass


class DeflectionNet:
    """Deflection predictor with the fixed layer stack above."""

    def __init__(self, layers: list, seed: int):
        self.layers = layers
        self.by_name = {l.name: l for l in layers}
        self.seed = seed

    @property
    def input_scale(self) -> float:
        return self.by_name["scale_in"].scale

    @input_scale.setter
    def input_scale(self, v: float):
        if v <= 0:
            raise NetworkError("input scale must be > 0")
        self.by_name["scale_in"].scale = float(v)

    @property
    def output_scale(self) -> float:
        return self.by_name["scale_out"].scale

    @output_scale.setter
    def output_scale(self, v: float):
        if v == 0:
            raise NetworkError("output scale must be nonzero")
        self.by_name["scale_out"].scale = float(v)

    @property
    def n_params(self) -> int:
        return sum(l.n_params for l in self.layers)

    def parameters(self):
        """(layer, param name, array) for every trainable array, fixed order."""
        for layer in self.layers:
            if layer.n_params:
                yield layer, "W", layer.W
                yield layer, "b", layer.b


def build_network(seed: int) -> DeflectionNet:
    """Construct the network and verify shape/parameter conformance."""
    rng = np.random.default_rng(seed)
    layers = []
    h, w, c = INPUT_HEIGHT, INPUT_WIDTH, INPUT_CHANNELS
    for (name, kind, k, s, cin, cout, act, eh, ew, n_params) in ARCHITECTURE:
        if kind == "input_scale":
            layer = InputScale(name, cin)
        elif kind == "output_scale":
            layer = OutputScale(name, cin)
        elif kind == "conv":
            layer = Conv2D(name, k, s, cin, cout, act)
        elif kind == "transpose":
            layer = TransposeConv2D(name, k, s, cin, cout, act)
        elif kind == "concat":
            layer = None
        else:
            raise NetworkError(f"unknown layer kind {kind}")
        if kind == "concat":
            skip_c = dict((r[0], r[5]) for r in ARCHITECTURE)[SKIP_SOURCE]
            c = c + skip_c
            oh, ow = h, w
        else:
            if cin != c:
                raise NetworkError(f"{name}: expects {cin} channels, previous layer gives {c}")
            layer.init_weights(rng)
            oh, ow, c = layer.output_shape(h, w)
            if layer.n_params != n_params:
                raise NetworkError(f"{name}: has {layer.n_params} params, table says {n_params}")
            layers.append(layer)
        if (oh, ow, c) != (eh, ew, cout):
            raise NetworkError(f"{name}: output {(oh, ow, c)} does not match table {(eh, ew, cout)}")
        h, w = oh, ow
    net = DeflectionNet(layers, seed)
    if net.n_params != TOTAL_PARAMS:
        raise NetworkError(f"total parameter count {net.n_params} != {TOTAL_PARAMS}")
    return net


def _to_nchw(x: np.ndarray, dtype) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[3] != INPUT_CHANNELS:
        raise NetworkError(f"input must be (H, W, {INPUT_CHANNELS}) or a batch of those")
    if x.shape[1] != INPUT_HEIGHT or x.shape[2] != INPUT_WIDTH:
        raise NetworkError(
            f"input plane must be {INPUT_HEIGHT}x{INPUT_WIDTH}, got {x.shape[1]}x{x.shape[2]}")
    if not np.all(np.isfinite(x)):
        raise NetworkError("non-finite input value")
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2), dtype=dtype)


def forward_batch(net: DeflectionNet, xb: np.ndarray, caches: list | None = None) -> np.ndarray:
    """Run the net on an NCHW batch; fills per-layer caches when training."""
    a = xb
    skip = None
    for layer in net.layers:
        cache = None if caches is None else {}
        if layer.name == "conv13":
            a = np.concatenate([a, skip], axis=1)
        a = layer.forward(a, cache)
        if layer.name == SKIP_SOURCE:
            skip = a
        if caches is not None:
            caches.append(cache)
    return a


def backward_batch(net: DeflectionNet, caches: list, dout: np.ndarray) -> dict:
    """Gradients for every weight and bias given d(loss)/d(output)."""
    grads = {}
    da = dout
    dskip = None
    for layer, cache in zip(reversed(net.layers), reversed(caches)):
        if layer.name == SKIP_SOURCE:
            # this output also fed the concatenation: gradients add up
            da = da + dskip
        da, g = layer.backward(da, cache)
        for pname, val in g.items():
            grads[f"{layer.name}.{pname}"] = val
        if layer.name == "conv13":
            # the concatenated input splits back into trunk and skip branches
            trunk_c = layer.in_ch - net.by_name[SKIP_SOURCE].out_ch
            dskip = da[:, trunk_c:]
            da = np.ascontiguousarray(da[:, :trunk_c])
    return grads


def forward(net: DeflectionNet, image: np.ndarray) -> np.ndarray:
    """Predict a (12, 24, 1) map from a (384, 768, 2) raster image."""
    xb = _to_nchw(image, np.float32)
    out = forward_batch(net, xb)
    return np.ascontiguousarray(out[0].transpose(1, 2, 0))


def mse_loss(out: np.ndarray, target: np.ndarray):
    """(loss, d loss/d out), mean squared error over every map element."""
    diff = out - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    return loss, (2.0 / diff.size) * diff


def backward(net: DeflectionNet, image: np.ndarray, target: np.ndarray):
    """(loss, gradients) of the MSE between forward(image) and target."""
    xb = _to_nchw(image, np.float32)
    tb = np.asarray(target, dtype=np.float32).reshape(1, 1, OUTPUT_HEIGHT, OUTPUT_WIDTH)
    caches: list = []
    out = forward_batch(net, xb, caches)
    loss, dout = mse_loss(out, tb)
    grads = backward_batch(net, caches, dout.astype(np.float32))
    return loss, grads


# ---------------------------------------------------------------------------
# weight persistence: little-endian float32 blob plus a JSON manifest


def save_weights(net: DeflectionNet, blob_path, manifest_path) -> None:
    offset = 0
    entries = []
    buf = io.BytesIO()
    for layer, pname, arr in net.parameters():
        data = arr.astype("<f4").tobytes()
        buf.write(data)
        entries.append({
            "layer": layer.name,
            "param": pname,
            "shape": list(arr.shape),
            "offset": offset,
            "count": int(arr.size),
        })
        offset += arr.size
    manifest = {
        "format": WEIGHTS_FORMAT,
        "version": WEIGHTS_VERSION,
        "seed": net.seed,
        "total_params": TOTAL_PARAMS,
        "input_scale": net.input_scale,
        "output_scale": net.output_scale,
        "arrays": entries,
    }
    with open(blob_path, "wb") as fh:
        fh.write(buf.getvalue())
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")


def load_weights(blob_path, manifest_path) -> DeflectionNet:
    with open(manifest_path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as e:
            raise NetworkError(f"malformed weights manifest: {e}") from None
    if manifest.get("format") != WEIGHTS_FORMAT:
        raise NetworkError("not a weights manifest")
    if manifest.get("version") != WEIGHTS_VERSION:
        raise NetworkError(f"unsupported weights version {manifest.get('version')!r}")
    if manifest.get("total_params") != TOTAL_PARAMS:
        raise NetworkError(
            f"manifest declares {manifest.get('total_params')} params, expected {TOTAL_PARAMS}")
    with open(blob_path, "rb") as fh:
        blob = fh.read()
    expected_bytes = TOTAL_PARAMS * 4
    if len(blob) != expected_bytes:
        raise NetworkError(f"weight blob holds {len(blob)} bytes, expected {expected_bytes}")
    net = build_network(int(manifest.get("seed", 0)))
    net.input_scale = float(manifest["input_scale"])
    net.output_scale = float(manifest["output_scale"])
    seen = 0
    for entry in manifest["arrays"]:
        layer = net.by_name.get(entry["layer"])
        if layer is None:
            raise NetworkError(f"manifest names unknown layer {entry['layer']!r}")
        arr = getattr(layer, entry["param"])
        if list(arr.shape) != entry["shape"] or arr.size != entry["count"]:
            raise NetworkError(f"manifest shape mismatch for {entry['layer']}.{entry['param']}")
        start = entry["offset"] * 4
        vals = np.frombuffer(blob, dtype="<f4", count=entry["count"], offset=start)
        setattr(layer, entry["param"], vals.reshape(arr.shape).copy())
        seen += entry["count"]
    if seen != TOTAL_PARAMS:
        raise NetworkError(f"manifest covers {seen} params, expected {TOTAL_PARAMS}")
    return net
