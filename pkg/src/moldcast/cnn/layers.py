"""Network layers: convolutions, transpose convolution and fixed scalings.

Weights are float32; layer forward/backward work in whatever dtype the input
carries so gradient checks can run the same code in float64.
"""

from __future__ import annotations

import numpy as np

from .engine import conv2d_backward_input, conv2d_backward_weights, conv2d_forward, same_geometry


class Conv2D:
    """Standard convolution, optionally strided, with "same" zero padding."""

    def __init__(self, name: str, kernel: int, stride: int, in_ch: int, out_ch: int,
                 activation: str = "relu"):
        if activation not in ("relu", "linear"):
            raise ValueError(f"unknown activation {activation!r}")
        self.name = name
        self.kernel = kernel
        self.stride = stride
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.activation = activation
        self.W = np.zeros((kernel, kernel, in_ch, out_ch), dtype=np.float32)
        self.b = np.zeros(out_ch, dtype=np.float32)

    @property
    def n_params(self) -> int:
        return self.W.size + self.b.size

    def init_weights(self, rng: np.random.Generator) -> None:
        fan_in = self.kernel * self.kernel * self.in_ch
        limit = np.sqrt(6.0 / fan_in)
        self.W = rng.uniform(-limit, limit, self.W.shape).astype(np.float32)
        self.b = np.zeros_like(self.b)

    def output_shape(self, h: int, w: int):
        oh, ow = same_geometry(h, w, self.kernel, self.stride)[:2]
        return oh, ow, self.out_ch

    def _weights_as(self, dtype):
        if self.W.dtype == dtype:
            return self.W, self.b
        return self.W.astype(dtype), self.b.astype(dtype)

    def forward(self, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
        W, b = self._weights_as(x.dtype)
        z = conv2d_forward(x, W, b, self.stride, cache)
        if self.activation == "relu":
            if cache is not None:
                cache["z"] = z
            return np.maximum(z, 0)
        return z

    def backward(self, dy: np.ndarray, cache: dict):
        if self.activation == "relu":
            dy = dy * (cache["z"] > 0)
        W, _ = self._weights_as(dy.dtype)
        dW, db = conv2d_backward_weights(dy, self.W.shape, self.stride, cache)
        dx = conv2d_backward_input(dy, W, self.stride, cache["x_shape"])
        return dx, {"W": dW, "b": db}


class TransposeConv2D:
    """Stride-2 transpose convolution: the adjoint of a strided convolution.

    The kernel is stored as (k, k, out_ch, in_ch), matching the adjoint
    convolution's layout, so the parameter count is k*k*out_ch*in_ch + out_ch.
    """

    def __init__(self, name: str, kernel: int, stride: int, in_ch: int, out_ch: int,
                 activation: str = "relu"):
        self.name = name
        self.kernel = kernel
        self.stride = stride
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.activation = activation
        self.W = np.zeros((kernel, kernel, out_ch, in_ch), dtype=np.float32)
        self.b = np.zeros(out_ch, dtype=np.float32)

    @property
    def n_params(self) -> int:
        return self.W.size + self.b.size

    def init_weights(self, rng: np.random.Generator) -> None:
        fan_in = self.kernel * self.kernel * self.in_ch
        limit = np.sqrt(6.0 / fan_in)
        self.W = rng.uniform(-limit, limit, self.W.shape).astype(np.float32)
        self.b = np.zeros_like(self.b)

    def output_shape(self, h: int, w: int):
        return h * self.stride, w * self.stride, self.out_ch

    def _weights_as(self, dtype):
        if self.W.dtype == dtype:
            return self.W, self.b
        return self.W.astype(dtype), self.b.astype(dtype)

    def forward(self, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
        n, _, h, w = x.shape
        oh, ow = h * self.stride, w * self.stride
        W, b = self._weights_as(x.dtype)
        z = conv2d_backward_input(x, W, self.stride, (n, self.out_ch, oh, ow))
        z = z + b[None, :, None, None]
        if cache is not None:
            cache["x"] = x
            cache["z"] = z
        if self.activation == "relu":
            return np.maximum(z, 0)
        return z

    def backward(self, dy: np.ndarray, cache: dict):
        if self.activation == "relu":
            dy = dy * (cache["z"] > 0)
        W, _ = self._weights_as(dy.dtype)
        db = dy.sum(axis=(0, 2, 3))
        # out = adjoint-conv(x): grads swap the roles of input and output
        fwd_cache: dict = {}
        dx = conv2d_forward(dy, W, np.zeros(self.in_ch, dtype=dy.dtype), self.stride, fwd_cache)
        dW, _ = conv2d_backward_weights(cache["x"], self.W.shape, self.stride, fwd_cache)
        return dx, {"W": dW, "b": db}


class InputScale:
    """Divides the fill-time channel by a dataset-level maximum; mask untouched."""

    def __init__(self, name: str, channels: int):
        self.name = name
        self.in_ch = self.out_ch = channels
        self.scale = 1.0

    n_params = 0

    def init_weights(self, rng) -> None:
        pass

    def output_shape(self, h: int, w: int):
        return h, w, self.out_ch

    def forward(self, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
        y = x.copy()
        y[:, 0] /= x.dtype.type(self.scale)
        return y

    def backward(self, dy: np.ndarray, cache: dict):
        dx = dy.copy()
        dx[:, 0] /= dy.dtype.type(self.scale)
        return dx, {}


class OutputScale:
    """Multiplies the network output by a dataset-level deflection maximum."""

    def __init__(self, name: str, channels: int):
        self.name = name
        self.in_ch = self.out_ch = channels
        self.scale = 1.0

    n_params = 0

    def init_weights(self, rng) -> None:
        pass

    def output_shape(self, h: int, w: int):
        return h, w, self.out_ch

    def forward(self, x: np.ndarray, cache: dict | None = None) -> np.ndarray:
        return x * x.dtype.type(self.scale)

    def backward(self, dy: np.ndarray, cache: dict):
        return dy * dy.dtype.type(self.scale), {}
