"""Convolution compute kernels.

All convolutions use "same" zero padding with output size ceil(in/stride) and
the asymmetric pad split (less on top/left when the total is odd). Tensors are
NCHW inside the network. Strides 1 and 2 are supported.

Two interchangeable implementations exist per operation (forward, input
gradient, weight gradient):

* large output planes: numba kernels that stream whole rows with elementwise
  fused multiply-accumulate loops (materializing patch matrices at these
  sizes is memory-bound). Stride-2 kernels address even/odd column phases so
  every inner loop walks contiguous memory; the weight-gradient kernel
  accumulates per-offset row products into a small local buffer and reduces
  it once at the end.
* small output planes: classic im2col + matmul.

The choice depends only on the layer's output geometry, so results are
reproducible run to run. Both paths accumulate in fixed order; outputs differ
between paths only by float summation order.
"""

from __future__ import annotations

import os

import numpy as np

os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

from numba import njit, prange  # noqa: E402

# direct kernels win when the output plane is large and channels are few
DIRECT_MIN_PIXELS = 8192


def same_geometry(h: int, w: int, k: int, stride: int):
    """(out_h, out_w, pad_top, pad_bottom, pad_left, pad_right)."""
    oh = -(-h // stride)
    ow = -(-w // stride)
    ph = max((oh - 1) * stride + k - h, 0)
    pw = max((ow - 1) * stride + k - w, 0)
    return oh, ow, ph // 2, ph - ph // 2, pw // 2, pw - pw // 2


def _pad(x, pt, pb, pl, pr):
    if pt == pb == pl == pr == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))


def _use_direct(oh: int, ow: int) -> bool:
    return oh * ow >= DIRECT_MIN_PIXELS


# ---------------------------------------------------------------------------
# direct kernels. The stride-2 variants read/write even and odd column phases
# ("pe"/"po"): column 2*m of the padded plane is pe[..., m], column 2*m+1 is
# po[..., m], so offset dj selects phase dj % 2 at base column dj // 2.


@njit(parallel=True, fastmath=False, cache=True)
def _fwd_s1(xp, W, b, y):
    n_batch, cin = xp.shape[0], xp.shape[1]
    k, cout = W.shape[0], W.shape[3]
    oh, ow = y.shape[2], y.shape[3]
    for no in prange(n_batch * cout):
        n = no // cout
        o = no % cout
        for i in range(oh):
            row = y[n, o, i]
            row[:] = b[o]
            for di in range(k):
                for c in range(cin):
                    src = xp[n, c, i + di]
                    for dj in range(k):
                        w = W[di, dj, c, o]
                        for j in range(ow):
                            row[j] += w * src[dj + j]
    return y


@njit(parallel=True, fastmath=False, cache=True)
def _fwd_s2(pe, po, W, b, y):
    n_batch, cin = pe.shape[0], pe.shape[1]
    k, cout = W.shape[0], W.shape[3]
    oh, ow = y.shape[2], y.shape[3]
    for no in prange(n_batch * cout):
        n = no // cout
        o = no % cout
        for i in range(oh):
            row = y[n, o, i]
            row[:] = b[o]
            i0 = 2 * i
            for di in range(k):
                for c in range(cin):
                    for dj in range(k):
                        w = W[di, dj, c, o]
                        j0 = dj // 2
                        if dj % 2 == 0:
                            src = pe[n, c, i0 + di]
                            for j in range(ow):
                                row[j] += w * src[j0 + j]
                        else:
                            src = po[n, c, i0 + di]
                            for j in range(ow):
                                row[j] += w * src[j0 + j]
    return y


@njit(parallel=True, fastmath=False, cache=True)
def _bwd_input_s1(dy, W, dxp):
    n_batch, cout, oh, ow = dy.shape
    k, cin = W.shape[0], W.shape[2]
    for n in prange(n_batch):
        for o in range(cout):
            for i in range(oh):
                g = dy[n, o, i]
                for di in range(k):
                    for c in range(cin):
                        dst = dxp[n, c, i + di]
                        for dj in range(k):
                            w = W[di, dj, c, o]
                            for j in range(ow):
                                dst[dj + j] += w * g[j]
    return dxp


@njit(parallel=True, fastmath=False, cache=True)
def _bwd_input_s2(dy, W, pe, po):
    n_batch, cout, oh, ow = dy.shape
    k, cin = W.shape[0], W.shape[2]
    for n in prange(n_batch):
        for o in range(cout):
            for i in range(oh):
                g = dy[n, o, i]
                i0 = 2 * i
                for di in range(k):
                    for c in range(cin):
                        for dj in range(k):
                            w = W[di, dj, c, o]
                            j0 = dj // 2
                            if dj % 2 == 0:
                                dst = pe[n, c, i0 + di]
                                for j in range(ow):
                                    dst[j0 + j] += w * g[j]
                            else:
                                dst = po[n, c, i0 + di]
                                for j in range(ow):
                                    dst[j0 + j] += w * g[j]
    return pe


@njit(parallel=True, fastmath=False, cache=True)
def _bwd_weights_s1(xp, dy, dW):
    n_batch, cout, oh, ow = dy.shape
    k, cin = dW.shape[0], dW.shape[2]
    for t in prange(k * cin):
        di = t // cin
        c = t % cin
        local = np.zeros((k, cout, ow), dtype=xp.dtype)
        for n in range(n_batch):
            for i in range(oh):
                src = xp[n, c, i + di]
                for o in range(cout):
                    g = dy[n, o, i]
                    for dj in range(k):
                        acc = local[dj, o]
                        for j in range(ow):
                            acc[j] += src[dj + j] * g[j]
        for dj in range(k):
            for o in range(cout):
                acc2 = 0.0
                row = local[dj, o]
                for j in range(ow):
                    acc2 += row[j]
                dW[di, dj, c, o] = acc2
    return dW


@njit(parallel=True, fastmath=False, cache=True)
def _bwd_weights_s2(pe, po, dy, dW):
    n_batch, cout, oh, ow = dy.shape
    k, cin = dW.shape[0], dW.shape[2]
    for t in prange(k * cin):
        di = t // cin
        c = t % cin
        local = np.zeros((k, cout, ow), dtype=pe.dtype)
        for n in range(n_batch):
            for i in range(oh):
                i0 = 2 * i + di
                for o in range(cout):
                    g = dy[n, o, i]
                    for dj in range(k):
                        acc = local[dj, o]
                        j0 = dj // 2
                        if dj % 2 == 0:
                            src = pe[n, c, i0]
                            for j in range(ow):
                                acc[j] += src[j0 + j] * g[j]
                        else:
                            src = po[n, c, i0]
                            for j in range(ow):
                                acc[j] += src[j0 + j] * g[j]
        for dj in range(k):
            for o in range(cout):
                acc2 = 0.0
                row = local[dj, o]
                for j in range(ow):
                    acc2 += row[j]
                dW[di, dj, c, o] = acc2
    return dW


def _column_phases(xp):
    return (np.ascontiguousarray(xp[:, :, :, 0::2]), np.ascontiguousarray(xp[:, :, :, 1::2]))


# ---------------------------------------------------------------------------
# im2col path


def _im2col(xp, k, stride, oh, ow):
    n = xp.shape[0]
    cin = xp.shape[1]
    col = np.empty((n, oh, ow, cin, k, k), dtype=xp.dtype)
    for di in range(k):
        for dj in range(k):
            sl = xp[:, :, di:di + stride * (oh - 1) + 1:stride,
                    dj:dj + stride * (ow - 1) + 1:stride]
            col[:, :, :, :, di, dj] = np.moveaxis(sl, 1, 3)
    return col.reshape(n * oh * ow, cin * k * k)


# ---------------------------------------------------------------------------
# public operations


def conv2d_forward(x, W, b, stride, cache=None):
    """Convolve NCHW input with (k, k, cin, cout) weights, same padding.

    When ``cache`` is a dict, intermediates needed by the backward pass are
    stored in it.
    """
    n, cin, h, w = x.shape
    k = W.shape[0]
    cout = W.shape[3]
    if stride not in (1, 2):
        raise ValueError(f"unsupported stride {stride}")
    oh, ow, pt, pb, pl, pr = same_geometry(h, w, k, stride)
    xp = _pad(x, pt, pb, pl, pr)
    if _use_direct(oh, ow):
        y = np.empty((n, cout, oh, ow), dtype=x.dtype)
        if stride == 1:
            _fwd_s1(xp, W, b, y)
            if cache is not None:
                cache["phases"] = (xp,)
        else:
            pe, po = _column_phases(xp)
            _fwd_s2(pe, po, W, b, y)
            if cache is not None:
                cache["phases"] = (pe, po)
    else:
        col = _im2col(xp, k, stride, oh, ow)
        wm = W.transpose(2, 0, 1, 3).reshape(cin * k * k, cout)
        y = col @ wm + b
        y = np.ascontiguousarray(y.reshape(n, oh, ow, cout).transpose(0, 3, 1, 2))
        if cache is not None:
            cache["col"] = col
    if cache is not None:
        cache["x_shape"] = x.shape
    return y


def conv2d_backward_input(dy, W, stride, x_shape):
    """Gradient of conv2d_forward w.r.t. its input (also transpose-conv forward)."""
    n, cin, h, w = x_shape
    k = W.shape[0]
    cout = W.shape[3]
    oh, ow, pt, pb, pl, pr = same_geometry(h, w, k, stride)
    if dy.shape[2] != oh or dy.shape[3] != ow:
        raise ValueError(f"upstream gradient plane {dy.shape[2:]} does not match ({oh}, {ow})")
    hp, wp = h + pt + pb, w + pl + pr
    dy = np.ascontiguousarray(dy)
    if _use_direct(oh, ow):
        if stride == 1:
            dxp = np.zeros((n, cin, hp, wp), dtype=dy.dtype)
            _bwd_input_s1(dy, W, dxp)
        else:
            pe = np.zeros((n, cin, hp, (wp + 1) // 2), dtype=dy.dtype)
            po = np.zeros((n, cin, hp, wp // 2), dtype=dy.dtype)
            _bwd_input_s2(dy, W, pe, po)
            dxp = np.empty((n, cin, hp, wp), dtype=dy.dtype)
            dxp[:, :, :, 0::2] = pe
            dxp[:, :, :, 1::2] = po
    else:
        wm = W.transpose(2, 0, 1, 3).reshape(cin * k * k, cout)
        dy_flat = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, cout)
        dcol = (dy_flat @ wm.T).reshape(n, oh, ow, cin, k, k)
        dxp = np.zeros((n, cin, hp, wp), dtype=dy.dtype)
        for di in range(k):
            for dj in range(k):
                dxp[:, :, di:di + stride * (oh - 1) + 1:stride,
                    dj:dj + stride * (ow - 1) + 1:stride] += np.moveaxis(dcol[:, :, :, :, di, dj], 3, 1)
    return np.ascontiguousarray(dxp[:, :, pt:pt + h, pl:pl + w])


def conv2d_backward_weights(dy, W_shape, stride, cache):
    """(dW, db) of conv2d_forward given the forward cache."""
    k, _, cin, cout = W_shape
    n, _, oh, ow = dy.shape
    db = dy.sum(axis=(0, 2, 3))
    if "phases" in cache:
        dy = np.ascontiguousarray(dy)
        dW = np.empty(W_shape, dtype=dy.dtype)
        if stride == 1:
            _bwd_weights_s1(cache["phases"][0], dy, dW)
        else:
            _bwd_weights_s2(cache["phases"][0], cache["phases"][1], dy, dW)
    else:
        dy_flat = dy.transpose(0, 2, 3, 1).reshape(n * oh * ow, cout)
        dW = (cache["col"].T @ dy_flat).reshape(cin, k, k, cout).transpose(1, 2, 0, 3)
        dW = np.ascontiguousarray(dW)
    return dW, db
