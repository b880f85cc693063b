"""Dense float32 kernels used by every stage of the segmenter.

Images and feature maps are channels-last ``(H, W, C)`` arrays, matrices are
``(rows, cols)``.  All functions are pure and return new float32 arrays.

Row-wise projections go through :func:`linear`, which uses a non-BLAS
contraction so that a row's result never depends on where the row sits in
the batch (BLAS tiling breaks that for tail rows).
"""
from __future__ import annotations

import numpy as np
from scipy.special import erf

DTYPE = np.float32

__all__ = [
    "DTYPE",
    "ContractError",
    "as_tensor",
    "conv2d",
    "gelu",
    "layer_norm",
    "softmax",
    "linear",
    "bilinear_resize",
    "hflip",
    "sorted_sum",
]


class ContractError(ValueError):
    """Raised when an operation receives arguments that violate its contract."""


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a float32 array of rank 1..4 with no empty extents."""
    arr = np.asarray(x, dtype=DTYPE)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim > 4:
        raise ContractError(f"tensor rank must be <= 4, got {arr.ndim}")
    if any(n < 1 for n in arr.shape):
        raise ContractError(f"tensor extents must be >= 1, got {arr.shape}")
    return arr


def conv2d(x, kernel, bias=None, stride: int = 1, padding: int = 0) -> np.ndarray:
    """2-D cross-correlation of an ``(H, W, Cin)`` map.

    Args:
        x: input feature map ``(H, W, Cin)``.
        kernel: weights ``(kh, kw, Cin, Cout)``.
        bias: ``(Cout,)`` or None.
        stride: positive step in both directions.
        padding: symmetric zero padding applied to both spatial axes.

    Returns:
        ``(Ho, Wo, Cout)`` with ``Ho = (H + 2*padding - kh) // stride + 1``.
    """
    x = np.asarray(x, dtype=DTYPE)
    kernel = np.asarray(kernel, dtype=DTYPE)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ContractError(f"conv2d expects HxWxC input and 4-D kernel, got {x.shape}, {kernel.shape}")
    kh, kw, cin, cout = kernel.shape
    if x.shape[2] != cin:
        raise ContractError(f"input has {x.shape[2]} channels, kernel expects {cin}")
    if stride < 1 or padding < 0:
        raise ContractError("stride must be >= 1 and padding >= 0")
    if padding:
        x = np.pad(x, ((padding, padding), (padding, padding), (0, 0)))
    h, w = x.shape[:2]
    if kh > h or kw > w:
        raise ContractError(f"kernel {kh}x{kw} larger than padded input {h}x{w}")

    if kh == 1 and kw == 1:
        out = np.tensordot(x[::stride, ::stride], kernel[0, 0], axes=([2], [0]))
    else:
        # (Ho, Wo, Cin, kh, kw) view of every receptive field
        windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(0, 1))
        windows = windows[::stride, ::stride]
        out = np.tensordot(windows, kernel, axes=([2, 3, 4], [2, 0, 1]))
    if bias is not None:
        out = out + np.asarray(bias, dtype=DTYPE)
    return np.ascontiguousarray(out, dtype=DTYPE)


def gelu(x) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF written via erf."""
    x = np.asarray(x, dtype=np.float64)
    return (0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))).astype(DTYPE)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> np.ndarray:
    """Normalize over the last (channel) axis, then apply ``gain`` and ``bias``."""
    x = np.asarray(x, dtype=DTYPE)
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    out = centered / np.sqrt(var + DTYPE(eps))
    return (out * np.asarray(gain, dtype=DTYPE) + np.asarray(bias, dtype=DTYPE)).astype(DTYPE)


def softmax(v, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=DTYPE)
    e = np.exp(v - v.max(axis=axis, keepdims=True))
    return (e / e.sum(axis=axis, keepdims=True)).astype(DTYPE)


def linear(x, weight, bias=None) -> np.ndarray:
    """Row-wise affine map ``x @ weight + bias`` over the last axis.

    ``weight`` is ``(Cin, Cout)``.  Uses the plain einsum loop rather than
    BLAS so each row is reduced in the same order wherever it sits.
    """
    x = np.asarray(x, dtype=DTYPE)
    weight = np.asarray(weight, dtype=DTYPE)
    if x.shape[-1] != weight.shape[0]:
        raise ContractError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = np.einsum("...c,cd->...d", x, weight, optimize=False)
    if bias is not None:
        out = out + np.asarray(bias, dtype=DTYPE)
    return out.astype(DTYPE, copy=False)


def sorted_sum(x, axis: int) -> np.ndarray:
    """Sum along ``axis`` after sorting it.

    The result depends only on the multiset of summands, so it is bit-exact
    under any permutation of that axis.
    """
    return np.sort(np.asarray(x), axis=axis).sum(axis=axis)


def _resize_axis(x: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = x.shape[axis]
    if n_in == n_out:
        return x
    # half-pixel centres; samples outside the input clamp to the edge
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    i0 = np.floor(src).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = (src - i0).astype(DTYPE)
    a = np.take(x, i0, axis=axis)
    b = np.take(x, i1, axis=axis)
    shape = [1] * x.ndim
    shape[axis] = n_out
    # a + f*(b - a) keeps constant inputs exact
    return a + frac.reshape(shape) * (b - a)


def bilinear_resize(x, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling of an ``(H, W, C)`` or ``(H, W)`` map, half-pixel centres."""
    if out_h < 1 or out_w < 1:
        raise ContractError(f"target extents must be >= 1, got {out_h}x{out_w}")
    x = np.asarray(x, dtype=DTYPE)
    out = _resize_axis(x, int(out_h), 0)
    out = _resize_axis(out, int(out_w), 1)
    return np.ascontiguousarray(out, dtype=DTYPE)


def hflip(x) -> np.ndarray:
    """Reverse the column (width) axis."""
    return np.ascontiguousarray(np.asarray(x)[:, ::-1])
