"""
Differentiable op set.

Elementwise ops run in float32; matmul, convolution and reductions accumulate
in float64 and cast the result back to float32. Every op validates shapes and
names itself in the error message.
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from acq_core.autodiff.tensor import BackwardFn, Tensor, make_result

Axis = Union[None, int, Tuple[int, ...]]
Scalar = Union[int, float]


def as_tensor(x) -> Tensor:
    """Wrap constants (scalars / arrays) as non-grad Tensors."""
    return x if isinstance(x, Tensor) else Tensor(x)


def custom(op: str, out: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn) -> Tensor:
    """Record a user-defined op (forward value + backward rule) on the tape."""
    return make_result(op, out, inputs, backward)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}") from None


def _normalize_axis(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def _expand_reduced(g: np.ndarray, shape: Tuple[int, ...], axes: Tuple[int, ...], keepdims: bool) -> np.ndarray:
    if not keepdims:
        for a in axes:
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


# ── elementwise binary ──


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return make_result("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return make_result("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data
    return make_result("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    if np.any(b.data == 0):
        raise ZeroDivisionError(f"div: divisor of shape {b.shape} contains zeros")
    ad, bd = a.data.astype(np.float64), b.data.astype(np.float64)
    return make_result(
        "div", ad / bd, (a, b),
        lambda g: (g / bd, -g * ad / (bd * bd)),
    )


def neg(a: Tensor) -> Tensor:
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} vs {b.shape}")
    a64, b64 = a.data.astype(np.float64), b.data.astype(np.float64)
    return make_result(
        "matmul", a64 @ b64, (a, b),
        lambda g: (g @ b64.T, a64.T @ g),
    )


# ── reductions ──


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, x.ndim)
    out = np.sum(x.data.astype(np.float64), axis=axes, keepdims=keepdims)
    shape = x.shape
    return make_result("sum", out, (x,), lambda g: (_expand_reduced(g, shape, axes, keepdims),))


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if count == 0:
        raise ValueError(f"mean: empty reduction over axes {axes} of shape {x.shape}")
    out = np.sum(x.data.astype(np.float64), axis=axes, keepdims=keepdims) / count
    shape = x.shape
    return make_result("mean", out, (x,), lambda g: (_expand_reduced(g, shape, axes, keepdims) / count,))


def var(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    """Biased (population) variance."""
    axes = _normalize_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    if count == 0:
        raise ValueError(f"var: empty reduction over axes {axes} of shape {x.shape}")
    x64 = x.data.astype(np.float64)
    centered = x64 - np.sum(x64, axis=axes, keepdims=True) / count
    out = np.sum(centered * centered, axis=axes, keepdims=keepdims) / count
    shape = x.shape

    def backward(g):
        return (_expand_reduced(g, shape, axes, keepdims) * 2.0 * centered / count,)

    return make_result("var", out, (x,), backward)


def _extreme(op: str, x: Tensor, axis: Axis, keepdims: bool, fn) -> Tensor:
    axes = _normalize_axis(axis, x.ndim)
    if x.size == 0:
        raise ValueError(f"{op}: empty input")
    out_keep = fn(x.data, axis=axes, keepdims=True)
    mask = (x.data == out_keep).astype(np.float64)
    mask /= np.sum(mask, axis=axes, keepdims=True)
    out = out_keep if keepdims else np.squeeze(out_keep, axis=axes)
    shape = x.shape
    return make_result(op, out, (x,), lambda g: (_expand_reduced(g, shape, axes, keepdims) * mask,))


def amax(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    """Max reduction; ties share the gradient evenly."""
    return _extreme("amax", x, axis, keepdims, np.max)


def amin(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return _extreme("amin", x, axis, keepdims, np.min)


# ── elementwise unary ──


def abs(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return make_result("abs", np.abs(x.data), (x,), lambda g: (g * sign,))


def square(x: Tensor) -> Tensor:
    xd = x.data.astype(np.float64)
    return make_result("square", xd * xd, (x,), lambda g: (2.0 * g * xd,))


def sqrt(x: Tensor) -> Tensor:
    # the derivative 1/(2·sqrt x) is unbounded at 0
    if np.any(x.data <= 0):
        raise ValueError(f"sqrt: non-positive input (min {float(x.data.min())})")
    out = np.sqrt(x.data.astype(np.float64))
    return make_result("sqrt", out, (x,), lambda g: (g / (2.0 * out),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data.astype(np.float64))
    return make_result("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise ValueError(f"log: non-positive input (min {float(x.data.min())})")
    xd = x.data.astype(np.float64)
    return make_result("log", np.log(xd), (x,), lambda g: (g / xd,))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data.astype(np.float64))
    return make_result("tanh", out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    mask = x.data > 0
    scale = np.where(mask, 1.0, slope)
    return make_result("leaky_relu", x.data * scale, (x,), lambda g: (g * scale,))


def clip(x: Tensor, lo: Optional[float] = None, hi: Optional[float] = None) -> Tensor:
    """Clamp to [lo, hi]; gradient 1 inside the closed interval, 0 where clamped."""
    xd = x.data
    inside = np.ones(xd.shape, dtype=bool)
    if lo is not None:
        inside &= xd >= lo
    if hi is not None:
        inside &= xd <= hi
    out = np.clip(xd, lo, hi)
    return make_result("clip", out, (x,), lambda g: (g * inside,))


def round_half_away(values: np.ndarray) -> np.ndarray:
    """round(·) with ties away from zero."""
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def round_ste(x: Tensor) -> Tensor:
    """Round half-away-from-zero with a straight-through gradient."""
    return make_result("round_ste", round_half_away(x.data), (x,), lambda g: (g,))


# ── softmax family ──


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax along ``axis``. Entries where ``mask`` is False get probability
    exactly 0 and receive no gradient.
    """
    xd = x.data.astype(np.float64)
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        if not np.all(np.any(mask, axis=axis)):
            raise ValueError("softmax: a row has every entry masked out")
        xd = np.where(mask, xd, -np.inf)
    shifted = xd - np.max(xd, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return make_result("softmax", out, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data.astype(np.float64)
    shifted = xd - np.max(xd, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return make_result("log_softmax", out, (x,), backward)


# ── shape / indexing ──


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {x.shape} into {shape}") from None
    orig = x.shape
    return make_result("reshape", out, (x,), lambda g: (g.reshape(orig),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat: empty input list")
    ref = tensors[0].shape
    axis = axis % len(ref)
    for t in tensors[1:]:
        if len(t.shape) != len(ref) or any(
            t.shape[d] != ref[d] for d in range(len(ref)) if d != axis
        ):
            raise ValueError(f"concat: shape mismatch {ref} vs {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    return make_result("concat", out, tensors, backward)


def take(x: Tensor, index: np.ndarray, axis: int = 0) -> Tensor:
    """Index along ``axis`` with an integer array (embedding lookup on axis 0)."""
    index = np.asarray(index, dtype=np.int64)
    extent = x.shape[axis]
    if index.size and (index.min() < 0 or index.max() >= extent):
        raise ValueError(f"take: index out of range [0, {extent}) (got {int(index.min())}..{int(index.max())})")
    out = np.take(x.data, index, axis=axis)
    shape = x.shape

    def backward(g):
        full = np.zeros(shape, dtype=np.float64)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, index, np.moveaxis(g, axis, 0))
        return (full,)

    return make_result("take", out, (x,), backward)


def embedding(table: Tensor, index: np.ndarray) -> Tensor:
    """Row lookup: table K×D, index N → N×D."""
    if table.ndim != 2:
        raise ValueError(f"embedding: table must be 2-D, got {table.shape}")
    return take(table, index, axis=0)


def gather(x: Tensor, index: np.ndarray) -> Tensor:
    """Per-row pick: x N×K, index N → out[n] = x[n, index[n]]."""
    index = np.asarray(index, dtype=np.int64)
    if x.ndim != 2 or index.shape != (x.shape[0],):
        raise ValueError(f"gather: expected x N×K and index (N,), got {x.shape} and {index.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[1]):
        raise ValueError(f"gather: index out of range [0, {x.shape[1]})")
    rows = np.arange(x.shape[0])
    out = x.data[rows, index]
    shape = x.shape

    def backward(g):
        full = np.zeros(shape, dtype=np.float64)
        full[rows, index] = g
        return (full,)

    return make_result("gather", out, (x,), backward)


# ── convolution / spatial ──


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation: x N×C×H×W, weight O×C×KH×KW."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv2d: shape mismatch input {x.shape} vs weight {weight.shape}")
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    p, s = int(padding), int(stride)
    if h + 2 * p < kh or w + 2 * p < kw:
        raise ValueError(f"conv2d: kernel {kh}×{kw} larger than padded input {h + 2 * p}×{w + 2 * p}")

    xp = np.pad(x.data.astype(np.float64), ((0, 0), (0, 0), (p, p), (p, p)))
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::s, ::s]
    oh, ow = windows.shape[2], windows.shape[3]
    w64 = weight.data.astype(np.float64)
    out = np.tensordot(windows, w64, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        if bias.shape != (o,):
            raise ValueError(f"conv2d: bias shape {bias.shape} does not match {o} output channels")
        out = out + bias.data.astype(np.float64)[None, :, None, None]

    def backward(g):
        dw = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        dxp = np.zeros(xp.shape, dtype=np.float64)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, w64[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                dxp[:, :, i:i + s * oh:s, j:j + s * ow:s] += contrib
        dx = dxp[:, :, p:p + h, p:p + w]
        grads = [dx, dw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return make_result("conv2d", out, inputs, backward)


def upsample_nearest(x: Tensor, scale: int) -> Tensor:
    if x.ndim != 4 or scale < 1:
        raise ValueError(f"upsample_nearest: need N×C×H×W input and scale >= 1, got {x.shape}, {scale}")
    if scale == 1:
        return x
    n, c, h, w = x.shape
    out = x.data.repeat(scale, axis=2).repeat(scale, axis=3)

    def backward(g):
        return (g.reshape(n, c, h, scale, w, scale).sum(axis=(3, 5)),)

    return make_result("upsample_nearest", out, (x,), backward)


def _blocks(op: str, x: Tensor, out_h: int, out_w: int) -> Tuple[np.ndarray, int, int]:
    if x.ndim != 4:
        raise ValueError(f"{op}: need N×C×H×W input, got {x.shape}")
    n, c, h, w = x.shape
    if out_h <= 0 or out_w <= 0 or h % out_h or w % out_w:
        raise ValueError(f"{op}: input {h}×{w} not divisible into {out_h}×{out_w} cells")
    kh, kw = h // out_h, w // out_w
    return x.data.reshape(n, c, out_h, kh, out_w, kw), kh, kw


def adaptive_avg_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    blocks, kh, kw = _blocks("adaptive_avg_pool2d", x, out_h, out_w)
    out = blocks.astype(np.float64).mean(axis=(3, 5))
    shape = blocks.shape

    def backward(g):
        full = np.broadcast_to(g[:, :, :, None, :, None] / (kh * kw), shape)
        return (full.reshape(x.shape),)

    return make_result("adaptive_avg_pool2d", out, (x,), backward)


def adaptive_max_pool2d(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """Max over each cell; the gradient goes to the first maximum in row-major order."""
    blocks, kh, kw = _blocks("adaptive_max_pool2d", x, out_h, out_w)
    n, c = x.shape[:2]
    flat = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, out_h, out_w, kh * kw)
    arg = np.argmax(flat, axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros(flat.shape, dtype=np.float64)
        np.put_along_axis(full, arg[..., None], g[..., None], axis=-1)
        full = full.reshape(n, c, out_h, out_w, kh, kw).transpose(0, 1, 2, 4, 3, 5)
        return (full.reshape(x.shape),)

    return make_result("adaptive_max_pool2d", out, (x,), backward)


def max_pool2d(x: Tensor, kernel: int) -> Tensor:
    """Non-overlapping max pool (stride = kernel)."""
    if x.ndim != 4:
        raise ValueError(f"max_pool2d: need N×C×H×W input, got {x.shape}")
    return adaptive_max_pool2d(x, x.shape[2] // kernel, x.shape[3] // kernel)
