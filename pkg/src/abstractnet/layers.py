"""Forward/backward primitives for the inception architecture.

Convolution is implemented as cross-correlation plus bias (the usual CNN
convention).  Every backward here is checked against central finite
differences in the test suite; tolerances assume float64 throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, check_finite

ALLOWED_KERNELS = (1, 3, 5, 7)


class SpecError(ValueError):
    """Layer specification inconsistent with its input (bad divisibility etc.)."""


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    pad: tuple[int, int] = (0, 0)

    def __post_init__(self):
        kh, kw = self.kernel
        if kh not in ALLOWED_KERNELS or kw not in ALLOWED_KERNELS:
            raise SpecError(f"kernel sides must be one of {ALLOWED_KERNELS}, got {self.kernel}")
        if min(self.stride) < 1 or min(self.pad) < 0:
            raise SpecError(f"bad stride/pad: {self.stride}/{self.pad}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise SpecError("channel counts must be >= 1")


@dataclass(frozen=True)
class PoolSpec:
    kind: str  # "max" | "average"
    window: tuple[int, int]
    stride: tuple[int, int] = (1, 1)
    pad: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.kind not in ("max", "average"):
            raise SpecError(f"pool kind must be max or average, got {self.kind!r}")
        if min(self.window) < 1 or min(self.stride) < 1 or min(self.pad) < 0:
            raise SpecError(f"bad pool geometry: {self}")


def out_size(size: int, k: int, s: int, p: int) -> int:
    """Spatial output size; non-integral results are configuration errors."""
    span = size + 2 * p - k
    if span < 0 or span % s != 0:
        raise SpecError(
            f"window {k} stride {s} pad {p} does not tile input of size {size} exactly")
    return span // s + 1


@dataclass
class LayerState:
    """Parameters plus gradient and optimizer slots for one conv/dense layer.

    weights: (out, in, kh, kw); bias: (1, out, 1, 1).  Gradient and
    optimizer arrays always mirror the parameter shapes and start at zero.
    """
    weights: np.ndarray
    bias: np.ndarray
    grad_weights: np.ndarray = field(init=False)
    grad_bias: np.ndarray = field(init=False)
    accum_weights: np.ndarray = field(init=False)
    accum_bias: np.ndarray = field(init=False)
    vel_weights: np.ndarray = field(init=False)
    vel_bias: np.ndarray = field(init=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)
        self.accum_weights = np.zeros_like(self.weights)
        self.accum_bias = np.zeros_like(self.bias)
        self.vel_weights = np.zeros_like(self.weights)
        self.vel_bias = np.zeros_like(self.bias)

    def zero_grad(self):
        self.grad_weights.fill(0.0)
        self.grad_bias.fill(0.0)


_EINSUM_PATHS: dict = {}


def _einsum(subscripts: str, *ops) -> np.ndarray:
    """np.einsum with the contraction path memoized per (subscripts, shapes)."""
    key = (subscripts, tuple(op.shape for op in ops))
    path = _EINSUM_PATHS.get(key)
    if path is None:
        path = np.einsum_path(subscripts, *ops, optimize="optimal")[0]
        _EINSUM_PATHS[key] = path
    return np.einsum(subscripts, *ops, optimize=path)


def _pad(x: np.ndarray, ph: int, pw: int, value: float = 0.0) -> np.ndarray:
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)), constant_values=value)


def _windows(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int) -> np.ndarray:
    # (n, c, oh, ow, kh, kw) view, no copy
    w = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return w[:, :, ::sh, ::sw, :, :]


def conv_forward(x: np.ndarray, spec: ConvSpec, state: LayerState) -> np.ndarray:
    n, c, h, w = x.shape
    if c != spec.in_channels:
        raise ShapeError(f"input has {c} channels, spec expects {spec.in_channels}")
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.pad
    out_size(h, kh, sh, ph)
    out_size(w, kw, sw, pw)
    xp = _pad(x, ph, pw)
    win = _windows(xp, kh, kw, sh, sw)
    y = _einsum("nchwij,ocij->nohw", win, state.weights)
    y += state.bias
    return check_finite(y, "conv output")


def conv_backward(x: np.ndarray, dy: np.ndarray, spec: ConvSpec,
                  state: LayerState) -> np.ndarray:
    """Accumulates grad_weights/grad_bias in state; returns dx."""
    n, c, h, w = x.shape
    kh, kw = spec.kernel
    sh, sw = spec.stride
    ph, pw = spec.pad
    oh = out_size(h, kh, sh, ph)
    ow = out_size(w, kw, sw, pw)
    if dy.shape != (n, spec.out_channels, oh, ow):
        raise ShapeError(f"dy shape {dy.shape} != {(n, spec.out_channels, oh, ow)}")
    xp = _pad(x, ph, pw)
    win = _windows(xp, kh, kw, sh, sw)
    state.grad_weights += _einsum("nchwij,nohw->ocij", win, dy)
    state.grad_bias += dy.sum(axis=(0, 2, 3)).reshape(state.bias.shape)
    if (sh, sw) == (1, 1):
        # dx = full correlation of dy with the 180-degree-rotated kernel
        dyp = _pad(dy, kh - 1, kw - 1)
        dwin = _windows(dyp, kh, kw, 1, 1)
        w_rot = state.weights[:, :, ::-1, ::-1]
        dxp = _einsum("nohwij,ocij->nchw", dwin, w_rot)
    else:
        dxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                contrib = _einsum("nohw,oc->nchw", dy, state.weights[:, :, i, j])
                dxp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw] += contrib
    if ph or pw:
        dxp = dxp[:, :, ph:ph + h, pw:pw + w]
    return dxp


def pool_forward(x: np.ndarray, spec: PoolSpec):
    """Returns (y, cache); cache carries what pool_backward needs.

    Max pooling records the winning in-window index per output element;
    ties go to the first maximum in row-major window order (np.argmax).
    Average pooling divides by the full window size, counting padding.
    """
    n, c, h, w = x.shape
    kh, kw = spec.window
    sh, sw = spec.stride
    ph, pw = spec.pad
    out_size(h, kh, sh, ph)
    out_size(w, kw, sw, pw)
    if spec.kind == "max":
        xp = _pad(x, ph, pw, value=-np.inf)
        win = _windows(xp, kh, kw, sh, sw)
        flat = win.reshape(*win.shape[:4], kh * kw)
        idx = np.argmax(flat, axis=-1)
        y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
        cache = (x.shape, idx)
    else:
        xp = _pad(x, ph, pw, value=0.0)
        win = _windows(xp, kh, kw, sh, sw)
        y = win.sum(axis=(-2, -1)) / (kh * kw)
        cache = (x.shape, None)
    return check_finite(np.ascontiguousarray(y), "pool output"), cache


def pool_backward(dy: np.ndarray, spec: PoolSpec, cache) -> np.ndarray:
    x_shape, idx = cache
    n, c, h, w = x_shape
    kh, kw = spec.window
    sh, sw = spec.stride
    ph, pw = spec.pad
    oh = out_size(h, kh, sh, ph)
    ow = out_size(w, kw, sw, pw)
    if dy.shape != (n, c, oh, ow):
        raise ShapeError(f"dy shape {dy.shape} != {(n, c, oh, ow)}")
    dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw))
    if spec.kind == "max":
        rows = (np.arange(oh) * sh)[None, None, :, None] + idx // kw
        cols = (np.arange(ow) * sw)[None, None, None, :] + idx % kw
        ni = np.arange(n)[:, None, None, None]
        ci = np.arange(c)[None, :, None, None]
        np.add.at(dxp, (ni, ci, rows, cols), dy)
    else:
        share = dy / (kh * kw)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw] += share
    if ph or pw:
        dxp = dxp[:, :, ph:ph + h, pw:pw + w]
    return dxp


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    # derivative at exactly 0 is taken as 0
    return np.where(x > 0.0, dy, 0.0)


def concat_channels(xs: list[np.ndarray]) -> np.ndarray:
    first = xs[0]
    for x in xs[1:]:
        if (x.shape[0], x.shape[2], x.shape[3]) != (first.shape[0], first.shape[2], first.shape[3]):
            raise ShapeError(f"spatial/batch mismatch in concat: {x.shape} vs {first.shape}")
    return np.concatenate(xs, axis=1)


def split_channels(dy: np.ndarray, channel_counts: list[int]) -> list[np.ndarray]:
    if sum(channel_counts) != dy.shape[1]:
        raise ShapeError(f"channel counts {channel_counts} do not sum to {dy.shape[1]}")
    return list(np.split(dy, np.cumsum(channel_counts)[:-1], axis=1))


def dense_forward(x: np.ndarray, state: LayerState) -> np.ndarray:
    """x: (n, k, 1, 1); weights: (out, k, 1, 1) -> (n, out, 1, 1)."""
    n, k, h, w = x.shape
    if (h, w) != (1, 1) or k != state.weights.shape[1]:
        raise ShapeError(f"dense input {x.shape} incompatible with weights {state.weights.shape}")
    y = x[:, :, 0, 0] @ state.weights[:, :, 0, 0].T
    y = y[:, :, None, None] + state.bias
    return check_finite(y, "dense output")


def dense_backward(x: np.ndarray, dy: np.ndarray, state: LayerState) -> np.ndarray:
    n, k = x.shape[:2]
    d2 = dy[:, :, 0, 0]
    x2 = x[:, :, 0, 0]
    state.grad_weights[:, :, 0, 0] += d2.T @ x2
    state.grad_bias += d2.sum(axis=0).reshape(state.bias.shape)
    dx = d2 @ state.weights[:, :, 0, 0]
    return dx[:, :, None, None]


def dropout(x: np.ndarray, rate: float, rng, mode: str):
    """Returns (y, mask).  Train: inverted dropout; eval: identity, mask None."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode == "eval" or rate == 0.0:
        return x, None
    keep = 1.0 - rate
    mask = (rng.uniform(x.shape, 0.0, 1.0) >= rate) / keep
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask) -> np.ndarray:
    if mask is None:
        return dy
    return dy * mask


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. logits.

    logits: (n, classes, 1, 1); labels: (n,) ints.
    dlogits = (softmax - one_hot) / n.
    """
    n, classes = logits.shape[:2]
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= classes:
        raise ValueError(f"labels outside [0, {classes})")
    z = logits[:, :, 0, 0]
    z = z - z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    probs = ez / ez.sum(axis=1, keepdims=True)
    picked = probs[np.arange(n), labels]
    # clamp only to dodge log(0) from total underflow; loss stays >= 0
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    d = probs.copy()
    d[np.arange(n), labels] -= 1.0
    dlogits = (d / n)[:, :, None, None]
    check_finite(np.array([loss]), "loss")
    return loss, dlogits
