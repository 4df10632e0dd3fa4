"""Dense-tensor engine with reverse-mode differentiation.

Tensors wrap numpy arrays (rank <= 4) and remember the operation that
produced them; backward() walks the graph in reverse topological order
and accumulates gradients. Production code runs in float32; gradient
verification rebuilds the same graph in float64.

Also holds the Adam optimizer with decoupled weight decay and the
cosine learning-rate schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    LabelOutOfRange,
    NonScalarLoss,
    OddSpatialDims,
    ShapeMismatch,
)

LN_EPS = 1e-5


class Tensor:
    """A value in the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False,
                 parents: tuple = (), backward=None):
        arr = np.asarray(data)
        if arr.ndim > 4:
            raise ShapeMismatch(f"rank {arr.ndim} exceeds 4")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"

    def zero_grad(self):
        self.grad = None


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    g = np.asarray(g, dtype=t.data.dtype)
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to `shape` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Populate .grad for every tensor the scalar loss depends on."""
    if loss.data.shape != ():
        raise NonScalarLoss(f"loss has shape {loss.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones((), dtype=loss.data.dtype)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# Elementwise and structural ops

def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def back(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return Tensor(out_data, parents=(a, b), backward=back)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise product; `b` may be a Tensor or a python scalar."""
    if isinstance(b, Tensor):
        out_data = a.data * b.data

        def back(g):
            _accum(a, _unbroadcast(g * b.data, a.data.shape))
            _accum(b, _unbroadcast(g * a.data, b.data.shape))

        return Tensor(out_data, parents=(a, b), backward=back)

    scalar = float(b)
    out_data = a.data * scalar

    def back_scalar(g):
        _accum(a, g * scalar)

    return Tensor(out_data, parents=(a,), backward=back_scalar)


def tsum(x: Tensor, axis=None) -> Tensor:
    out_data = x.data.sum(axis=axis)

    def back(g):
        if axis is None:
            _accum(x, np.broadcast_to(g, x.data.shape))
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            g_exp = np.expand_dims(g, axes)
            _accum(x, np.broadcast_to(g_exp, x.data.shape))

    return Tensor(out_data, parents=(x,), backward=back)


def reshape(x: Tensor, shape) -> Tensor:
    out_data = x.data.reshape(shape)

    def back(g):
        _accum(x, g.reshape(x.data.shape))

    return Tensor(out_data, parents=(x,), backward=back)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    out_data = np.concatenate([t.data for t in tensors], axis=axis)

    def back(g):
        offset = 0
        for t in tensors:
            n = t.data.shape[axis]
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + n)
            _accum(t, g[tuple(index)])
            offset += n

    return Tensor(out_data, parents=tuple(tensors), backward=back)


# ---------------------------------------------------------------------------
# Activation functions

def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0)

    def back(g):
        _accum(x, g * (x.data > 0))

    return Tensor(out_data, parents=(x,), backward=back)


def tanh_act(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def back(g):
        _accum(x, g * (1.0 - out_data ** 2))

    return Tensor(out_data, parents=(x,), backward=back)


# ---------------------------------------------------------------------------
# Dense and normalization layers

def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b over the last axis of x."""
    d_in, d_out = w.data.shape
    if x.data.shape[-1] != d_in:
        raise ShapeMismatch(f"linear: input width {x.data.shape[-1]} != {d_in}")
    if b.data.shape != (d_out,):
        raise ShapeMismatch(f"linear: bias shape {b.data.shape} != ({d_out},)")
    out_data = x.data @ w.data + b.data

    def back(g):
        _accum(x, g @ w.data.T)
        x_flat = x.data.reshape(-1, d_in)
        g_flat = g.reshape(-1, d_out)
        _accum(w, x_flat.T @ g_flat)
        _accum(b, g_flat.sum(axis=0))

    return Tensor(out_data, parents=(x, w, b), backward=back)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    """Normalize the last axis to zero mean, unit population variance."""
    mu = x.data.mean(axis=-1, keepdims=True)
    var = ((x.data - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    norm = (x.data - mu) * inv
    out_data = norm * gain.data + bias.data

    def back(g):
        dnorm = g * gain.data
        m1 = dnorm.mean(axis=-1, keepdims=True)
        m2 = (dnorm * norm).mean(axis=-1, keepdims=True)
        _accum(x, inv * (dnorm - m1 - norm * m2))
        reduce_axes = tuple(range(g.ndim - 1))
        _accum(gain, (g * norm).sum(axis=reduce_axes))
        _accum(bias, g.sum(axis=reduce_axes))

    return Tensor(out_data, parents=(x, gain, bias), backward=back)


def softmax(x: Tensor) -> Tensor:
    """Stable softmax over the last axis."""
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        dot = (g * out_data).sum(axis=-1, keepdims=True)
        _accum(x, out_data * (g - dot))

    return Tensor(out_data, parents=(x,), backward=back)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-softmax probability of the true class.

    Accepts (m,) with an int target or (B,m) with length-B targets.
    """
    z = logits.data
    if z.ndim == 1:
        z = z[None, :]
        target_arr = np.array([int(targets)], dtype=np.int64)
    else:
        target_arr = np.asarray(targets, dtype=np.int64)
    n, m = z.shape
    if target_arr.min() < 0 or target_arr.max() >= m:
        raise LabelOutOfRange(f"target outside [0, {m})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -log_probs[np.arange(n), target_arr].mean()

    probs = np.exp(log_probs)

    def back(g):
        d = probs.copy()
        d[np.arange(n), target_arr] -= 1.0
        d *= float(g) / n
        _accum(logits, d.reshape(logits.data.shape))

    return Tensor(np.asarray(loss, dtype=logits.data.dtype),
                  parents=(logits,), backward=back)


# ---------------------------------------------------------------------------
# Spatial ops (NCHW; a leading batch axis is optional)

def _corr3x3(x: np.ndarray, kernels: np.ndarray) -> np.ndarray:
    """Batched 3x3 stride-1 cross-correlation with zero padding 1."""
    batch, _, height, width = x.shape
    c_out = kernels.shape[0]
    padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(padded, (3, 3), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * height * width, -1)
    kflat = kernels.reshape(c_out, -1)
    out = cols @ kflat.T
    return out.reshape(batch, height, width, c_out).transpose(0, 3, 1, 2), cols


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None) -> Tensor:
    """3x3 stride-1 cross-correlation with zero padding 1.

    x: (C_in,H,W) or (B,C_in,H,W); kernels: (C_out,C_in,3,3).
    """
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if kernels.data.ndim != 4 or kernels.data.shape[2:] != (3, 3):
        raise ShapeMismatch(f"kernels must be (C_out,C_in,3,3), got {kernels.data.shape}")
    if xd.shape[1] != kernels.data.shape[1]:
        raise ShapeMismatch(
            f"conv2d: {xd.shape[1]} input channels vs kernel {kernels.data.shape[1]}")
    c_out = kernels.data.shape[0]
    if bias is not None and bias.data.shape != (c_out,):
        raise ShapeMismatch(f"conv2d: bias shape {bias.data.shape} != ({c_out},)")

    out_data, cols = _corr3x3(xd, kernels.data)
    if bias is not None:
        out_data = out_data + bias.data[None, :, None, None]
    if squeeze:
        out_data = out_data[0]

    def back(g):
        gd = g[None] if squeeze else g
        batch, _, height, width = gd.shape
        g_flat = gd.transpose(0, 2, 3, 1).reshape(-1, c_out)
        _accum(kernels, (g_flat.T @ cols).reshape(kernels.data.shape))
        if bias is not None:
            _accum(bias, g_flat.sum(axis=0))
        if x.requires_grad:
            flipped = kernels.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            dx, _ = _corr3x3(gd, flipped)
            _accum(x, dx[0] if squeeze else dx)

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return Tensor(out_data, parents=parents, backward=back)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 stride-2 max pooling; gradient goes to the first max found."""
    squeeze = x.data.ndim == 3
    xd = x.data[None] if squeeze else x.data
    batch, chan, height, width = xd.shape
    if height % 2 or width % 2:
        raise OddSpatialDims(f"maxpool2 needs even spatial dims, got {height}x{width}")
    blocks = xd.reshape(batch, chan, height // 2, 2, width // 2, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(
        batch, chan, height // 2, width // 2, 4)
    idx = blocks.argmax(axis=-1)
    out_data = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    if squeeze:
        out_data = out_data[0]

    def back(g):
        gd = g[None] if squeeze else g
        dblocks = np.zeros((batch, chan, height // 2, width // 2, 4), dtype=gd.dtype)
        np.put_along_axis(dblocks, idx[..., None], gd[..., None], axis=-1)
        dx = dblocks.reshape(batch, chan, height // 2, width // 2, 2, 2)
        dx = dx.transpose(0, 1, 2, 4, 3, 5).reshape(batch, chan, height, width)
        _accum(x, dx[0] if squeeze else dx)

    return Tensor(out_data, parents=(x,), backward=back)


def global_avg_pool(x: Tensor) -> Tensor:
    """(.., C, H, W) -> (.., C) spatial mean."""
    height, width = x.data.shape[-2:]
    out_data = x.data.mean(axis=(-2, -1))

    def back(g):
        dx = np.broadcast_to(g[..., None, None] / (height * width), x.data.shape)
        _accum(x, dx)

    return Tensor(out_data, parents=(x,), backward=back)


# ---------------------------------------------------------------------------
# Optimizer

@dataclass
class OptimizerState:
    """Adam moments plus hyperparameters; weight decay is decoupled."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: OptimizerState) -> None:
    """One Adam update in place; parameters without a gradient are skipped."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        if p.grad is None:
            continue
        g = p.grad.astype(np.float64)
        if name not in state.m:
            state.m[name] = np.zeros(p.data.shape, dtype=np.float64)
            state.v[name] = np.zeros(p.data.shape, dtype=np.float64)
        if state.m[name].shape != p.data.shape:
            raise ShapeMismatch(f"optimizer state for {name} has wrong shape")
        if state.weight_decay:
            p.data -= (state.lr * state.weight_decay * p.data).astype(p.data.dtype)
        state.m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        update = state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        p.data -= update.astype(p.data.dtype)


def cosine_lr(epoch: int, total: int, lr_max: float) -> float:
    """Half-cosine decay from lr_max at epoch 0 to 0 at epoch `total`."""
    return 0.5 * lr_max * (1.0 + math.cos(math.pi * epoch / total))
