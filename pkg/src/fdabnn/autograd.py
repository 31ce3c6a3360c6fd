"""A small dense tensor type with a reverse-mode tape.

Every primitive records a node holding its parents and a backward closure.
``custom_node`` lets callers pair any forward map with an arbitrary backward
rule, which is how sign layers run ``sign`` forward and a surrogate backward.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class NonFiniteError(FloatingPointError):
    """Raised when a tensor would hold NaN or Inf."""


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


def _check_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {where}")


class TapeNode:
    """One recorded operation: parents, saved state, and the backward rule.

    ``backward_rule(upstream)`` returns one gradient (or None) per parent.
    """

    __slots__ = ("inputs", "backward_rule", "name", "consumed")

    def __init__(self, inputs: Sequence["Tensor"], backward_rule: Callable, name: str):
        self.inputs = tuple(inputs)
        self.backward_rule = backward_rule
        self.name = name
        self.consumed = False


class Tensor:
    """Dense float array with an optional gradient slot."""

    def __init__(self, data, requires_grad: bool = False, dtype=None, _node: TapeNode | None = None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        if arr.size == 0:
            raise ShapeError("empty tensor")
        _check_finite(arr, "tensor construction")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._node = _node

    # -- basic accessors -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # -- operator sugar --------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), scale(self, -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None):
        return reduce_sum(self, axis)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


_grad_enabled = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Evaluate primitives without recording tape nodes."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def _make(out: np.ndarray, inputs: Sequence[Tensor], rule: Callable, name: str) -> Tensor:
    _check_finite(out, name)
    if _grad_enabled and any(t.requires_grad for t in inputs):
        return Tensor(out, requires_grad=True, _node=TapeNode(inputs, rule, name))
    return Tensor(out)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, name: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), rule, "add")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def rule(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), rule, "mul")


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = a.dtype.type(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scale")


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def rule(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), rule, "matmul")


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,), "relu")


def clip(a, lo: float = -1.0, hi: float = 1.0) -> Tensor:
    """Hard clip; gradient passes only where lo <= a <= hi."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


def reduce_sum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=True)

    def rule(g):
        return (np.broadcast_to(g.reshape(out.shape), a.shape).copy(),)

    if axis is None:
        out_shape = (1,)
    else:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(ax % a.ndim for ax in axes)
        out_shape = tuple(s for i, s in enumerate(a.shape) if i not in axes) or (1,)
    return _make(out.reshape(out_shape), (a,), rule, "reduce_sum")


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    return scale(reduce_sum(a, axis), 1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {a.shape} as {shape}") from exc
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def conv2d(x, w, stride: int = 1, padding: int = 0) -> Tensor:
    """NCHW activations against OIHW kernels; no dilation, no groups."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError("conv2d expects 4-d input and kernel")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if ci != c:
        raise ShapeError(f"conv2d: input has {c} channels, kernel expects {ci}")
    if h + 2 * padding < kh or wd + 2 * padding < kw:
        raise ShapeError("conv2d: kernel larger than padded input")
    cols, ho, wo = _im2col(x.data, kh, kw, stride, padding)
    wmat = w.data.reshape(o, -1)
    out = (cols @ wmat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def rule(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, o)
        dw = (g2.T @ cols).reshape(w.shape)
        dcols = (g2 @ wmat).reshape(n, ho, wo, c, kh, kw)
        dxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=g.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                    dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                )
        dx = dxp[:, :, padding:padding + h, padding:padding + wd] if padding else dxp
        return dx, dw

    return _make(np.ascontiguousarray(out), (x, w), rule, "conv2d")


def max_pool2d(x, size: int = 2) -> Tensor:
    """Non-overlapping max pooling; spatial extents must divide by ``size``."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    if h % size or w % size:
        raise ShapeError(f"max_pool2d: {h}x{w} not divisible by {size}")
    blocks = x.data.reshape(n, c, h // size, size, w // size, size).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h // size, w // size, size * size)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def rule(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(n, c, h // size, w // size, size, size).transpose(0, 1, 2, 4, 3, 5)
        return (gx.reshape(n, c, h, w),)

    return _make(out, (x,), rule, "max_pool2d")


def global_avg_pool(x) -> Tensor:
    x = as_tensor(x)
    n, c, h, w = x.shape
    inv = x.dtype.type(1.0 / (h * w))

    def rule(g):
        return (np.broadcast_to(g[:, :, None, None] * inv, x.shape).copy(),)

    return _make(x.data.mean(axis=(2, 3)), (x,), rule, "global_avg_pool")


def batch_norm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over N (and H, W for 4-d input).

    Running statistics are updated in place when ``training`` is set.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    axes = (0, 2, 3) if x.ndim == 4 else (0,)
    bshape = (1, -1, 1, 1) if x.ndim == 4 else (1, -1)
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        count = x.size // x.shape[1]
        running_mean *= 1 - momentum
        running_mean += momentum * mu
        running_var *= 1 - momentum
        running_var += momentum * var * count / max(count - 1, 1)
    else:
        mu, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def rule(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        gx = g * gamma.data.reshape(bshape)
        if training:
            m = x.size // x.shape[1]
            dx = (inv_std.reshape(bshape) / m) * (
                m * gx - gx.sum(axis=axes).reshape(bshape)
                - xhat * (gx * xhat).sum(axis=axes).reshape(bshape)
            )
        else:
            dx = gx * inv_std.reshape(bshape)
        return dx, dgamma, dbeta

    return _make(out.astype(x.dtype), (x, gamma, beta), rule, "batch_norm")


def cross_entropy(logits, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy against integer labels."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    rows = np.arange(labels.size)
    loss = -logp[rows, labels].mean()

    def rule(g):
        p = np.exp(logp)
        p[rows, labels] -= 1
        return (p * (g.reshape(()) / labels.size),)

    return _make(np.asarray([loss], dtype=logits.dtype), (logits,), rule, "cross_entropy")


def custom_node(forward_fn: Callable, backward_fn: Callable, *inputs, name: str = "custom") -> Tensor:
    """Record ``forward_fn`` on the tape with ``backward_fn`` as its gradient.

    ``forward_fn(*arrays) -> array`` and
    ``backward_fn(upstream, *arrays) -> array | tuple`` with one entry per input
    (``None`` for inputs that receive no gradient). The backward rule is used
    verbatim; it is never checked against the derivative of ``forward_fn``.
    """
    tensors = [as_tensor(t) for t in inputs]
    arrays = [t.data for t in tensors]
    out = np.asarray(forward_fn(*arrays))

    def rule(g):
        grads = backward_fn(g, *arrays)
        if not isinstance(grads, tuple):
            grads = (grads,)
        if len(grads) != len(tensors):
            raise ShapeError(f"{name}: backward returned {len(grads)} grads for {len(tensors)} inputs")
        for t, gr in zip(tensors, grads):
            if gr is not None and np.shape(gr) != t.shape:
                raise ShapeError(f"{name}: backward grad shape {np.shape(gr)} != input shape {t.shape}")
        return grads

    return _make(out, tensors, rule, name)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t._node is not None:
            for parent in reversed(t._node.inputs):
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
    return order


def backward(loss: Tensor, seed: np.ndarray | float | None = None, retain_graph: bool = False) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._node is None:
        raise TapeError("loss is not attached to a tape")
    order = _topo_order(loss)
    for t in order:
        if t._node is not None and t._node.consumed:
            raise TapeError("backward called twice on the same tape; rebuild the graph")

    start = np.ones_like(loss.data) if seed is None else np.full_like(loss.data, seed)
    grads: dict[int, np.ndarray] = {id(loss): start}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        node = t._node
        if node is None:
            t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        for parent, pg in zip(node.inputs, node.backward_rule(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = np.asarray(pg, dtype=parent.dtype)
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg
        if not retain_graph:
            node.consumed = True
