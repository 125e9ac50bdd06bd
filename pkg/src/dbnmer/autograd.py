"""Dense float64 tensors with define-by-run reverse-mode differentiation.

Every differentiable op returns a new :class:`Tensor` whose ``node`` records
the parents and a closure mapping the output gradient to parent gradients.
:func:`backward` walks that graph in reverse topological order, visiting
each node exactly once.
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64
MASK_VALUE = -1e9
LAYERNORM_EPS = 1e-5


class DimensionError(ValueError):
    pass


class GradientError(RuntimeError):
    """Misuse of the backward pass (non-scalar loss, un-reset gradients)."""


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


class no_grad:
    """Context manager that stops ops from recording graph nodes."""

    def __enter__(self):
        self._prev = grad_enabled()
        _state.enabled = False
        return self

    def __exit__(self, *exc):
        _state.enabled = self._prev
        return False


class Node:
    __slots__ = ("op", "parents", "backward")

    def __init__(self, op: str, parents: tuple, backward: Callable):
        self.op = op
        self.parents = parents
        self.backward = backward


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.asarray(data, dtype=DTYPE)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node: Node | None = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], op: str, backward: Callable) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.node = Node(op, tuple(parents), backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), "add", bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), "sub", bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), "mul", bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data / b.data, (a, b), "div", bw)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), "neg", lambda g: (-g,))


def power(a: Tensor, exponent: float) -> Tensor:
    def bw(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return _make(a.data ** exponent, (a,), "pow", bw)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), "exp", lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), "log", lambda g: (g / a.data,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), "sqrt", lambda g: (g * 0.5 / out,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), "relu", lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    # split by sign so exp never overflows
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(out, (a,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), "tanh", lambda g: (g * (1.0 - out * out),))


def masked_fill(a: Tensor, mask: np.ndarray, value: float = MASK_VALUE) -> Tensor:
    """Replace entries where ``mask`` is true by a constant; no gradient flows there."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.shape)
    out = np.where(mask, value, a.data)
    return _make(out, (a,), "masked_fill", lambda g: (np.where(mask, 0.0, g),))


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(out, (a,), "sum", bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes]))
    return tsum(a, axes, keepdims) * (1.0 / count)


def tmax(a: Tensor, axis: int, keepdims: bool = False) -> Tensor:
    """Max over one axis; the gradient goes to the first maximal entry."""
    axis = axis % a.ndim
    idx = np.expand_dims(np.argmax(a.data, axis=axis), axis)
    out = np.take_along_axis(a.data, idx, axis=axis)

    def bw(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros(a.shape)
        np.put_along_axis(full, idx, g, axis=axis)
        return (full,)

    return _make(out if keepdims else np.squeeze(out, axis), (a,), "max", bw)


# ---------------------------------------------------------------- shape ops

def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), "reshape", lambda g: (g.reshape(a.shape),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), "transpose", lambda g: (g.transpose(inv),))


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    axes = list(range(a.ndim))
    axes[ax1], axes[ax2] = axes[ax2], axes[ax1]
    return transpose(a, tuple(axes))


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(isinstance(i, (int, np.integer, slice)) or i is Ellipsis or i is None for i in items)


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]
    basic = _is_basic_index(index)

    def bw(g):
        full = np.zeros(a.shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out, copy=True), (a,), "getitem", bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis
        ):
            raise DimensionError(
                f"concat along axis {axis}: incompatible shapes {[x.shape for x in tensors]}"
            )
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def bw(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        )

    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(out, tensors, "concat", bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Stack ``a`` then ``b`` along the channel axis of C×H×W (or N×C×H×W) maps."""
    if a.ndim != b.ndim or a.shape[-2:] != b.shape[-2:] or a.shape[:-3] != b.shape[:-3]:
        raise DimensionError(f"concat_channels: spatial mismatch {a.shape} vs {b.shape}")
    return concat([a, b], axis=-3)


def split_channels(x: Tensor, first: int) -> tuple[Tensor, Tensor]:
    c = x.shape[-3]
    return x[..., :first, :, :], x[..., first:c, :, :]


def pad_gather(rows: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows of a (n, d) tensor by an integer array; -1 selects a zero row."""
    index = np.asarray(index)
    zero = Tensor(np.zeros((1,) + rows.shape[1:]))
    ext = concat([rows, zero], axis=0)
    return getitem(ext, np.where(index < 0, rows.shape[0], index))


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner extents disagree for shapes {a.shape} and {b.shape}")

    flat = b.ndim == 2 and a.ndim > 2

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            if flat:
                # fold the batch axes into rows instead of summing a (B, k, n) stack
                k, n = b.shape
                gb = a.data.reshape(-1, k).T @ g.reshape(-1, n)
            else:
                gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    if flat:
        out = (a.data.reshape(-1, a.shape[-1]) @ b.data).reshape(a.shape[:-1] + (b.shape[-1],))
    else:
        out = a.data @ b.data
    return _make(out, (a, b), "matmul", bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with weight stored as (in, out)."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def embedding_lookup(weight: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise DimensionError(f"embedding: ids outside [0, {weight.shape[0]})")
    return getitem(weight, ids)


# ---------------------------------------------------------------- normalisation / softmax

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return _make(p, (x,), "softmax", bw)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def bw(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), "log_softmax", bw)


def check_distribution(target: np.ndarray, tol: float = 1e-9) -> None:
    if np.any(target < 0) or not np.all(np.isfinite(target)):
        raise ValueError("target distribution has negative or non-finite entries")
    sums = target.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > tol):
        raise ValueError(f"target rows must sum to 1 (max deviation {np.abs(sums - 1).max():.3e})")


def cross_entropy_soft(logits: Tensor, target, validate: bool = True) -> Tensor:
    """Per-row ``-sum_k target_k log softmax(logits)_k``; scalar for a 1-D input."""
    target = np.asarray(target, dtype=DTYPE)
    if target.shape != logits.shape:
        raise DimensionError(f"cross_entropy_soft: target {target.shape} vs logits {logits.shape}")
    if validate:
        check_distribution(target)
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(logp)
    out = -(target * logp).sum(axis=-1)

    def bw(g):
        g = np.expand_dims(g, -1)
        # d/dz of -sum t log p is p * sum(t) - t
        return (g * (p * target.sum(axis=-1, keepdims=True) - target),)

    return _make(out, (logits,), "cross_entropy_soft", bw)


def layernorm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None,
              eps: float = LAYERNORM_EPS) -> Tensor:
    d = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        gx = g
        return (inv / d * (d * gx - gx.sum(-1, keepdims=True)
                           - xhat * (gx * xhat).sum(-1, keepdims=True)),)

    y = _make(xhat, (x,), "layernorm", bw)
    if gamma is not None:
        y = mul(y, gamma)
    if beta is not None:
        y = add(y, beta)
    return y


# ---------------------------------------------------------------- convolution / pooling

def conv2d(x: Tensor, kernels: Tensor, bias: Tensor | None = None, pad: int | tuple = 0) -> Tensor:
    """Zero-padded cross-correlation of C_in×H×W (optionally batched) maps."""
    squeeze = x.ndim == 3
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    if x.ndim != 4 or kernels.ndim != 4:
        raise DimensionError(f"conv2d: expected C×H×W input and 4-D kernels, got {x.shape}, {kernels.shape}")
    n, c, h, w = x.shape
    o, ck, kh, kw = kernels.shape
    if ck != c:
        raise DimensionError(f"conv2d: input has {c} channels, kernels expect {ck}")
    ph, pw = (pad, pad) if isinstance(pad, int) else pad
    hp, wp = h + 2 * ph, w + 2 * pw
    if kh > hp or kw > wp:
        raise DimensionError(f"conv2d: kernel {kh}×{kw} larger than padded input {hp}×{wp}")
    ho, wo = hp - kh + 1, wp - kw + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    wk = kernels.data
    out = np.zeros((o, n, ho, wo))
    for i in range(kh):
        for j in range(kw):
            win = xp[:, :, i:i + ho, j:j + wo]
            out += np.tensordot(wk[:, :, i, j], win, axes=([1], [1]))
    out = out.transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)

    def bw(g):
        gt = g.transpose(1, 0, 2, 3)  # o, n, ho, wo
        gx = np.zeros((n, c, hp, wp)) if x.requires_grad else None
        gk = np.zeros(wk.shape) if kernels.requires_grad else None
        for i in range(kh):
            for j in range(kw):
                if gk is not None:
                    win = xp[:, :, i:i + ho, j:j + wo]
                    gk[:, :, i, j] = np.tensordot(gt, win, axes=([1, 2, 3], [0, 2, 3]))
                if gx is not None:
                    gx[:, :, i:i + ho, j:j + wo] += np.tensordot(
                        wk[:, :, i, j], gt, axes=([0], [0])).transpose(1, 0, 2, 3)
        if gx is not None:
            gx = gx[:, :, ph:ph + h, pw:pw + w]
        grads = [gx, gk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    parents = (x, kernels) if bias is None else (x, kernels, bias)
    y = _make(out, parents, "conv2d", bw)
    return reshape(y, y.shape[1:]) if squeeze else y


def maxpool2x2(x: Tensor) -> Tensor:
    """2×2 stride-2 max pooling over the last two axes (odd edges are dropped).

    Ties route the gradient to the first maximal cell in row-major order.
    """
    h, w = x.shape[-2:]
    if h < 2 or w < 2:
        raise DimensionError(f"maxpool2x2: spatial extents {h}×{w} are below 2")
    h2, w2 = h // 2, w // 2
    lead = x.shape[:-2]
    v = x.data[..., :2 * h2, :2 * w2].reshape(lead + (h2, 2, w2, 2))
    nl = len(lead)
    perm = tuple(range(nl)) + (nl, nl + 2, nl + 1, nl + 3)
    win = v.transpose(perm).reshape(lead + (h2, w2, 4))
    idx = np.argmax(win, axis=-1)[..., None]
    out = np.take_along_axis(win, idx, axis=-1)[..., 0]

    def bw(g):
        gw = np.zeros(lead + (h2, w2, 4))
        np.put_along_axis(gw, idx, g[..., None], axis=-1)
        gv = gw.reshape(lead + (h2, w2, 2, 2)).transpose(perm).reshape(lead + (2 * h2, 2 * w2))
        full = np.zeros(x.shape)
        full[..., :2 * h2, :2 * w2] = gv
        return (full,)

    return _make(out, (x,), "maxpool2x2", bw)


# ---------------------------------------------------------------- backward

def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        if t.node is not None:
            for p in t.node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every trainable leaf reachable from a scalar loss.

    Leaves that already hold a gradient raise :class:`GradientError`; call
    ``zero_grad`` between passes.
    """
    if loss.size != 1:
        raise GradientError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GradientError("loss is not attached to any trainable tensor")
    order = _topological(loss)
    leaves = [t for t in order if t.node is None]
    stale = [t.name or repr(t) for t in leaves if t.grad is not None]
    if stale:
        raise GradientError(f"gradients not reset before backward: {stale[:3]}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones(loss.shape)}
    for t in reversed(order):
        g = grads.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            t.grad = np.array(g, dtype=DTYPE).reshape(t.shape)
            continue
        for p, pg in zip(t.node.parents, t.node.backward(g)):
            if pg is None or not p.requires_grad:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = pg if prev is None else prev + pg


def zero_grad(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None
