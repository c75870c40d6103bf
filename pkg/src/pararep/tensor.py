"""Tape-based reverse-mode automatic differentiation over numpy arrays.

Every operation returns a new :class:`Tensor` that remembers its parents and
a closure mapping the output gradient to parent gradients.  ``backward``
walks the graph in reverse topological order and *adds* into the ``grad``
buffer of every leaf that requires a gradient, so callers zero gradients
explicitly between optimisation steps.

Operations preserve the floating dtype of their inputs.  Parameters live in
float32; the gradient checker temporarily promotes them to float64.
"""
from __future__ import annotations

import contextlib
import math
import os

import numpy as np

from .errors import ContractError, DimensionError, NumericalError

_grad_enabled = True
_debug = os.environ.get("PARAREP_DEBUG", "") not in ("", "0")

SeededRng = np.random.Generator


def seeded_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; identical seeds give bit-identical draw sequences."""
    return np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))


def set_debug(flag: bool) -> None:
    """Enable the finite-value check after every operation."""
    global _debug
    _debug = bool(flag)


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, np.ndarray):
        if dtype is not None:
            return data.astype(dtype, copy=False)
        if data.dtype in (np.float32, np.float64):
            return data
        return data.astype(np.float32)
    return np.asarray(data, dtype=dtype or np.float32)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_prev", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._prev: tuple = ()
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, pow_(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float32
    return Tensor(np.asarray(x, dtype=dtype))


def _node(data: np.ndarray, parents: tuple, backward) -> Tensor:
    if _debug and not np.all(np.isfinite(data)):
        raise NumericalError("non-finite value produced by tensor operation")
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._prev = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._prev = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable leaf's ``grad``."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._prev:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node._prev:
            if node.grad is None:
                node.grad = np.array(g, dtype=node.data.dtype, copy=True).reshape(node.shape)
            else:
                node.grad += g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._prev, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            key = id(p)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _node(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a = _lift(a, b if isinstance(b, Tensor) else None)
    b = _lift(b, a)
    sa, sb = a.shape, b.shape

    def bw(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _node(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)

        def bw_s(g):
            return (g * c,)

        return _node(a.data * a.data.dtype.type(c), (a,), bw_s)
    a = _lift(a, b)
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data

    def bw(g):
        return _unbroadcast(g * bd, sa), _unbroadcast(g * ad, sb)

    return _node(ad * bd, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _node(-a.data, (a,), lambda g: (-g,))


def pow_(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return _node(ad ** p, (a,), lambda g: (g * p * ad ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _node(np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = out.astype(x.dtype, copy=False)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    x = a.data
    mask = x > 0
    return _node(x * mask, (a,), lambda g: (g * mask,))


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(a: Tensor) -> Tensor:
    """Tanh approximation of GELU."""
    x = a.data
    dt = x.dtype.type
    inner = dt(_GELU_C) * (x + dt(0.044715) * x * x * x)
    t = np.tanh(inner)
    out = dt(0.5) * x * (dt(1.0) + t)

    def bw(g):
        dinner = dt(_GELU_C) * (dt(1.0) + dt(3 * 0.044715) * x * x)
        return (g * (dt(0.5) * (dt(1.0) + t) + dt(0.5) * x * (dt(1.0) - t * t) * dinner),)

    return _node(out, (a,), bw)


def identity(a: Tensor) -> Tensor:
    return a


ACTIVATIONS = {"gelu": gelu, "tanh": tanh, "relu": relu, "identity": identity}


# ------------------------------------------------------------------ shaping

def reshape(a: Tensor, shape: tuple) -> Tensor:
    old = a.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes: tuple) -> Tensor:
    if not axes:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return _node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def getitem(a: Tensor, idx) -> Tensor:
    """Basic (non-fancy) indexing with gradient scattered back."""
    shape, dtype = a.shape, a.dtype

    def bw(g):
        full = np.zeros(shape, dtype=dtype)
        full[idx] = g
        return (full,)

    return _node(a.data[idx], (a,), bw)


def concat(tensors: list, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw)


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape),)

    return _node(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / float(n))


# ------------------------------------------------------------------ linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy broadcasting over leading (batch) dimensions."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2 and ad.ndim > 2:
                gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return _node(np.matmul(ad, bd), (a, b), bw)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w + b for x of shape [..., in] and w of shape [in, out]."""
    if x.shape[-1] != w.shape[0]:
        raise DimensionError(f"linear shape mismatch: {x.shape} @ {w.shape}")
    xd, wd = x.data, w.data
    out = np.matmul(xd, wd)
    if b is not None:
        out = out + b.data

    def bw(g):
        gx = np.matmul(g, wd.T) if x.requires_grad else None
        gw = xd.reshape(-1, xd.shape[-1]).T @ g.reshape(-1, g.shape[-1]) if w.requires_grad else None
        if b is None:
            return gx, gw
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, bw)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]``; gradient is scattered with accumulation."""
    ids = np.asarray(ids, dtype=np.int64)
    shape = table.shape

    def bw(g):
        full = np.zeros(shape, dtype=table.dtype)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, shape[-1]))
        return (full,)

    return _node(table.data[ids], (table,), bw)


# ------------------------------------------------------------------ normalisation

def softmax(x: Tensor, axis: int = -1, additive_mask: np.ndarray | None = None) -> Tensor:
    """Softmax with max subtraction; ``additive_mask`` is added before normalising."""
    z = x.data if additive_mask is None else x.data + additive_mask
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _node(s, (x,), bw)


def softmax_rows(x: Tensor) -> Tensor:
    return softmax(x, axis=-1)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _node(out, (x,), bw)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean / unit variance, then scale and shift."""
    xd = x.data
    dt = xd.dtype.type
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = dt(1.0) / np.sqrt(var + dt(eps))
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    h = xd.shape[-1]

    def bw(g):
        lead = g.reshape(-1, h)
        gg = (lead * xhat.reshape(-1, h)).sum(axis=0) if gain.requires_grad else None
        gb = lead.sum(axis=0) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            gxhat = g * gain.data
            gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gb

    return _node(out, (x, gain, bias), bw)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    if not training or p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return _node(x.data * keep, (x,), lambda g: (g * keep,))


# ------------------------------------------------------------------ losses

IGNORE_ID = -100


def cross_entropy_logits(logits: Tensor, targets, ignore_id: int = IGNORE_ID) -> Tensor:
    """Mean negative log-likelihood over positions whose target != ignore_id.

    ``logits`` has shape [..., V]; ``targets`` matches the leading shape.  When
    every position is ignored the result is 0 and carries a zero gradient.
    """
    v = logits.shape[-1]
    flat = logits.data.reshape(-1, v)
    t = np.asarray(targets, dtype=np.int64).reshape(-1)
    if t.shape[0] != flat.shape[0]:
        raise DimensionError(f"cross_entropy shape mismatch: logits {logits.shape}, targets {np.shape(targets)}")
    keep = t != ignore_id
    n = int(keep.sum())
    dtype = logits.dtype
    if n == 0:
        shape = logits.shape
        return _node(np.zeros((), dtype=dtype), (logits,), lambda g: (np.zeros(shape, dtype=dtype),))
    rows = np.nonzero(keep)[0]
    tk = t[rows]
    if tk.min() < 0 or tk.max() >= v:
        bad = tk[(tk < 0) | (tk >= v)][0]
        raise IndexError(f"target id {int(bad)} outside [0, {v})")
    z = flat[rows]
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    logp = z[np.arange(n), tk] - lse
    loss = np.asarray(-logp.sum() / dtype.type(n), dtype=dtype)
    shape = logits.shape

    def bw(g):
        p = np.exp(z - lse[:, None])
        p[np.arange(n), tk] -= 1.0
        full = np.zeros((flat.shape[0], v), dtype=dtype)
        full[rows] = p * (g / n)
        return (full.reshape(shape),)

    return _node(loss, (logits,), bw)


def _log_sigmoid(x: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -x)


def binary_cross_entropy_logits(logits: Tensor, labels, weights=None) -> Tensor:
    """Mean BCE in the stable logit form over entries with nonzero weight."""
    x = logits.data.reshape(-1)
    y = np.asarray(labels, dtype=x.dtype).reshape(-1)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=x.dtype).reshape(-1)
    n = float(w.sum())
    shape, dtype = logits.shape, logits.dtype
    if n == 0.0:
        return _node(np.zeros((), dtype=dtype), (logits,), lambda g: (np.zeros(shape, dtype=dtype),))
    per = -(y * _log_sigmoid(x) + (1.0 - y) * _log_sigmoid(-x))
    loss = np.asarray((per * w).sum() / n, dtype=dtype)

    def bw(g):
        sig = np.exp(_log_sigmoid(x))
        return (((sig - y) * w * (g / n)).reshape(shape).astype(dtype, copy=False),)

    return _node(loss, (logits,), bw)


def binary_cross_entropy_logit(logit: Tensor, label: int) -> Tensor:
    if label not in (0, 1):
        raise ContractError(f"label must be 0 or 1, got {label!r}")
    return binary_cross_entropy_logits(logit, [label])


def mse(pred: Tensor, target) -> Tensor:
    t = np.asarray(target, dtype=pred.dtype).reshape(pred.shape)
    diff = pred.data - t
    n = diff.size
    return _node(np.asarray((diff * diff).sum() / n, dtype=pred.dtype), (pred,),
                 lambda g: (g * 2.0 * diff / n,))


def weighted_sum(parts: list, weights: list) -> Tensor:
    """sum_i w_i * part_i evaluated in float64 so the logged total is exact."""
    vals = [float(p.data) for p in parts]
    total = math.fsum(w * v for w, v in zip(weights, vals)) if parts else 0.0

    def bw(g):
        return tuple(np.asarray(g * w, dtype=p.dtype).reshape(p.shape) for p, w in zip(parts, weights))

    return _node(np.asarray(total, dtype=np.float64), tuple(parts), bw)
