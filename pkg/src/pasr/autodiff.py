"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only the operations the recommender needs are provided. Every op checks its
output for NaN/Inf and raises :class:`NonFiniteError` at the op that produced
it, which makes divergence easy to localise.
"""

import contextlib
import math
from collections import OrderedDict

import numpy as np


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def backward(self):
        backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Build no graph inside the block (inference)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def _result(data, parents, backward_fn, op):
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values produced by {op}")
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward_fn, op)
    return Tensor(data, op=op)


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --------------------------------------------------------------------------
# elementwise
# --------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    ad, bd = a.data, b.data
    return _result(ad * bd, (a, b),
                   lambda g: (_unbroadcast(g * bd, sa), _unbroadcast(g * ad, sb)), "mul")


def relu(a):
    pos = a.data > 0
    return _result(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,), "relu")


def sigmoid(a):
    s = _sigmoid(a.data)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def log(a):
    x = a.data
    if np.any(x <= 0):
        raise NonFiniteError("log of non-positive value")
    return _result(np.log(x), (a,), lambda g: (g / x,), "log")


def log_sigmoid(a):
    """log(sigmoid(x)) without overflow for large |x|."""
    x = a.data
    out = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    return _result(out, (a,), lambda g: (g * _sigmoid(-x),), "log_sigmoid")


def _sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# --------------------------------------------------------------------------
# shape
# --------------------------------------------------------------------------

def reshape(a, shape):
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def swapaxes(a, ax1=-1, ax2=-2):
    return _result(np.swapaxes(a.data, ax1, ax2), (a,),
                   lambda g: (np.swapaxes(g, ax1, ax2),), "swapaxes")


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back, "concat")


def getitem(a, key):
    shape = a.shape

    def back(g):
        z = np.zeros(shape)
        np.add.at(z, key, g)
        return (z,)

    return _result(a.data[key], (a,), back, "getitem")


def expand(a, axis, size):
    """Insert a new ``axis`` and repeat ``a`` ``size`` times along it."""
    data = np.repeat(np.expand_dims(a.data, axis), size, axis=axis)
    return _result(data, (a,), lambda g: (g.sum(axis=axis),), "expand")


def sum(a, axis=None, keepdims=False):
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), back, "sum")


def mean(a, axis=None, keepdims=False):
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    sa, sb = a.shape, b.shape

    def back(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), sa)
        if b.requires_grad:
            if bd.ndim == 2 and ad.ndim > 2:
                gb = ad.reshape(-1, sa[-1]).T @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, sb)
        return ga, gb

    return _result(ad @ bd, (a, b), back, "matmul")


def embedding(table, idx):
    """Row gather ``table[idx]``; gradients scatter-add back into the table."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range [0, {table.shape[0]})")
    rows = table.shape[0]

    def back(g):
        width = g.shape[-1]
        flat = idx.ravel()
        gt = np.zeros((rows, width))
        for j in range(width):
            gt[:, j] = np.bincount(flat, weights=g[..., j].ravel(), minlength=rows)
        return (gt,)

    return _result(table.data[idx], (table,), back, "embedding")


# --------------------------------------------------------------------------
# normalisation / attention
# --------------------------------------------------------------------------

def softmax(x, mask=None):
    """Softmax over the last axis.

    ``mask`` is additive and broadcastable to ``x``: finite entries are added
    to the logits, ``-inf`` entries are excluded. A row with every entry
    excluded yields zeros.
    """
    logits = x.data
    allowed = None
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        allowed = np.broadcast_to(np.isfinite(mask), logits.shape)
        logits = np.where(allowed, logits + np.where(np.isfinite(mask), mask, 0.0), -np.inf)
    mx = np.max(logits, axis=-1, keepdims=True)
    mx = np.where(np.isfinite(mx), mx, 0.0)
    e = np.exp(logits - mx)
    z = e.sum(axis=-1, keepdims=True)
    y = e / np.where(z > 0, z, 1.0)

    def back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (x,), back, "softmax")


def layer_norm(x, gamma, beta, eps=1e-5):
    if x.shape[-1] < 2:
        raise ShapeError("layer norm needs a last dimension of width >= 2")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    var = xd.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xd - mu) * inv
    gd = gamma.data

    def back(g):
        gxhat = g * gd
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(xhat * gd + beta.data, (x, gamma, beta), back, "layer_norm")


def causal_mask(m, query_repeat=1):
    """Additive mask with ``-inf`` strictly above the diagonal.

    With ``query_repeat=r`` the mask has ``m*r`` query rows where rows
    ``i*r .. i*r+r-1`` all belong to step ``i`` (several queries per step).
    """
    step = np.arange(m * query_repeat) // query_repeat
    return np.where(np.arange(m)[None, :] > step[:, None], -np.inf, 0.0)


def attention(q, k, v, mask=None):
    """softmax(q k^T / sqrt(d) + mask) v, batched over leading axes."""
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"query width {q.shape[-1]} != key width {k.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"key count {k.shape[-2]} != value count {v.shape[-2]}")
    scores = mul(matmul(q, swapaxes(k)), 1.0 / math.sqrt(q.shape[-1]))
    return matmul(softmax(scores, mask), v)


def ffn(x, w1, b1, w2, b2):
    if x.shape[-1] != w1.shape[0] or w1.shape[1] != w2.shape[0]:
        raise ShapeError(f"ffn shape mismatch x{x.shape} W1{w1.shape} W2{w2.shape}")
    return add(matmul(relu(add(matmul(x, w1), b1)), w2), b2)


# --------------------------------------------------------------------------
# graph traversal
# --------------------------------------------------------------------------

def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring grad."""
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


# --------------------------------------------------------------------------
# parameters and optimiser
# --------------------------------------------------------------------------

class ParamSet(OrderedDict):
    """Named trainable tensors."""

    def add(self, name, data):
        if name in self:
            raise KeyError(f"duplicate parameter {name!r}")
        t = parameter(data)
        self[name] = t
        return t

    def zero_grad(self):
        for p in self.values():
            p.grad = None

    def count(self):
        return int(np.sum([p.data.size for p in self.values()]))

    def state(self):
        return OrderedDict((k, v.data.copy()) for k, v in self.items())

    def load_state(self, state):
        if list(state) != list(self):
            raise KeyError("parameter names do not match")
        for k, arr in state.items():
            if arr.shape != self[k].shape:
                raise ShapeError(f"shape mismatch for {k}: {arr.shape} vs {self[k].shape}")
            self[k].data = np.array(arr, dtype=np.float64)


class Adam:
    """Adam with L2 weight decay added to the gradient."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.0):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            if self.weight_decay:
                g = g + self.weight_decay * p.data
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
