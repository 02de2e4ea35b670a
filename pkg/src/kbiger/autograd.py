"""Dense tensors with tape-based reverse-mode differentiation.

Operations executed inside ``with Tape():`` on tensors that require gradients
are appended to that tape. ``gradient`` replays the tape backwards exactly once.
Outside a tape, ops compute values only.

All values are float64.
"""
from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from . import _kernels as K
from .errors import InvalidArgumentError, InvalidStateError

DTYPE = np.float64
KL_EPS = 1e-12

_ACTIVE: list["Tape"] = []


class Tape:
    """Ordered record of executed operations."""

    def __init__(self):
        self.nodes: list[tuple[str, "Tensor", tuple, Callable]] = []
        self.consumed = False
        self.replay_order: list[int] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    @property
    def op_names(self):
        return [n[0] for n in self.nodes]


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "tape")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.tape = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

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

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(name, data, inputs, backward):
    out = Tensor(data)
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        if _ACTIVE:
            tape = _ACTIVE[-1]
            tape.nodes.append((name, out, inputs, backward))
            out.tape = tape
    return out


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ------------------------------------------------------------------ elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _record("mul", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def neg(a):
    a = as_tensor(a)
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def sigmoid(x):
    """Logistic function, elementwise."""
    x = as_tensor(x)
    y = K.sigmoid(x.data)
    return _record("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _record("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)
    return _record("exp", y, (x,), lambda g: (g * y,))


# ------------------------------------------------------------------ linear algebra


def matmul(a, b):
    """a (..., n) @ b (n,) or (n, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[0]:
        raise InvalidArgumentError(f"matmul shape mismatch {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        if b.ndim == 1:
            ga = g[..., None] * b.data
            gb = np.tensordot(g, a.data, axes=(tuple(range(g.ndim)), tuple(range(g.ndim))))
        else:
            ga = g @ b.data.T
            a2 = a.data.reshape(-1, a.shape[-1])
            gb = a2.T @ g.reshape(-1, g.shape[-1])
        return ga, gb

    return _record("matmul", out, (a, b), backward)


def transpose(a):
    a = as_tensor(a)
    if a.ndim != 2:
        raise InvalidArgumentError("transpose expects a matrix")
    return _record("transpose", a.data.T, (a,), lambda g: (g.T,))


def affine(x, W, b=None):
    """W x + b applied to the last axis of x; W is stored (out, in)."""
    y = matmul(x, transpose(W))
    return y if b is None else add(y, b)


def inner(a, b):
    """Inner product along the last axis."""
    return sum(mul(a, b), axis=-1)


def sum(x, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _record("sum", out, (x,), backward)


def reshape(x, shape):
    x = as_tensor(x)
    return _record("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def concatenate(xs: Sequence, axis=-1):
    xs = tuple(as_tensor(x) for x in xs)
    out = np.concatenate([x.data for x in xs], axis=axis)
    ax = axis % out.ndim
    cuts = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def backward(g):
        return tuple(np.split(g, cuts, axis=ax))

    return _record("concatenate", out, xs, backward)


def stack(xs: Sequence, axis=0):
    xs = tuple(as_tensor(x) for x in xs)
    out = np.stack([x.data for x in xs], axis=axis)

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(xs)))

    return _record("stack", out, xs, backward)


def _is_basic(key):
    key = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, np.integer, slice)) or k is Ellipsis for k in key)


def getitem(x, key):
    x = as_tensor(x)
    out = x.data[key]
    basic = _is_basic(key)

    def backward(g):
        gx = np.zeros_like(x.data)
        if basic:
            gx[key] += g
        else:
            np.add.at(gx, key, g)
        return (gx,)

    return _record("getitem", np.array(out, dtype=DTYPE), (x,), backward)


def take_rows(x, index):
    """x[index] along axis 0 (gather); gradients scatter back."""
    x = as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    return _record("take_rows", x.data[index], (x,),
                   lambda g: (K.scatter_add_rows(g, index, n),))


def segment_sum(x, segments, num_segments):
    """out[s] = sum of rows x[i] with segments[i] == s."""
    x = as_tensor(x)
    segments = np.asarray(segments, dtype=np.int64)
    out = K.scatter_add_rows(x.data, segments, num_segments)
    return _record("segment_sum", out, (x,), lambda g: (g[segments],))


# ------------------------------------------------------------------ normalizers


def softmax(v, axis=-1, mask=None):
    """Softmax along ``axis``; masked-out positions (mask == 0) receive zero mass."""
    v = as_tensor(v)
    if v.size == 0 or v.shape[axis] == 0:
        raise InvalidArgumentError("softmax of an empty vector")
    x = v.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        x = np.where(mask, x, -np.inf)
    z = np.exp(x - x.max(axis=axis, keepdims=True))
    y = z / z.sum(axis=axis, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _record("softmax", y, (v,), backward)


def segment_softmax(x, segments, num_segments):
    """Softmax computed independently within each segment of a flat vector."""
    x = as_tensor(x)
    segments = np.asarray(segments, dtype=np.int64)
    y = K.segment_softmax(x.data, segments, num_segments)
    return _record("segment_softmax", y, (x,),
                   lambda g: (K.segment_softmax_backward(y, g, segments, num_segments),))


def kl_terms(p, q, eps=KL_EPS):
    """Elementwise p (ln p - ln max(q, eps)), with 0 ln 0 := 0."""
    p, q = as_tensor(p), as_tensor(q)
    if p.shape != q.shape:
        raise InvalidArgumentError(f"kl length mismatch {p.shape} vs {q.shape}")
    pos = p.data > 0
    qc = np.maximum(q.data, eps)
    logp = np.log(np.where(pos, p.data, 1.0))
    out = np.where(pos, p.data * (logp - np.log(qc)), 0.0)

    def backward(g):
        gp = np.where(pos, g * (logp - np.log(qc) + 1.0), 0.0)
        gq = np.where(q.data > eps, -g * p.data / qc, 0.0)
        return gp, gq

    return _record("kl_terms", out, (p, q), backward)


def kl_divergence(p, q, eps=KL_EPS):
    """D_KL(p || q) for probability vectors, q clamped below at ``eps``."""
    p, q = as_tensor(p), as_tensor(q)
    if p.shape != q.shape:
        raise InvalidArgumentError(f"kl length mismatch {p.shape} vs {q.shape}")
    return sum(kl_terms(p, q, eps))


# ------------------------------------------------------------------ gradients


def gradient(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Adjoints of a scalar ``loss`` for each named parameter.

    Parameters the loss does not depend on get zero arrays. A tape can be
    replayed only once.
    """
    if loss.size != 1:
        raise InvalidArgumentError(f"gradient needs a scalar loss, got shape {loss.shape}")
    tape = loss.tape
    if tape is None:
        return {k: np.zeros_like(p.data) for k, p in params.items()}
    if tape.consumed:
        raise InvalidStateError("tape already replayed; record the loss again")
    tape.consumed = True
    adj = {id(loss): np.ones_like(loss.data)}
    for i in range(len(tape.nodes) - 1, -1, -1):
        _, out, inputs, backward = tape.nodes[i]
        g = adj.pop(id(out), None)
        if g is None:
            continue
        tape.replay_order.append(i)
        for inp, gi in zip(inputs, backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in adj:
                adj[key] = adj[key] + gi
            else:
                adj[key] = gi
    return {k: adj.get(id(p), np.zeros_like(p.data)).reshape(p.shape) for k, p in params.items()}


def numerical_gradient(fn: Callable[[], float], arr: np.ndarray, step=1e-4) -> np.ndarray:
    """Central finite differences of ``fn`` with respect to ``arr`` (mutated in place, restored)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = fn()
        flat[i] = orig - step
        fm = fn()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return grad
