"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Only the operations the encoders, belief updater and scorer need are here.
Broadcasting follows numpy; gradients are summed back to operand shapes.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_GRAD_ENABLED = True
_DTYPE = np.float64


@contextlib.contextmanager
def precision(dtype):
    """Build every new tensor in ``dtype``; grad_check uses this for a wider oracle."""
    global _DTYPE
    prev = _DTYPE
    _DTYPE = np.dtype(dtype).type
    try:
        yield
    finally:
        _DTYPE = prev


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class NonFiniteGradient(ArithmeticError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self.name = name

    # -- graph plumbing -------------------------------------------------
    @staticmethod
    def _make(data, parents: Sequence["Tensor"], backward) -> "Tensor":
        out = Tensor(data)
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar")
            grad = np.ones_like(self.data)
        order = _topo(self)
        self.grad = np.asarray(grad, dtype=np.float64) + (0.0 if self.grad is None else self.grad)
        owned = {id(self)}  # nodes whose grad buffer is private and may be updated in place
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for p, g in zip(node._parents, grads):
                if g is None or not p.requires_grad:
                    continue
                if isinstance(g, _RowGrad):
                    if p.grad is None:
                        p.grad = np.zeros(p.data.shape)
                    elif id(p) not in owned:
                        p.grad = p.grad.copy()
                    np.add.at(p.grad, g.rows, g.values)
                    owned.add(id(p))
                    continue
                g = _unbroadcast(g, p.data.shape)
                if p.grad is None:
                    p.grad = g
                elif id(p) in owned:
                    p.grad += g
                else:
                    p.grad = p.grad + g
                    owned.add(id(p))
            if node._parents:
                node.grad = None  # free intermediate buffers

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- properties -------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape})"

    def __len__(self) -> int:
        return len(self.data)

    # -- operators ----------------------------------------------------------
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

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / np.asarray(other, dtype=_DTYPE))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(as_tensor(other), self)

    def __pow__(self, p: float):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _topo(root: Tensor) -> list[Tensor]:
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


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g.reshape(shape)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


# -- elementwise --------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._make(a.data + b.data, (a, b), lambda g: (g, g))


def neg(a: Tensor) -> Tensor:
    return Tensor._make(-a.data, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return Tensor._make(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def power(a: Tensor, p: float) -> Tensor:
    return Tensor._make(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return Tensor._make(out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return Tensor._make(np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return Tensor._make(out, (a,), lambda g: (g * (1.0 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor._make(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    pos = a.data > 0
    return Tensor._make(np.where(pos, a.data, 0.0), (a,), lambda g: (g * pos,))


# -- linear algebra and shape ------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data

    def backward(g):
        if ad.ndim == 1 and bd.ndim == 1:
            return g * bd, g * ad
        if ad.ndim == 1:
            return g @ np.swapaxes(bd, -1, -2), np.outer(ad, g) if bd.ndim == 2 else ad[:, None] * g[..., None, :]
        if bd.ndim == 1:
            ga = g[..., :, None] * bd
            gb = np.swapaxes(ad, -1, -2) @ g
            return ga, gb
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return Tensor._make(ad @ bd, (a, b), backward)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return Tensor._make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a: Tensor, shape) -> Tensor:
    src = a.data.shape
    return Tensor._make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = a.data.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return Tensor._make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.data.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


class _RowGrad:
    """Sparse gradient: ``values`` scattered into ``rows`` of the operand."""

    __slots__ = ("rows", "values")

    def __init__(self, rows, values):
        self.rows, self.values = rows, values


def getitem(a: Tensor, idx) -> Tensor:
    src = a.data.shape
    if isinstance(idx, np.ndarray) and idx.dtype.kind in "iu" and idx.ndim == 1:
        return Tensor._make(a.data[idx], (a,), lambda g: (_RowGrad(idx, g),))

    def backward(g):
        out = np.zeros(src)
        np.add.at(out, idx, g)
        return (out,)

    return Tensor._make(a.data[idx], (a,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                        lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    n = len(tensors)
    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tensors,
                        lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


def broadcast_to(a: Tensor, shape) -> Tensor:
    return Tensor._make(np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (g,))


# -- composite ----------------------------------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (a,), backward)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def backward(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return Tensor._make(out, (a,), backward)


def cross_entropy(logits: Tensor, target: int) -> Tensor:
    """Negative log-likelihood of ``target`` under softmax(logits) for a 1-D logit vector."""
    return -log_softmax(logits)[target]


# -- gradient checking --------------------------------------------------------

def grad_check(parameters: Iterable[Tensor], loss_fn: Callable[[], Tensor], n_samples: int = 100,
               eps: float = 1e-5, seed: int = 0, return_details: bool = False, oracle_dtype=np.float64,
               nonzero_only: bool = False):
    """Max relative error between analytic and central-difference gradients.

    Samples ``n_samples`` scalar coordinates across ``parameters`` (uniform over
    all coordinates, or over those with a nonzero analytic gradient when
    ``nonzero_only`` is set, which helps for sparse tables like embeddings).  Relative error is
    ``|analytic - fd| / max(|analytic|, |fd|, 1e-8)``.  The analytic gradient is
    always float64; ``oracle_dtype`` (e.g. ``np.longdouble``) evaluates the
    finite differences in wider arithmetic so that tiny gradients are not
    swamped by float64 rounding in the loss.
    """
    params = list(parameters)
    for p in params:
        p.grad = None
    loss = loss_fn()
    if loss.data.size != 1:
        raise ValueError("loss must be scalar")
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for a in analytic:
        if not np.all(np.isfinite(a)):
            raise NonFiniteGradient("analytic gradient is not finite")
    sizes = np.array([p.data.size for p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    if nonzero_only:
        pool = np.flatnonzero(np.concatenate([a.reshape(-1) for a in analytic]))
        picks = rng.choice(pool, size=min(n_samples, pool.size), replace=False)
    else:
        picks = rng.choice(total, size=min(n_samples, total), replace=False)
    worst = 0.0
    details = []
    originals = [p.data for p in params]
    wide = np.dtype(oracle_dtype) != np.dtype(np.float64)
    try:
        with no_grad(), precision(oracle_dtype):
            if wide:
                for p in params:
                    p.data = p.data.astype(oracle_dtype)
            for flat in picks:
                k = int(np.searchsorted(offsets, flat, side="right") - 1)
                i = int(flat - offsets[k])
                view = params[k].data.reshape(-1)
                orig = view[i]
                view[i] = orig + eps
                up = loss_fn().data.reshape(-1)[0]
                view[i] = orig - eps
                down = loss_fn().data.reshape(-1)[0]
                view[i] = orig
                fd = float((up - down) / (2 * eps))
                an = float(analytic[k].reshape(-1)[i])
                if not (np.isfinite(fd) and np.isfinite(an)):
                    raise NonFiniteGradient(f"parameter {k}[{i}]")
                rel = abs(an - fd) / max(abs(an), abs(fd), 1e-8)
                worst = max(worst, rel)
                details.append((k, i, an, fd, rel))
    finally:
        for p, orig in zip(params, originals):
            p.data = orig
            p.grad = None
    if return_details:
        return worst, details
    return worst
