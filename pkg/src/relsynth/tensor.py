"""A small reverse-mode autodiff engine over float64 numpy arrays, plus AdamW.

Every operation returns a new ``Tensor`` that remembers its inputs and a
closure that pushes the output gradient back to them.  Tensors are numbered at
creation, so creation order is a valid topological order of the graph and
``backward`` just walks the reachable nodes from newest to oldest.
"""
from __future__ import annotations

import itertools

import numpy as np
import scipy.sparse as sp

_counter = itertools.count()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name", "uid")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None, name: str = ""):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name
        self.uid = next(_counter)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    # operator sugar
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

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], tuple) else shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis, keepdims)


def Parameter(data, name: str = "") -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward_fn):
    parents = tuple(p for p in parents)
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward_fn)
    return Tensor(data)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def backward(loss: Tensor, params=()) -> None:
    """Fill ``.grad`` of every tensor that ``loss`` depends on; ``params`` not reached get zeros."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    for p in params:
        p.grad = np.zeros_like(p.data)
    if not loss.requires_grad:
        return
    nodes, seen, stack = [], set(), [loss]
    while stack:
        t = stack.pop()
        if t.uid in seen or not t.requires_grad:
            continue
        seen.add(t.uid)
        nodes.append(t)
        stack.extend(t.parents)
    nodes.sort(key=lambda t: t.uid, reverse=True)
    for t in nodes:
        t.grad = None
    loss.grad = np.ones_like(loss.data)
    for t in nodes:
        if t.backward_fn is not None and t.grad is not None:
            t.backward_fn(t.grad)


# elementwise and broadcasting ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))
    return _make(a.data + b.data, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: _accumulate(a, -g))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))
    return _make(a.data * b.data, (a, b), bw)


def square(a: Tensor) -> Tensor:
    return _make(a.data ** 2, (a,), lambda g: _accumulate(a, 2.0 * a.data * g))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: _accumulate(a, g * mask))


def silu(a: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * a.data))  # overflow-free logistic

    def bw(g):
        _accumulate(a, g * (s * (1.0 + a.data * (1.0 - s))))
    return _make(a.data * s, (a,), bw)


def softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        _accumulate(a, y * (g - (g * y).sum(axis=-1, keepdims=True)))
    return _make(y, (a,), bw)


def log_softmax(a: Tensor) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def bw(g):
        _accumulate(a, g - np.exp(y) * g.sum(axis=-1, keepdims=True))
    return _make(y, (a,), bw)


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = a.shape[-1]

    def bw(g):
        _accumulate(gamma, _unbroadcast(g * xhat, gamma.shape))
        _accumulate(beta, _unbroadcast(g, beta.shape))
        if a.requires_grad:
            gx = g * gamma.data
            _accumulate(a, inv / n * (n * gx - gx.sum(-1, keepdims=True)
                                      - xhat * (gx * xhat).sum(-1, keepdims=True)))
    return _make(xhat * gamma.data + beta.data, (a, gamma, beta), bw)


# linear algebra and shape ops

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2) if b.ndim > 1 else np.multiply.outer(g, b.data)
            _accumulate(a, _unbroadcast(ga, a.shape))
        if b.requires_grad:
            if a.ndim == 1:
                gb = np.multiply.outer(a.data, g)
            else:
                gb = np.swapaxes(a.data, -1, -2) @ g
            _accumulate(b, _unbroadcast(gb, b.shape))
    return _make(a.data @ b.data, (a, b), bw)


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.data.reshape(shape), (a,), lambda g: _accumulate(a, g.reshape(a.shape)))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _make(np.transpose(a.data, axes), (a,), lambda g: _accumulate(a, np.transpose(g, inv)))


def getitem(a: Tensor, index) -> Tensor:
    """Basic slicing or integer-array gathering (gradients scatter-add back)."""
    def bw(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        _accumulate(a, full)
    return _make(a.data[index], (a,), bw)


def gather_rows(table: Tensor, idx: np.ndarray) -> Tensor:
    """Embedding lookup: ``table[idx]`` with a bincount-based scatter for the gradient."""
    idx = np.asarray(idx, dtype=np.int64)

    def bw(g):
        flat = g.reshape(-1, table.shape[-1])
        out = np.zeros_like(table.data)
        np.add.at(out, idx.ravel(), flat)
        _accumulate(table, out)
    return _make(table.data[idx], (table,), bw)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, cuts, axis=axis)):
            _accumulate(t, part)
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        for i, t in enumerate(tensors):
            _accumulate(t, np.take(g, i, axis=axis))
    return _make(np.stack([t.data for t in tensors], axis=axis), tensors, bw)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(a, np.broadcast_to(g, a.shape))
    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis, keepdims), 1.0 / max(n, 1))


def sparse_mm(adj: sp.spmatrix, x: Tensor) -> Tensor:
    """``adj @ x`` for a constant sparse matrix (used for mean aggregation over neighbours)."""
    adj = sp.csr_matrix(adj)
    adj_t = adj.T.tocsr()
    return _make(np.asarray(adj @ x.data), (x,), lambda g: _accumulate(x, np.asarray(adj_t @ g)))


def mean_adjacency(src: np.ndarray, dst: np.ndarray, n_dst: int, n_src: int) -> sp.csr_matrix:
    """Row-normalized matrix M with (M @ h_src)[v] = mean of h_src over edges src->v (zero if none)."""
    deg = np.bincount(dst, minlength=n_dst).astype(np.float64)
    w = 1.0 / deg[dst] if len(dst) else np.zeros(0)
    m = sp.csr_matrix((w, (dst, src)), shape=(n_dst, n_src))
    m.sum_duplicates()  # canonical column order, so the result does not depend on edge order
    return m


def neighbor_mean(h_src: Tensor, src: np.ndarray, dst: np.ndarray, n_dst: int) -> Tensor:
    return sparse_mm(mean_adjacency(src, dst, n_dst, h_src.shape[0]), h_src)


class AdamW:
    """Adam with decoupled weight decay: p <- p(1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps)."""

    def __init__(self, params, lr: float = 6e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-5):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.step_count += 1
        c1 = 1.0 - self.beta1 ** self.step_count
        c2 = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.data *= 1.0 - self.lr * self.weight_decay
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
