"""Dense float64 tensors with tape-based reverse-mode differentiation.

A forward pass builds a DAG of :class:`Tensor` nodes; each non-leaf keeps its
parents and a closure mapping the upstream gradient to parent gradients.
Graphs are never reused: every forward pass builds a fresh one, and any
number of backward passes may start from different scalar roots of the same
graph (:func:`grad` does not touch ``.grad``; :func:`backward` does).

Only tensors that (transitively) depend on a ``requires_grad`` leaf record
anything, so evaluating a model on constant inputs costs no bookkeeping.
"""
from __future__ import annotations

import numpy as np

from praf import kernels as _k
from praf.errors import ContractError, DegenerateVectorError, DimensionError

COSINE_EPS = 1e-12


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_ufunc__ = None  # make ndarray <op> Tensor dispatch to Tensor

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._backward = _backward
        self.op = op

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
    def is_leaf(self):
        return not self._parents

    def item(self):
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __truediv__(self, other):
        if not np.isscalar(other):
            raise ContractError("only division by a scalar is supported")
        return scalar_mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward, op):
    """Wrap an op result, recording the node only if some parent needs grad."""
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward, op)
    return Tensor(data, op=op)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    ndiff = g.ndim - len(shape)
    if ndiff:
        g = g.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------------------
# elementary ops
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)), "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul")


def scalar_mul(a, c):
    a = as_tensor(a)
    c = float(c)
    return _make(a.data * c, (a,), lambda g: (g * c,), "scalar_mul")


def matmul(a, b):
    """Matrix product of 2-D operands, or batched over identical leading dims."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def backward(g):
        return g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g

    return _make(ad @ bd, (a, b), backward, "matmul")


def reshape(a, shape):
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    src = a.shape
    return _make(out, (a,), lambda g: (g.reshape(src),), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def getitem(a, index):
    """Basic slicing or integer-array gather; the backward scatters with add."""
    a = as_tensor(a)
    src = a.shape
    parts = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(p, (np.ndarray, list)) for p in parts)

    def backward(g):
        out = np.zeros(src)
        if fancy:
            np.add.at(out, index, g)
        else:
            out[index] = g
        return (out,)

    return _make(a.data[index], (a,), backward, "getitem")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {exc}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    src = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scalar_mul(sum_(a, axis, keepdims), 1.0 / count)


def mean_over_axis(a, axis):
    return mean(a, axis)


def _rows(x):
    return x.reshape(-1, x.shape[-1])


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalise over the last axis, then apply the affine ``gamma``/``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: affine params must have shape ({d},)")
    y, xhat, rstd = _k.layer_norm_forward(_rows(x.data), gamma.data, beta.data, eps)
    src = x.shape
    gd = gamma.data

    def backward(g):
        dx, dgamma, dbeta = _k.layer_norm_backward(_rows(g), xhat, rstd, gd)
        return dx.reshape(src), dgamma, dbeta

    return _make(y.reshape(src), (x, gamma, beta), backward, "layer_norm")


def gelu(x):
    """GELU, tanh approximation."""
    x = as_tensor(x)
    xd = x.data
    src = x.shape
    return _make(_k.gelu_forward(_rows(xd)).reshape(src), (x,),
                 lambda g: (_k.gelu_backward(_rows(xd), _rows(g)).reshape(src),), "gelu")


def softmax(x):
    """Softmax over the last axis."""
    x = as_tensor(x)
    src = x.shape
    y = _k.softmax_forward(_rows(x.data))
    return _make(y.reshape(src), (x,),
                 lambda g: (_k.softmax_backward(y, _rows(g)).reshape(src),), "softmax")


def cosine_rows(u, v):
    """Cosine similarity along the last axis; returns one value per row.

    Raises :class:`DegenerateVectorError` when any row norm is below 1e-12.
    Where a row of ``u`` is bitwise equal to the row of ``v`` the gradient is
    exactly zero (cosine is at its maximum there).
    """
    u, v = as_tensor(u), as_tensor(v)
    if u.shape != v.shape:
        raise DimensionError(f"cosine: shape mismatch {u.shape} vs {v.shape}")
    if u.ndim == 0:
        raise DimensionError("cosine: operands must be vectors")
    ud, vd = u.data, v.data
    nu = np.sqrt((ud * ud).sum(axis=-1))
    nv = np.sqrt((vd * vd).sum(axis=-1))
    if np.any(nu < COSINE_EPS) or np.any(nv < COSINE_EPS):
        raise DegenerateVectorError("cosine similarity of a zero-norm vector")
    dot = (ud * vd).sum(axis=-1)
    c = dot / (nu * nv)

    def backward(g):
        g = g[..., None]
        nu_, nv_, c_ = nu[..., None], nv[..., None], c[..., None]
        du = g * (vd / (nu_ * nv_) - c_ * ud / (nu_ * nu_))
        dv = g * (ud / (nu_ * nv_) - c_ * vd / (nv_ * nv_))
        same = np.all(ud == vd, axis=-1)
        if same.any():
            du[same] = 0.0
            dv[same] = 0.0
        return du, dv

    return _make(c, (u, v), backward, "cosine")


def cosine_similarity(u, v):
    """Scalar cosine similarity of two equal-length vectors."""
    u, v = as_tensor(u), as_tensor(v)
    if u.ndim != 1 or v.ndim != 1:
        raise DimensionError(f"cosine_similarity expects vectors, got {u.shape} and {v.shape}")
    return cosine_rows(u, v)


# ---------------------------------------------------------------------------
# tape and backward
# ---------------------------------------------------------------------------

class Tape:
    """Nodes reachable from ``root`` in topological order (inputs first)."""

    def __init__(self, root):
        self.root = root
        self.nodes = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

    def __len__(self):
        return len(self.nodes)

    def run(self):
        """Propagate d(root)/d(node) for every node; returns {id(node): grad}."""
        grads = {id(self.root): np.ones(self.root.shape)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node)) if node._parents else grads.get(id(node))
            if g is None or not node._parents:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if not parent.requires_grad or pg is None:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        return grads


def _check_scalar(loss):
    if not isinstance(loss, Tensor) or loss.size != 1:
        shape = getattr(loss, "shape", None)
        raise ContractError(f"backward needs a scalar loss, got shape {shape}")


def grad(loss, wrt):
    """Gradients of scalar ``loss`` w.r.t. each tensor in ``wrt``.

    Leaves' ``.grad`` fields are left untouched, so this may be called
    repeatedly on different roots of one forward graph.
    """
    _check_scalar(loss)
    single = isinstance(wrt, Tensor)
    targets = [wrt] if single else list(wrt)
    if not loss.requires_grad:
        out = [np.zeros(t.shape) for t in targets]
    else:
        table = Tape(loss).run()
        out = [table.get(id(t), np.zeros(t.shape)) for t in targets]
    return out[0] if single else out


def backward(loss):
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires_grad leaf."""
    _check_scalar(loss)
    if not loss.requires_grad:
        return
    tape = Tape(loss)
    table = tape.run()
    for node in tape.nodes:
        if node.is_leaf:
            g = table.get(id(node))
            if g is None:
                continue
            node.grad = g.copy() if node.grad is None else node.grad + g
