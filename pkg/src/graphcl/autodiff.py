"""Minimal reverse-mode autodiff over dense 2-D arrays.

Every value is a `Var` wrapping a numpy array of shape (rows, cols).
Operations build an implicit tape (the DAG of `Var` nodes); `backward`
replays it in reverse topological order. Only the broadcasting patterns
the embedding pipeline needs are supported: a (1, F) row vector or an
(N, 1) column vector against an (N, F) matrix, plus (1, 1) scalars.
Anything else is a shape error.
"""

import numpy as np
import scipy.sparse as sp


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class ContractError(ValueError):
    """An operation precondition was violated (non-shape)."""


class NumericError(ArithmeticError):
    """A non-finite value appeared where the contract forbids it."""


def _as2d(data):
    arr = np.asarray(data)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"only 2-D values are supported, got shape {arr.shape}")
    return arr


class Var:
    """A node on the tape: forward value plus gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = _as2d(data)
        self.grad = None
        self.requires_grad = bool(requires_grad) or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 value, got {self.data.shape}")
        return float(self.data[0, 0])

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data, dtype=g.dtype)
        self.grad += g

    def __repr__(self):
        return f"Var(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` (inverse of the broadcast in forward)."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    if out.shape != shape:
        raise ShapeError(f"cannot reduce gradient {g.shape} to {shape}")
    return out


def _check_broadcast(a, b):
    ar, ac = a.shape
    br, bc = b.shape
    if (ar == br or ar == 1 or br == 1) and (ac == bc or ac == 1 or bc == 1):
        return
    raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}")


def add(a, b):
    _check_broadcast(a, b)
    out = Var(a.data + b.data, _parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    out._backward = bwd
    return out


def mul(a, b):
    _check_broadcast(a, b)
    out = Var(a.data * b.data, _parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    out._backward = bwd
    return out


def neg(a):
    out = Var(-a.data, _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(-g)

    out._backward = bwd
    return out


def sub(a, b):
    return add(a, neg(b))


def div(a, b):
    return mul(a, reciprocal(b))


def scale(a, c):
    c = float(c)
    out = Var(a.data * c, _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * c)

    out._backward = bwd
    return out


def add_const(a, c):
    out = Var(a.data + c, _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)

    out._backward = bwd
    return out


def reciprocal(a):
    val = 1.0 / a.data
    out = Var(val, _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(-g * val * val)

    out._backward = bwd
    return out


def sqrt(a):
    val = np.sqrt(a.data)
    out = Var(val, _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * 0.5 / val)

    out._backward = bwd
    return out


def exp(a):
    val = np.exp(a.data)
    out = Var(val, _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * val)

    out._backward = bwd
    return out


def log(a):
    out = Var(np.log(a.data), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    out._backward = bwd
    return out


def matmul(a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    out = Var(a.data @ b.data, _parents=(a, b))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    out._backward = bwd
    return out


def spmm(adj, x):
    """Sparse @ dense. The sparse operand is a constant (no gradient)."""
    if not sp.issparse(adj):
        raise ShapeError("spmm expects a scipy sparse matrix as the left operand")
    if adj.shape[1] != x.shape[0]:
        raise ShapeError(f"spmm: {adj.shape} @ {x.shape}")
    adj = adj.tocsr()
    out = Var(adj @ x.data, _parents=(x,))

    def bwd(g):
        if x.requires_grad:
            x._accumulate(adj.T @ g)

    out._backward = bwd
    return out


def transpose(a):
    out = Var(a.data.T, _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g.T)

    out._backward = bwd
    return out


def relu(a):
    mask = a.data > 0
    out = Var(np.where(mask, a.data, 0.0), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    out._backward = bwd
    return out


def elu(a):
    pos = a.data > 0
    ex = np.exp(np.minimum(a.data, 0.0))
    out = Var(np.where(pos, a.data, ex - 1.0), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * np.where(pos, 1.0, ex))

    out._backward = bwd
    return out


def prelu(a, slope):
    """PReLU with a learnable 1x1 slope shared across the matrix."""
    if slope.shape != (1, 1):
        raise ShapeError("prelu slope must be 1x1")
    pos = a.data > 0
    s = slope.data[0, 0]
    out = Var(np.where(pos, a.data, s * a.data), _parents=(a, slope))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * np.where(pos, 1.0, s))
        if slope.requires_grad:
            slope._accumulate(np.array([[np.sum(g * np.where(pos, 0.0, a.data))]]))

    out._backward = bwd
    return out


def activation(kind, x, slope=None):
    """Dispatch on activation name; prelu needs its slope parameter."""
    if kind == "relu":
        return relu(x)
    if kind == "elu":
        return elu(x)
    if kind == "prelu":
        if slope is None:
            raise ContractError("prelu requires a slope parameter on the tape")
        return prelu(x, slope)
    raise ContractError(f"unknown activation {kind!r}")


def clip_min(a, c):
    """max(a, c) elementwise; gradient passes only where a > c."""
    mask = a.data > c
    out = Var(np.where(mask, a.data, c), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * mask)

    out._backward = bwd
    return out


def sum_all(a):
    out = Var(np.array([[a.data.sum()]]), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(np.full_like(a.data, g[0, 0]))

    out._backward = bwd
    return out


def row_sum(a):
    out = Var(a.data.sum(axis=1, keepdims=True), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g, a.shape).copy())

    out._backward = bwd
    return out


def col_sum(a):
    out = Var(a.data.sum(axis=0, keepdims=True), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            a._accumulate(np.broadcast_to(g, a.shape).copy())

    out._backward = bwd
    return out


def col_mean(a):
    return scale(col_sum(a), 1.0 / a.shape[0])


def take_rows(a, idx):
    idx = np.asarray(idx, dtype=np.int64)
    out = Var(a.data[idx], _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.add.at(buf, idx, g)
            a._accumulate(buf)

    out._backward = bwd
    return out


def concat_cols(a, b):
    if a.shape[0] != b.shape[0]:
        raise ShapeError(f"concat_cols: {a.shape} vs {b.shape}")
    out = Var(np.concatenate([a.data, b.data], axis=1), _parents=(a, b))
    na = a.shape[1]

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g[:, :na])
        if b.requires_grad:
            b._accumulate(g[:, na:])

    out._backward = bwd
    return out


def diag_part(a):
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"diag_part needs a square matrix, got {a.shape}")
    n = a.shape[0]
    out = Var(np.diag(a.data).reshape(n, 1), _parents=(a,))

    def bwd(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            np.fill_diagonal(buf, g[:, 0])
            a._accumulate(buf)

    out._backward = bwd
    return out


def logsumexp_rows(a, exclude=None):
    """Row-wise log-sum-exp with max subtraction; `exclude` masks entries out."""
    x = a.data
    if exclude is not None:
        exclude = np.asarray(exclude, dtype=bool)
        if exclude.shape != x.shape:
            raise ShapeError("exclude mask shape mismatch")
        x = np.where(exclude, -np.inf, x)
    m = np.max(x, axis=1, keepdims=True)
    ex = np.exp(x - m)
    s = ex.sum(axis=1, keepdims=True)
    out = Var(m + np.log(s), _parents=(a,))
    softmax = ex / s

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * softmax)

    out._backward = bwd
    return out


def column_moments(a):
    """Per-column population mean and variance, both differentiable.

    Requires at least two rows; a single row has no meaningful spread.
    """
    if a.shape[0] < 2:
        raise ContractError(f"column_moments needs >= 2 rows, got {a.shape[0]}")
    means = col_mean(a)
    centered = sub(a, means)
    variances = col_mean(mul(centered, centered))
    return means, variances


def row_normalize(a, eps=1e-12):
    """Divide each row by max(its L2 norm, eps); zero rows stay ~zero."""
    # clip before the sqrt so its backward never divides by zero
    norms = sqrt(clip_min(row_sum(mul(a, a)), eps * eps))
    return mul(a, reciprocal(norms))


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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, params=None):
    """Run the reverse pass from a scalar loss.

    Returns a dict mapping each Var in `params` to its gradient; parameters
    with no path to the loss get an exact zero gradient.
    """
    if loss.shape != (1, 1):
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topo_order(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
    if params is None:
        return {}
    return {
        id(p): (p.grad if p.grad is not None else np.zeros_like(p.data))
        for p in params
    }


def zero_grads(root):
    for node in _topo_order(root):
        node.grad = None


def grad_check(build_loss, params, h=1e-5):
    """Compare reverse-mode gradients against central differences.

    `build_loss` maps the list of parameter Vars to a scalar loss Var; it is
    re-invoked for every probe so the tape is rebuilt each time. Returns the
    worst relative error over all parameter entries, with an absolute floor
    of 1e-8 in the denominator.
    """
    loss = build_loss(params)
    if not np.isfinite(loss.item()):
        raise NumericError("non-finite forward value in grad_check")
    grads = backward(loss, params)
    worst = 0.0
    for p in params:
        analytic = grads[id(p)]
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = build_loss(params).item()
            flat[i] = orig - h
            fm = build_loss(params).item()
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic.reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
