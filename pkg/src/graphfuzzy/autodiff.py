"""A small reverse-mode differentiation engine over dense float64 matrices.

Every operation returns a :class:`Value` that remembers its parents and a
closure mapping the output gradient to one gradient per parent. Calling
:meth:`Value.backward` on a 1x1 result walks the graph in reverse
topological order. Gradients of leaves accumulate across calls until
:meth:`Value.zero_grad` is called.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Value", "Parameter", "as_value",
    "matmul", "sparse_dense_matmul", "add", "add_row_broadcast", "sub", "mul",
    "scale_rows", "relu", "leaky_relu", "exp", "log", "sqrt", "row_softmax", "log_softmax",
    "masked_row_softmax", "segment_sum", "segment_softmax", "gather_rows",
    "slice_rows", "sum", "scale", "frobenius_norm_sq",
]


class Value:
    """A node of the computation graph holding a 2-D float64 array."""

    __slots__ = ("data", "grad", "parents", "op", "requires_grad", "name", "_vjp", "_needs", "info")

    def __init__(self, data, requires_grad=False, name=None, parents=(), op="leaf", vjp=None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 0:
            data = data.reshape(1, 1)
        elif data.ndim == 1:
            data = data.reshape(-1, 1)
        self.data = data
        self.grad = np.zeros_like(data)
        self.parents = tuple(parents)
        self.op = op
        self.requires_grad = requires_grad
        self.name = name
        self._vjp = vjp
        self._needs = requires_grad or any(p._needs for p in self.parents)
        self.info = {}

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"<Value{tag} op={self.op} shape={self.shape}>"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        """Populate ``grad`` on every leaf reachable from this scalar."""
        if self.data.shape != (1, 1):
            raise ValueError(f"backward needs a 1x1 value, got shape {self.data.shape}")
        order = _toposort(self)
        grads = {id(self): np.ones((1, 1))}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node.parents:
                node.grad = node.grad + g
                continue
            node.grad = g
            for parent, pg in zip(node.parents, node._vjp(g)):
                if pg is None or not parent._needs:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


class Parameter(Value):
    """A trainable leaf."""

    __slots__ = ()

    def __init__(self, data, name):
        super().__init__(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _toposort(root):
    order, seen = [], set()
    stack = [(root, False)]
    on_path = set()
    while stack:
        node, done = stack.pop()
        if done:
            on_path.discard(id(node))
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        on_path.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            assert id(p) not in on_path, "cycle in computation graph"
            if id(p) not in seen and p._needs:
                stack.append((p, False))
    return order


def as_value(x) -> Value:
    return x if isinstance(x, Value) else Value(x)


def _check_same(a, b, op):
    if a.shape != b.shape:
        raise ValueError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------


def matmul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    A, B = a.data, b.data
    return Value(A @ B, parents=(a, b), op="matmul",
                 vjp=lambda g: (g @ B.T, A.T @ g))


def sparse_dense_matmul(S, x) -> Value:
    """Product of a constant sparse matrix and a dense value."""
    x = as_value(x)
    S = sp.csr_matrix(S)
    if S.shape[1] != x.shape[0]:
        raise ValueError(f"sparse_dense_matmul: shape mismatch {S.shape} @ {x.shape}")
    St = S.T.tocsr()
    return Value(S @ x.data, parents=(x,), op="spmm",
                 vjp=lambda g: (St @ g,))


def add(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_same(a, b, "add")
    return Value(a.data + b.data, parents=(a, b), op="add", vjp=lambda g: (g, g))


def sub(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_same(a, b, "sub")
    return Value(a.data - b.data, parents=(a, b), op="sub", vjp=lambda g: (g, -g))


def add_row_broadcast(x, b) -> Value:
    """``x + b`` with ``b`` a 1 x d row added to every row of ``x``."""
    x, b = as_value(x), as_value(b)
    if b.shape != (1, x.shape[1]):
        raise ValueError(f"add_row_broadcast: bias shape {b.shape} for input {x.shape}")
    return Value(x.data + b.data, parents=(x, b), op="add_row",
                 vjp=lambda g: (g, g.sum(axis=0, keepdims=True)))


def mul(a, b) -> Value:
    a, b = as_value(a), as_value(b)
    _check_same(a, b, "mul")
    A, B = a.data, b.data
    return Value(A * B, parents=(a, b), op="mul", vjp=lambda g: (g * B, g * A))


def scale_rows(x, w) -> Value:
    """Row ``i`` of ``x`` times scalar ``w[i]`` (``w`` is n x 1)."""
    x, w = as_value(x), as_value(w)
    if w.shape != (x.shape[0], 1):
        raise ValueError(f"scale_rows: weights shape {w.shape} for input {x.shape}")
    X, W = x.data, w.data
    return Value(X * W, parents=(x, w), op="scale_rows",
                 vjp=lambda g: (g * W, (g * X).sum(axis=1, keepdims=True)))


def scale(x, c: float) -> Value:
    x = as_value(x)
    c = float(c)
    return Value(c * x.data, parents=(x,), op="scale", vjp=lambda g: (c * g,))


def sum(x) -> Value:  # noqa: A001 - mirrors numpy naming
    x = as_value(x)
    shape = x.shape
    return Value(x.data.sum(), parents=(x,), op="sum",
                 vjp=lambda g: (np.full(shape, g.item()),))


def frobenius_norm_sq(x) -> Value:
    x = as_value(x)
    X = x.data
    return Value(np.sum(X * X), parents=(x,), op="fro2",
                 vjp=lambda g: (2.0 * g.item() * X,))


# --------------------------------------------------------------------------
# elementwise nonlinearities
# --------------------------------------------------------------------------


def relu(x) -> Value:
    x = as_value(x)
    mask = x.data > 0
    return Value(np.where(mask, x.data, 0.0), parents=(x,), op="relu",
                 vjp=lambda g: (g * mask,))


def leaky_relu(x, slope: float = 0.2) -> Value:
    x = as_value(x)
    d = np.where(x.data > 0, 1.0, slope)
    return Value(x.data * d, parents=(x,), op="leaky_relu", vjp=lambda g: (g * d,))


def exp(x) -> Value:
    x = as_value(x)
    y = np.exp(x.data)
    return Value(y, parents=(x,), op="exp", vjp=lambda g: (g * y,))


def log(x, floor: float | None = None) -> Value:
    """Natural log; with ``floor`` inputs below it are clamped (zero gradient
    there) and the number of clamped entries is kept in ``info['clamped']``."""
    x = as_value(x)
    X = x.data
    if floor is None:
        keep = np.ones_like(X, dtype=bool)
        Xc = X
    else:
        keep = X > floor
        Xc = np.where(keep, X, floor)
    out = Value(np.log(Xc), parents=(x,), op="log", vjp=lambda g: (np.where(keep, g / Xc, 0.0),))
    out.info["clamped"] = int((~keep).sum())
    return out


def sqrt(x) -> Value:
    x = as_value(x)
    y = np.sqrt(x.data)
    return Value(y, parents=(x,), op="sqrt", vjp=lambda g: (g / (2.0 * y),))


# --------------------------------------------------------------------------
# softmax and segment operations
# --------------------------------------------------------------------------


def _softmax_vjp(s):
    return lambda g: (s * (g - (g * s).sum(axis=1, keepdims=True)),)


def row_softmax(x) -> Value:
    x = as_value(x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=1, keepdims=True)
    return Value(s, parents=(x,), op="softmax", vjp=_softmax_vjp(s))


def log_softmax(x) -> Value:
    """Row-wise ``x - logsumexp(x)``; finite even where softmax underflows."""
    x = as_value(x)
    z = x.data - x.data.max(axis=1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    s = np.exp(out)
    return Value(out, parents=(x,), op="log_softmax",
                 vjp=lambda g: (g - s * g.sum(axis=1, keepdims=True),))


def masked_row_softmax(x, mask) -> Value:
    """Softmax of each row over the entries where ``mask`` is True; zero elsewhere."""
    x = as_value(x)
    mask = np.asarray(mask, dtype=bool)
    _check_same(x, Value(mask.astype(float)), "masked_row_softmax")
    if not np.all(mask.any(axis=1)):
        raise ValueError(f"masked_row_softmax: row {int(np.argmin(mask.any(axis=1)))} has an empty mask")
    z = np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=1, keepdims=True)
    e = np.where(mask, np.exp(z), 0.0)
    s = e / e.sum(axis=1, keepdims=True)
    return Value(s, parents=(x,), op="masked_softmax", vjp=_softmax_vjp(s))


def _segment_matrix(index, n):
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= n):
        raise ValueError(f"segment index outside [0, {n})")
    return sp.csr_matrix((np.ones(index.size), (index, np.arange(index.size))), shape=(n, index.size))


def segment_sum(x, index, num_segments: int | None = None) -> Value:
    """Row ``s`` of the result is the sum of rows of ``x`` with ``index == s``."""
    x = as_value(x)
    index = np.asarray(index, dtype=np.int64)
    if index.shape[0] != x.shape[0]:
        raise ValueError(f"segment_sum: {index.shape[0]} indices for {x.shape[0]} rows")
    n = int(index.max()) + 1 if num_segments is None else num_segments
    S = _segment_matrix(index, n)
    return Value(S @ x.data, parents=(x,), op="segment_sum", vjp=lambda g: (g[index],))


def segment_softmax(x, index, num_segments: int | None = None) -> Value:
    """Softmax of a column ``x`` (E x 1) within groups sharing ``index``."""
    x = as_value(x)
    index = np.asarray(index, dtype=np.int64)
    if x.shape[1] != 1 or index.shape[0] != x.shape[0]:
        raise ValueError(f"segment_softmax: expected an {index.shape[0]} x 1 column, got {x.shape}")
    n = int(index.max()) + 1 if num_segments is None else num_segments
    z = x.data[:, 0]
    top = np.full(n, -np.inf)
    np.maximum.at(top, index, z)
    e = np.exp(z - top[index])
    denom = np.bincount(index, weights=e, minlength=n)
    s = (e / denom[index])[:, None]

    def vjp(g):
        inner = np.bincount(index, weights=(g * s)[:, 0], minlength=n)
        return (s * (g - inner[index][:, None]),)

    return Value(s, parents=(x,), op="segment_softmax", vjp=vjp)


def gather_rows(x, index) -> Value:
    x = as_value(x)
    index = np.asarray(index, dtype=np.int64)
    n = x.shape[0]
    return Value(x.data[index], parents=(x,), op="gather",
                 vjp=lambda g: (_segment_matrix(index, n) @ g,))


def slice_rows(x, start: int, stop: int) -> Value:
    x = as_value(x)
    shape = x.shape

    def vjp(g):
        out = np.zeros(shape)
        out[start:stop] = g
        return (out,)

    return Value(x.data[start:stop], parents=(x,), op="slice", vjp=vjp)
