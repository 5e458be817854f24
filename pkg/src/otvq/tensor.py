"""Reverse-mode autodiff on small dense float64 arrays.

A dynamic tape: every primitive allocates a fresh immutable Tensor and, when
any input participates in a graph, records its parents plus a VJP closure.
backward() walks the tape once and returns gradients for the requires_grad
leaves. Everything is float64; any non-finite value produced by a primitive
raises immediately instead of propagating NaNs into a training run.

The primitive set is deliberately small: exactly what an encoder/decoder MLP,
a vector-quantization bottleneck, and an entropic semi-dual objective need.
No views, no in-place ops, no dtype zoo.
"""

from __future__ import annotations

import itertools

import numpy as np

__all__ = [
    "Tensor",
    "GradientMap",
    "ShapeError",
    "NonFiniteError",
    "apply_primitive",
    "backward",
    "add",
    "subtract",
    "multiply",
    "matmul",
    "square",
    "relu",
    "exp",
    "log",
    "xlogx",
    "tsum",
    "tmean",
    "softmax",
    "logsumexp",
    "pairwise_sq_dist",
    "detach",
    "index_select",
    "reshape",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested primitive."""


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf (or one was fed in as a leaf)."""


_node_ids = itertools.count()


class Tensor:
    """Immutable float64 array with an optional autodiff graph handle.

    Leaves are built directly (requires_grad marks them as trainable);
    interior nodes come out of primitives and carry parents plus a VJP
    closure. Values are exposed as a read-only numpy array.
    """

    __slots__ = ("values", "requires_grad", "node_id", "_parents", "_vjp")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("non-finite values in tensor leaf")
        arr.setflags(write=False)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.node_id = next(_node_ids)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @classmethod
    def _from_op(cls, arr: np.ndarray, op: str, parents, vjp) -> "Tensor":
        # internal: arr is freshly allocated by the primitive, no copy needed
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"non-finite values produced by '{op}'")
        out = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)  # keeps 0-d as 0-d only on this branch
        arr.setflags(write=False)
        out.values = arr
        out.node_id = next(_node_ids)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # --- operator sugar; scalars are wrapped as constant leaves ---

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return subtract(self, _wrap(other))

    def __rsub__(self, other):
        return subtract(_wrap(other), self)

    def __mul__(self, other):
        return multiply(self, _wrap(other))

    def __rmul__(self, other):
        return multiply(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __neg__(self):
        return multiply(self, _wrap(-1.0))

    def sum(self):
        return tsum(self)

    def mean(self):
        return tmean(self)

    def square(self):
        return square(self)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def softmax(self):
        return softmax(self)

    def logsumexp(self):
        return logsumexp(self)

    def detach(self):
        return detach(self)

    def reshape(self, shape):
        return reshape(self, shape)


def _wrap(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("add", a, b)
    out = a.values + b.values

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(out, "add", (a, b), vjp)


def subtract(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("subtract", a, b)
    out = a.values - b.values

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._from_op(out, "subtract", (a, b), vjp)


def multiply(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast("multiply", a, b)
    out = a.values * b.values

    def vjp(g):
        return (
            _unbroadcast(g * b.values, a.shape),
            _unbroadcast(g * a.values, b.shape),
        )

    return Tensor._from_op(out, "multiply", (a, b), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dims disagree, {a.shape} @ {b.shape}")
    out = a.values @ b.values

    def vjp(g):
        return g @ b.values.T, a.values.T @ g

    return Tensor._from_op(out, "matmul", (a, b), vjp)


def square(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = a.values * a.values

    def vjp(g):
        return (2.0 * a.values * g,)

    return Tensor._from_op(out, "square", (a,), vjp)


def relu(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = np.maximum(a.values, 0.0)

    def vjp(g):
        return (np.where(a.values > 0.0, g, 0.0),)

    return Tensor._from_op(out, "relu", (a,), vjp)


def exp(a: Tensor) -> Tensor:
    a = _wrap(a)
    out = np.exp(a.values)

    def vjp(g):
        return (out * g,)

    return Tensor._from_op(out, "exp", (a,), vjp)


def log(a: Tensor) -> Tensor:
    a = _wrap(a)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.values)

    def vjp(g):
        return (g / a.values,)

    return Tensor._from_op(out, "log", (a,), vjp)


def xlogx(a: Tensor) -> Tensor:
    """Elementwise x*log(x) with the 0 -> 0 convention.

    Exists so KL-style sums accept exact zeros (one-hot mass vectors).
    Gradient at x == 0 is defined as 0; away from zero it is log(x) + 1.
    """
    a = _wrap(a)
    if np.any(a.values < 0.0):
        raise NonFiniteError("xlogx: negative input")
    pos = a.values > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(pos, a.values * np.log(np.where(pos, a.values, 1.0)), 0.0)

    def vjp(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(pos, np.log(np.where(pos, a.values, 1.0)) + 1.0, 0.0)
        return (g * d,)

    return Tensor._from_op(out, "xlogx", (a,), vjp)


def tsum(a: Tensor) -> Tensor:
    """Sum of all elements, returning a scalar (shape ())."""
    a = _wrap(a)
    out = np.asarray(a.values.sum())

    def vjp(g):
        return (np.broadcast_to(g, a.shape).copy(),)

    return Tensor._from_op(out, "sum", (a,), vjp)


def tmean(a: Tensor) -> Tensor:
    """Mean of all elements, returning a scalar (shape ())."""
    a = _wrap(a)
    if a.size == 0:
        raise ShapeError("mean: empty tensor")
    out = np.asarray(a.values.mean())
    inv = 1.0 / a.size

    def vjp(g):
        return (np.broadcast_to(g * inv, a.shape).copy(),)

    return Tensor._from_op(out, "mean", (a,), vjp)


def softmax(a: Tensor) -> Tensor:
    """Softmax over the last axis."""
    a = _wrap(a)
    if a.values.ndim == 0:
        raise ShapeError("softmax: needs at least 1-D input")
    shifted = a.values - a.values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return Tensor._from_op(out, "softmax", (a,), vjp)


def logsumexp(a: Tensor) -> Tensor:
    """log(sum(exp(x))) over the last axis, max-stabilized.

    Rows of all -inf are rejected by the finite check; single -inf entries
    (log of an exact-zero weight) pass through as exp(-inf) = 0 terms.
    """
    a = _wrap(a)
    if a.values.ndim == 0:
        raise ShapeError("logsumexp: needs at least 1-D input")
    m = a.values.max(axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a.values - m)
    s = e.sum(axis=-1, keepdims=True)
    out = (np.log(s) + m).squeeze(-1)

    def vjp(g):
        return (e / s * np.expand_dims(g, -1),)

    return Tensor._from_op(out, "logsumexp", (a,), vjp)


def pairwise_sq_dist(a: Tensor, b: Tensor) -> Tensor:
    """All-pairs squared Euclidean distances, (n,d) x (k,d) -> (n,k).

    Computed via the expanded form |u|^2 + |v|^2 - 2 u.v with a clamp at
    zero for round-off; the gradient uses the exact expansion (the clamp
    only ever bites where the true gradient vanishes anyway).
    """
    a, b = _wrap(a), _wrap(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"pairwise_sq_dist: expects (n,d),(k,d); got {a.shape},{b.shape}")
    an = (a.values * a.values).sum(axis=1)
    bn = (b.values * b.values).sum(axis=1)
    out = np.maximum(an[:, None] + bn[None, :] - 2.0 * (a.values @ b.values.T), 0.0)

    def vjp(g):
        ga = 2.0 * (g.sum(axis=1, keepdims=True) * a.values - g @ b.values)
        gb = 2.0 * (g.sum(axis=0)[:, None] * b.values - g.T @ a.values)
        return ga, gb

    return Tensor._from_op(out, "pairwise_sq_dist", (a, b), vjp)


def detach(a: Tensor) -> Tensor:
    """Copy values and sever the graph: gradients never flow past this."""
    a = _wrap(a)
    out = Tensor.__new__(Tensor)
    arr = a.values.copy()
    arr.setflags(write=False)
    out.values = arr
    out.requires_grad = False
    out.node_id = next(_node_ids)
    out._parents = ()
    out._vjp = None
    return out


def index_select(table: Tensor, indices) -> Tensor:
    """Gather rows of a 2-D table; output shape indices.shape + (d,).

    Indices are plain integer data, not a graph input. The backward pass
    scatter-adds into the table's gradient, so repeated indices accumulate.
    """
    table = _wrap(table)
    if table.values.ndim != 2:
        raise ShapeError(f"index_select: table must be 2-D, got {table.shape}")
    idx = np.asarray(indices)
    if idx.dtype.kind not in "iu":
        raise ShapeError("index_select: indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise ShapeError("index_select: index out of range")
    out = np.take(table.values, idx, axis=0)

    def vjp(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, idx.ravel(), g.reshape(-1, table.shape[1]))
        return (gt,)

    return Tensor._from_op(out, "index_select", (table,), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    a = _wrap(a)
    shape = tuple(int(s) for s in (shape if hasattr(shape, "__iter__") else (shape,)))
    try:
        out = a.values.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None

    def vjp(g):
        return (g.reshape(a.shape),)

    return Tensor._from_op(np.array(out), "reshape", (a,), vjp)


_PRIMITIVES = {
    "add": add,
    "subtract": subtract,
    "multiply": multiply,
    "matmul": matmul,
    "square": square,
    "relu": relu,
    "exp": exp,
    "log": log,
    "xlogx": xlogx,
    "sum": tsum,
    "mean": tmean,
    "softmax": softmax,
    "logsumexp": logsumexp,
    "pairwise_sq_dist": pairwise_sq_dist,
    "detach": detach,
    "reshape": reshape,
    "index_select": index_select,
}


def apply_primitive(kind: str, inputs, **kwargs) -> Tensor:
    """Dispatch a primitive by name. Unknown kinds raise KeyError."""
    if kind not in _PRIMITIVES:
        raise KeyError(f"unknown primitive '{kind}'")
    return _PRIMITIVES[kind](*inputs, **kwargs)


# ---------------------------------------------------------------------------
# backward

GradientMap = dict  # node_id -> Tensor, for requires_grad leaves


def backward(loss: Tensor, params=None) -> GradientMap:
    """Gradients of a scalar loss w.r.t. every requires_grad leaf reached.

    Returns {node_id: Tensor}. If `params` (an iterable of leaf Tensors) is
    given, every listed leaf is guaranteed a slot: leaves the graph never
    reached (e.g. only through detach) get explicit zeros.

    Traversal and accumulation order follow graph construction order, so
    identical graphs give bitwise-identical gradients.
    """
    if loss.values.ndim != 0:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")

    # iterative post-order over parents; order fixed by construction order
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.node_id not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {loss.node_id: np.ones(())}
    for node in reversed(topo):
        g = grads.get(node.node_id)
        if g is None or node._vjp is None:
            continue
        for p, pg in zip(node._parents, node._vjp(g)):
            if not p.requires_grad or pg is None:
                continue
            if p.node_id in grads:
                grads[p.node_id] = grads[p.node_id] + pg
            else:
                grads[p.node_id] = pg

    out: GradientMap = {}
    for node in topo:
        if node._vjp is None and node.requires_grad and node.node_id in grads:
            out[node.node_id] = Tensor(grads[node.node_id])
    if params is not None:
        for p in params:
            if p._vjp is not None:
                raise ValueError("params must be leaf tensors")
            if p.node_id not in out:
                out[p.node_id] = Tensor(np.zeros(p.shape))
    return out
