"""Dense tensors with reverse-mode automatic differentiation.

Every operation returns a new :class:`Tensor` that remembers its inputs and a
local backward rule.  :func:`backward` orders the recorded graph into a
:class:`Tape` and sweeps it in reverse, accumulating gradients into the leaf
tensors that have ``requires_grad`` set.

Broadcasting is deliberately absent: binary operations require equal shapes,
and a row-vector bias must be added with :func:`add_bias`.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DegenerateRowError, ShapeError

# Leaves may be shared by graphs built on different threads; only the final
# accumulation into ``leaf.grad`` touches shared state.
_ACCUMULATE_LOCK = threading.Lock()

MASK_FILL = -1e9

_local = threading.local()


@contextmanager
def record_branches():
    """Collect the branch decisions (ReLU signs, max winners, clamps) of ops run inside."""
    log = []
    previous = getattr(_local, "branches", None)
    _local.branches = log
    try:
        yield log
    finally:
        _local.branches = previous


def _note_branch(decision: np.ndarray) -> None:
    log = getattr(_local, "branches", None)
    if log is not None:
        log.append(decision)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        arr = np.array(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: tuple = ()
        self._backward: Optional[Callable] = None
        self.op = "leaf"

    @classmethod
    def _result(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.name = None
        out.op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, op={self.op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    @property
    def T(self):
        return transpose(self)


def zeros(shape, dtype=np.float64, requires_grad=False) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def ones_like(t: Tensor) -> Tensor:
    return Tensor(np.ones_like(t.data))


def _check_same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{kind}: shapes {a.shape} and {b.shape} differ")


# --------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    A, B = a.data, b.data

    def backward(g):
        return g @ B.T, A.T @ g

    return Tensor._result(A @ B, (a, b), backward, "matmul")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose expects a 2-d tensor, got {a.shape}")
    return Tensor._result(a.data.T, (a,), lambda g: (g.T,), "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {old} to {shape}") from exc
    return Tensor._result(out, (a,), lambda g: (g.reshape(old),), "reshape")


# --------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("add", a, b)
    return Tensor._result(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("sub", a, b)
    return Tensor._result(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_shape("mul", a, b)
    A, B = a.data, b.data
    return Tensor._result(A * B, (a, b), lambda g: (g * B, g * A), "mul")


def add_bias(a: Tensor, bias: Tensor) -> Tensor:
    """Add a bias vector to every row of ``a`` (the one permitted broadcast)."""
    if bias.data.ndim != 1 or a.shape[-1] != bias.shape[0]:
        raise ShapeError(f"add_bias: bias {bias.shape} does not match rows of {a.shape}")
    if a.data.ndim == 1:
        return Tensor._result(a.data + bias.data, (a, bias), lambda g: (g, g), "add_bias")
    if a.data.ndim != 2:
        raise ShapeError(f"add_bias expects a vector or matrix, got {a.shape}")
    return Tensor._result(a.data + bias.data, (a, bias), lambda g: (g, g.sum(axis=0)), "add_bias")


def scale(a: Tensor, c: float) -> Tensor:
    c = a.data.dtype.type(c)
    return Tensor._result(a.data * c, (a,), lambda g: (g * c,), "scale")


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return Tensor._result(y, (a,), lambda g: (g * (1.0 - y * y),), "tanh")


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)
    return Tensor._result(y, (a,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def relu(a: Tensor) -> Tensor:
    keep = a.data > 0
    _note_branch(keep)
    return Tensor._result(np.where(keep, a.data, 0).astype(a.dtype), (a,), lambda g: (g * keep,), "relu")


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return Tensor._result(y, (a,), lambda g: (g * y,), "exp")


def log(a: Tensor, floor: float = 0.0) -> Tensor:
    """Natural log of ``max(a, floor)``; clamped entries receive no gradient."""
    x = a.data
    clamped = x < floor
    _note_branch(clamped)
    safe = np.where(clamped, floor, x).astype(x.dtype)
    return Tensor._result(np.log(safe), (a,), lambda g: (np.where(clamped, 0, g / safe),), "log")


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise maximum; on ties the first operand wins the gradient."""
    _check_same_shape("maximum", a, b)
    first = a.data >= b.data
    _note_branch(first)
    out = np.where(first, a.data, b.data)
    return Tensor._result(out, (a, b), lambda g: (g * first, g * ~first), "maximum")


_UNARY = {"tanh": tanh, "relu": relu, "sigmoid": sigmoid, "exp": exp}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(kind: str, a: Tensor, b: Optional[Tensor] = None) -> Tensor:
    if kind in _UNARY:
        if b is not None:
            raise ContractError(f"{kind} takes a single operand")
        return _UNARY[kind](a)
    if kind in _BINARY:
        if b is None:
            raise ContractError(f"{kind} needs two operands")
        return _BINARY[kind](a, b)
    raise ContractError(f"unknown elementwise kind {kind!r}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# --------------------------------------------------------------------------
# structure


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ShapeError("concat of an empty list")
    ndim = tensors[0].data.ndim
    axis = axis % ndim if ndim else 0
    for t in tensors[1:]:
        if t.data.ndim != ndim or any(
            s != r for k, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if k != axis
        ):
            raise ShapeError(
                f"concat along axis {axis}: incompatible shapes {[x.shape for x in tensors]}"
            )
    if len(tensors) == 1:
        return tensors[0]
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def narrow(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Contiguous slice ``[start, stop)`` along ``axis``."""
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return Tensor._result(a.data[index], (a,), backward, "narrow")


def row(a: Tensor, i: int) -> Tensor:
    """Row ``i`` of a matrix as a vector."""
    shape = a.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[i] = g
        return (full,)

    return Tensor._result(a.data[i], (a,), backward, "row")


def gather_rows(table: Tensor, indices: Sequence[int]) -> Tensor:
    """Select rows of ``table``; repeated indices accumulate their gradients."""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    n = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ContractError(f"row index out of range for table with {n} rows")
    shape = table.shape

    def backward(g):
        full = np.zeros(shape, dtype=g.dtype)
        np.add.at(full, idx, g)
        return (full,)

    return Tensor._result(table.data[idx], (table,), backward, "gather")


def mask_rows(a: Tensor, keep: np.ndarray) -> Tensor:
    """Zero the rows of ``a`` where ``keep`` is false."""
    keep = np.asarray(keep, dtype=bool).reshape(-1, *([1] * (a.data.ndim - 1)))
    return Tensor._result(np.where(keep, a.data, 0).astype(a.dtype), (a,), lambda g: (g * keep,), "mask_rows")


# --------------------------------------------------------------------------
# reductions and normalisation


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return Tensor._result(np.asarray(a.data.sum()), (a,), lambda g: (np.full(shape, g, dtype=a.dtype),), "sum")


def reduce(kind: str, a: Tensor, axis: int) -> Tensor:
    """Max or mean over ``axis``. Max routes the gradient to the lowest argmax."""
    if a.data.ndim == 0:
        raise ShapeError("cannot reduce a scalar")
    axis = axis % a.data.ndim
    if a.shape[axis] == 0:
        raise ShapeError(f"reduce over empty axis {axis} of shape {a.shape}")
    shape = a.shape
    if kind == "mean":
        count = shape[axis]

        def backward(g):
            return (np.broadcast_to(np.expand_dims(g, axis), shape) / count,)

        return Tensor._result(a.data.mean(axis=axis), (a,), backward, "mean")
    if kind == "max":
        arg = np.argmax(a.data, axis=axis)  # first occurrence on ties
        _note_branch(arg)

        def backward(g):
            full = np.zeros(shape, dtype=g.dtype)
            np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
            return (full,)

        return Tensor._result(a.data.max(axis=axis), (a,), backward, "max")
    raise ContractError(f"unknown reduction {kind!r}")


def softmax_rows(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """Row-wise softmax. Masked-out entries are exactly zero."""
    if a.data.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got {a.shape}")
    x = a.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match {x.shape}")
        if x.shape[1] and not mask.any(axis=1).all():
            raise DegenerateRowError("softmax row has every entry masked")
        x = np.where(mask, x, MASK_FILL)
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    if mask is not None:
        e = np.where(mask, e, 0)
    y = (e / e.sum(axis=1, keepdims=True)).astype(a.dtype)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return Tensor._result(y, (a,), backward, "softmax")


def dropout(a: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout: survivors are scaled so inference is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ContractError("dropout in training mode needs a random generator")
    keep = rng.random(a.shape) >= rate
    factor = (keep / (1.0 - rate)).astype(a.dtype)
    return Tensor._result(a.data * factor, (a,), lambda g: (g * factor,), "dropout")


# --------------------------------------------------------------------------
# backward pass


class Tape:
    """Recorded operations of one graph, inputs before outputs."""

    def __init__(self, nodes: list):
        self.nodes = nodes

    @classmethod
    def record(cls, root: Tensor) -> "Tape":
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)


def backward(loss: Tensor, params: Iterable[Tensor] = ()) -> Tape:
    """Populate ``.grad`` of every leaf that requires a gradient.

    Leaves listed in ``params`` that are not reachable from ``loss`` get a
    zero gradient, so callers can step every parameter uniformly.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    tape = Tape.record(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = []
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                leaves.append((node, g))
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    with _ACCUMULATE_LOCK:
        for leaf, g in leaves:
            g = np.asarray(g, dtype=leaf.data.dtype).reshape(leaf.shape)
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
    return tape
