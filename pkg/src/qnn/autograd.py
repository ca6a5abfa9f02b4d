"""Reverse-mode automatic differentiation over dense numpy arrays.

A Tensor wraps a contiguous real ndarray. Every tracked operation attaches a
Node recording its inputs and a backward rule; backward() linearises the
graph reachable from a scalar loss into a Tape (topologically ordered record
list) and replays it in reverse, accumulating gradients into the
requires_grad leaves. Calling backward twice without zeroing doubles the
leaf gradients: accumulation is explicit, never overwrite.

Broadcasting is deliberately narrow: elementwise ops accept exact-shape
operands or a scalar; bias addition over the trailing axis has its own op.
Sequences are time-major (T, B, D) so recurrent code slices axis 0.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from qnn.errors import ContractError, DimensionError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (frozen evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Node:
    """Backward record: op name, input tensors, and the local gradient rule."""

    __slots__ = ("op", "inputs", "backward")

    def __init__(self, op, inputs, backward):
        self.op = op
        self.inputs = inputs
        self.backward = backward


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node")

    def __init__(self, data: np.ndarray, requires_grad: bool = False, node: Node | None = None):
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.data.shape)}, dtype={self.data.dtype}{flag})"

    # operator sugar; the free functions below do the work
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, shape):
        return reshape(self, shape)


def tensor(data, dtype=None, requires_grad: bool = False) -> Tensor:
    arr = np.array(data, dtype=dtype, copy=True)
    if dtype is None and arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return Tensor(arr, requires_grad=requires_grad)


def op_result(data: np.ndarray, inputs, op: str, backward) -> Tensor:
    """Wrap an op's output, attaching a Node when gradients are being tracked."""
    if _grad_enabled and any(t.requires_grad for t in inputs):
        return Tensor(data, requires_grad=True, node=Node(op, tuple(inputs), backward))
    return Tensor(data)


def _as_operand(x, like: Tensor):
    """Coerce python scalars to a constant 0-d tensor of the partner's dtype."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _check_elementwise(a: Tensor, b: Tensor, op: str):
    if a.data.shape != b.data.shape and a.data.shape != () and b.data.shape != ():
        raise DimensionError(f"{op}: incompatible shapes {a.data.shape} vs {b.data.shape}")
    if a.data.dtype != b.data.dtype:
        raise ContractError(f"{op}: dtype mismatch {a.data.dtype} vs {b.data.dtype}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    # only scalar broadcast is supported, so either shapes match or target is 0-d
    if g.shape == tuple(shape):
        return g
    return g.sum().reshape(shape)


def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _as_operand(a, b)
    b = _as_operand(b, a)
    _check_elementwise(a, b, "add")
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return op_result(out, (a, b), "add", backward)


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _as_operand(a, b)
    b = _as_operand(b, a)
    _check_elementwise(a, b, "sub")
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return op_result(out, (a, b), "sub", backward)


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _as_operand(a, b)
    b = _as_operand(b, a)
    _check_elementwise(a, b, "mul")
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return op_result(out, (a, b), "mul", backward)


def div(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _as_operand(a, b)
    b = _as_operand(b, a)
    _check_elementwise(a, b, "div")
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.data.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape)
        return ga, gb

    return op_result(out, (a, b), "div", backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        return (-g,)

    return op_result(-a.data, (a,), "neg", backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise DimensionError(f"matmul: inner extents differ, {a.data.shape} vs {b.data.shape}")
    if a.data.dtype != b.data.dtype:
        raise ContractError(f"matmul: dtype mismatch {a.data.dtype} vs {b.data.dtype}")
    out = a.data @ b.data

    def backward(g):
        return g @ b.data.T, a.data.T @ g

    return op_result(out, (a, b), "matmul", backward)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., N] + b[N], broadcasting b over all leading axes."""
    if b.data.ndim != 1 or x.data.shape[-1] != b.data.shape[0]:
        raise DimensionError(f"add_bias: bias {b.data.shape} does not match input {x.data.shape}")
    if x.data.dtype != b.data.dtype:
        raise ContractError(f"add_bias: dtype mismatch {x.data.dtype} vs {b.data.dtype}")
    out = x.data + b.data

    def backward(g):
        return g, g.reshape(-1, b.data.shape[0]).sum(axis=0)

    return op_result(out, (x, b), "add_bias", backward)


def sigmoid(a: Tensor) -> Tensor:
    z = np.exp(-np.abs(a.data))
    out = np.where(a.data >= 0, 1.0 / (1.0 + z), z / (1.0 + z))

    def backward(g):
        return (g * out * (1.0 - out),)

    return op_result(out, (a,), "sigmoid", backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return op_result(out, (a,), "tanh", backward)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def backward(g):
        return (g * (a.data > 0),)

    return op_result(out, (a,), "relu", backward)


def hardtanh(a: Tensor) -> Tensor:
    """Clamp to [-1, 1]; slope 1 strictly inside, 0 outside and at the kinks."""
    out = np.clip(a.data, -1.0, 1.0)

    def backward(g):
        return (g * ((a.data > -1.0) & (a.data < 1.0)),)

    return op_result(out, (a,), "hardtanh", backward)


def sqrt(a: Tensor) -> Tensor:
    """Elementwise square root; the derivative at exactly 0 is taken as 0

    (the true one-sided derivative is +inf, which would poison gradients with
    NaN; zero is the conventional safe subgradient for norm chains).
    """
    out = np.sqrt(a.data)

    def backward(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)

    return op_result(out, (a,), "sqrt", backward)


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def backward(g):
        return (np.full(a.data.shape, g, dtype=a.data.dtype),)

    return op_result(out, (a,), "sum", backward)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    out = np.asarray(a.data.mean(), dtype=a.data.dtype)

    def backward(g):
        return (np.full(a.data.shape, g / n, dtype=a.data.dtype),)

    return op_result(out, (a,), "mean", backward)


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of zero tensors")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        grads = []
        for i in range(len(sizes)):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(g[tuple(idx)])
        return tuple(grads)

    return op_result(out, tuple(tensors), "concat", backward)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along one axis."""
    extent = a.data.shape[axis]
    if start < 0 or length < 0 or start + length > extent:
        raise DimensionError(
            f"narrow: range [{start}, {start + length}) out of bounds for axis {axis} with extent {extent}"
        )
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx]

    def backward(g):
        full = np.zeros(a.data.shape, dtype=a.data.dtype)
        full[idx] = g
        return (full,)

    return op_result(out, (a,), "narrow", backward)


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return op_result(out, (a,), "reshape", backward)


def reverse_time(a: Tensor) -> Tensor:
    """Flip the leading (time) axis."""
    out = a.data[::-1].copy()

    def backward(g):
        return (g[::-1].copy(),)

    return op_result(out, (a,), "reverse_time", backward)


def stack0(tensors) -> Tensor:
    """Stack equal-shape tensors along a new leading axis."""
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("stack0 of zero tensors")
    out = np.stack([t.data for t in tensors], axis=0)

    def backward(g):
        return tuple(g[i] for i in range(len(tensors)))

    return op_result(out, tuple(tensors), "stack0", backward)


class Tape:
    """Topologically ordered op records reachable from a root tensor.

    Every record's inputs appear earlier in the list than the record itself,
    so replaying the list in reverse performs one correct backward sweep.
    """

    __slots__ = ("records",)

    def __init__(self, records):
        self.records = records

    @staticmethod
    def from_root(root: Tensor) -> "Tape":
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            if t.node is not None:
                for inp in t.node.inputs:
                    if id(inp) not in seen:
                        stack.append((inp, False))
        return Tape(order)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every requires_grad leaf tensor."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if not loss.requires_grad:
        return
    tape = Tape.from_root(loss)
    pending: dict[int, np.ndarray] = {
        id(loss): np.ones(loss.data.shape, dtype=loss.data.dtype)
    }
    for t in reversed(tape.records):
        g = pending.pop(id(t), None)
        if g is None:
            continue
        if t.node is None:
            if t.requires_grad:
                t.grad = g if t.grad is None else t.grad + g
            continue
        for inp, gi in zip(t.node.inputs, t.node.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            acc = pending.get(id(inp))
            pending[id(inp)] = gi if acc is None else acc + gi
