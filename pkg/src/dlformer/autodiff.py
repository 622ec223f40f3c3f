"""Reverse-mode automatic differentiation on dense float64 arrays.

A deliberately small engine: plain numpy arrays wrapped in :class:`Tensor`,
an explicit :class:`Tape` that records every differentiable operation in
execution order, and one backward sweep that replays the record in reverse.
The operation set is the closure the forecaster actually needs -- batched
matmul, broadcast add, scalar multiply, transpose, concatenate, basic-index
slicing, reshape, global mean/sum, square, row softmax, relu and layer
normalization.  All model math is written per sample (2-D); a leading batch
axis simply broadcasts through.

A tape and the tensors recorded on it belong to one thread; the active-tape
stack is thread-local, so independent tapes can run concurrently.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import DimensionError, NumericError


class Tensor:
    """Dense float64 array with an optional same-shape gradient accumulator."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, scalar):
        return scale(self, scalar)

    __rmul__ = __mul__

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad}{tag})"


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


# ---------------------------------------------------------------------------
# tape machinery

_LOCAL = threading.local()


def _stack() -> list:
    stack = getattr(_LOCAL, "stack", None)
    if stack is None:
        stack = []
        _LOCAL.stack = stack
    return stack


def active_tape():
    """The innermost tape currently recording on this thread, if any."""
    stack = _stack()
    return stack[-1] if stack else None


class _Node:
    __slots__ = ("inputs", "out", "backward")

    def __init__(self, inputs, out, backward):
        self.inputs = inputs
        self.out = out
        self.backward = backward


class Tape:
    """Execution-ordered record of differentiable operations.

    Operations are recorded while the tape is entered as a context manager.
    ``backward`` replays the record once, in reverse, visiting each node
    exactly once; topological order holds by construction because an
    operation's inputs necessarily exist before its output.  Repeated
    ``backward`` calls accumulate into ``Tensor.grad`` without resetting.
    """

    def __init__(self):
        self._nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _stack().pop()
        if popped is not self:
            raise RuntimeError("tape stack corrupted: exited a tape that is not innermost")
        return False

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(t) into t.grad for every recorded tensor."""
        if not isinstance(loss, Tensor):
            raise TypeError("backward expects a Tensor loss")
        if loss.data.shape != ():
            raise ValueError(
                f"backward needs a scalar loss, got shape {loss.data.shape}"
            )
        pending: dict[Tensor, np.ndarray] = {loss: np.ones((), dtype=np.float64)}
        for node in reversed(self._nodes):
            grad_out = pending.pop(node.out, None)
            if grad_out is None:
                continue  # this output never reached the loss
            _accumulate(node.out, grad_out)
            for tensor, grad_in in zip(node.inputs, node.backward(grad_out)):
                if grad_in is None or not tensor.requires_grad:
                    continue
                held = pending.get(tensor)
                pending[tensor] = grad_in if held is None else held + grad_in
        for tensor, grad in pending.items():
            _accumulate(tensor, grad)


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=np.float64)  # copy: grad may be shared
    else:
        tensor.grad += grad


def _record(inputs, out: Tensor, backward) -> Tensor:
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._nodes.append(_Node(inputs, out, backward))
    return out


# ---------------------------------------------------------------------------
# operations

def _swap(x: np.ndarray) -> np.ndarray:
    return np.swapaxes(x, -1, -2)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        ga = _unbroadcast(g @ _swap(b.data), a.shape) if a.requires_grad else None
        gb = _unbroadcast(_swap(a.data) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return _record((a, b), out, backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = Tensor(a.data + b.data)
    except ValueError as exc:
        raise DimensionError(f"add cannot broadcast {a.shape} with {b.shape}") from exc

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(g, b.shape) if b.requires_grad else None,
        )

    return _record((a, b), out, backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = Tensor(a.data - b.data)
    except ValueError as exc:
        raise DimensionError(f"sub cannot broadcast {a.shape} with {b.shape}") from exc

    def backward(g):
        return (
            _unbroadcast(g, a.shape) if a.requires_grad else None,
            _unbroadcast(-g, b.shape) if b.requires_grad else None,
        )

    return _record((a, b), out, backward)


def scale(a: Tensor, scalar: float) -> Tensor:
    scalar = float(scalar)
    out = Tensor(a.data * scalar)

    def backward(g):
        return (g * scalar,)

    return _record((a,), out, backward)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes (matrix transpose, batch axes untouched)."""
    if a.ndim < 2:
        raise DimensionError(f"transpose needs at least 2 axes, got shape {a.shape}")
    out = Tensor(_swap(a.data))

    def backward(g):
        return (_swap(g),)

    return _record((a,), out, backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise DimensionError("concat needs at least one tensor")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(tensors, out, backward)


def take(a: Tensor, key) -> Tensor:
    """Slice with basic indexing (ints and slices only)."""
    out = Tensor(np.array(a.data[key]))

    def backward(g):
        buf = np.zeros(a.shape, dtype=np.float64)
        buf[key] = g
        return (buf,)

    return _record((a,), out, backward)


def reshape(a: Tensor, shape) -> Tensor:
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        return (g.reshape(a.shape),)

    return _record((a,), out, backward)


def mean(a: Tensor) -> Tensor:
    out = Tensor(a.data.mean())
    inv = 1.0 / a.size

    def backward(g):
        return (np.full(a.shape, float(g) * inv),)

    return _record((a,), out, backward)


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum())

    def backward(g):
        return (np.full(a.shape, float(g)),)

    return _record((a,), out, backward)


def square(a: Tensor) -> Tensor:
    out = Tensor(a.data * a.data)

    def backward(g):
        return (2.0 * a.data * g,)

    return _record((a,), out, backward)


def relu(a: Tensor) -> Tensor:
    out = Tensor(np.maximum(a.data, 0.0))
    # subgradient at exactly 0 is 0
    positive = a.data > 0.0

    def backward(g):
        return (g * positive,)

    return _record((a,), out, backward)


def softmax_rows(a: Tensor) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    x = a.data
    if not np.isfinite(x).all():
        raise NumericError("softmax_rows requires finite entries")
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s)

    def backward(g):
        inner = (g * s).sum(axis=-1, keepdims=True)
        return ((g - inner) * s,)

    return _record((a,), out, backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply elementwise gain and bias."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv
    out = Tensor(x_hat * gain.data + bias.data)

    def backward(g):
        gg = _unbroadcast(g * x_hat, gain.shape) if gain.requires_grad else None
        gb = _unbroadcast(g, bias.shape) if bias.requires_grad else None
        if a.requires_grad:
            gi = g * gain.data
            ga = inv * (
                gi
                - gi.mean(axis=-1, keepdims=True)
                - x_hat * (gi * x_hat).mean(axis=-1, keepdims=True)
            )
        else:
            ga = None
        return ga, gg, gb

    return _record((a, gain, bias), out, backward)
