"""Dense tensors with reverse-mode automatic differentiation.

Every gradient in the training procedure flows through this module. Tensors
wrap numpy arrays; primitives record themselves on the innermost active Tape
when any input requires a gradient, and ``backward`` replays the tape once in
reverse. float32 is the working precision for training, float64 the precision
for numeric verification (finite-difference tolerances are unreachable at
32 bit).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

_FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Operand shapes do not conform to a primitive's signature."""


class NumericError(ArithmeticError):
    """A primitive produced a NaN or Inf value."""


class TapeError(ValueError):
    """Backward was asked for something the tape cannot provide."""


class Tensor:
    """A shape-carrying array, optionally tracked for differentiation."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            # np.generic covers 0-d results: ufuncs on 0-d arrays return
            # numpy scalars, which must keep their precision.
            if isinstance(data, (np.ndarray, np.generic)) and data.dtype in _FLOAT_DTYPES:
                arr = np.asarray(data)
            else:
                arr = np.asarray(data, dtype=DEFAULT_DTYPE)
        else:
            arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            raise TypeError(f"tensor dtype must be float32 or float64, got {arr.dtype}")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same data, no grad tracking. Shares the underlying buffer."""
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # convenience operators; all dispatch to the module-level primitives
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class TapeRecord:
    """One primitive application: op id, inputs, output, and its pullback."""

    op: str
    inputs: tuple
    output: Tensor
    backward: Callable


@dataclass
class Tape:
    """Ordered record of primitive applications in creation (topological) order."""

    records: list = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _STACK.tapes.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _STACK.tapes.pop()
        return False

    def __len__(self) -> int:
        return len(self.records)


class _TapeStack(threading.local):
    def __init__(self):
        self.tapes: list[Tape] = []


_STACK = _TapeStack()


def active_tape() -> Tape | None:
    return _STACK.tapes[-1] if _STACK.tapes else None


def _check_finite(op: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"primitive '{op}' produced non-finite values")


def _finish(op: str, inputs: tuple, out_data: np.ndarray, backward: Callable) -> Tensor:
    _check_finite(op, out_data)
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = active_tape()
    if requires and tape is not None:
        tape.records.append(TapeRecord(op, inputs, out, backward))
    return out


def _coerce(x, like: Tensor) -> Tensor:
    """Wrap a python/numpy scalar as a constant tensor of matching dtype."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _binary_shapes(op: str, a: Tensor, b: Tensor) -> None:
    """Allowed elementwise pairings: equal shapes, scalar, (n,d)+(d,) bias,
    or (n,1) row mask against (n,d)."""
    sa, sb = a.shape, b.shape
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) == 2 and sb == (sa[1],):
        return
    if len(sb) == 2 and sa == (sb[1],):
        return
    if len(sa) == 2 and len(sb) == 2 and sa[0] == sb[0] and (sa[1] == 1 or sb[1] == 1):
        return
    raise ShapeError(f"{op}: shapes {sa} and {sb} do not conform")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to the operand's shape."""
    if g.shape == shape:
        return g
    if shape == ():
        return np.asarray(g.sum(), dtype=g.dtype)
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, (gd, sd) in enumerate(zip(g.shape, shape)):
        if sd == 1 and gd != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _coerce(a, b)
    b = _coerce(b, a)
    if a.dtype != b.dtype:
        raise TypeError(f"add: mixed dtypes {a.dtype} and {b.dtype}")
    _binary_shapes("add", a, b)
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _finish("add", (a, b), out, backward)


def sub(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _coerce(a, b)
    b = _coerce(b, a)
    if a.dtype != b.dtype:
        raise TypeError(f"sub: mixed dtypes {a.dtype} and {b.dtype}")
    _binary_shapes("sub", a, b)
    out = a.data - b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _finish("sub", (a, b), out, backward)


def mul(a, b) -> Tensor:
    if not isinstance(a, Tensor):
        a = _coerce(a, b)
    b = _coerce(b, a)
    if a.dtype != b.dtype:
        raise TypeError(f"mul: mixed dtypes {a.dtype} and {b.dtype}")
    _binary_shapes("mul", a, b)
    out = a.data * b.data
    a_data, b_data = a.data, b.data

    def backward(g):
        return _unbroadcast(g * b_data, a.shape), _unbroadcast(g * a_data, b.shape)

    return _finish("mul", (a, b), out, backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        return (-g,)

    return _finish("neg", (a,), -a.data, backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul: expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: inner dimensions differ: {a.shape} @ {b.shape}")
    if a.dtype != b.dtype:
        raise TypeError(f"matmul: mixed dtypes {a.dtype} and {b.dtype}")
    a_data, b_data = a.data, b.data
    out = a_data @ b_data

    def backward(g):
        return g @ b_data.T, a_data.T @ g

    return _finish("matmul", (a, b), out, backward)


def transpose(a: Tensor) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"transpose: expects a 2-D tensor, got shape {a.shape}")

    def backward(g):
        return (g.T.copy(),)

    return _finish("transpose", (a,), a.data.T.copy(), backward)


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    in_shape = a.shape

    def backward(g):
        return (g.reshape(in_shape),)

    try:
        out = a.data.reshape(shape).copy()
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {in_shape} as {shape}") from exc
    return _finish("reshape", (a,), out, backward)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat: needs at least one input")
    ndim = parts[0].ndim
    if axis >= ndim:
        raise ShapeError(f"concat: axis {axis} out of range for {ndim}-D input")
    for p in parts[1:]:
        if p.ndim != ndim:
            raise ShapeError("concat: inputs must share rank")
        if any(p.shape[d] != parts[0].shape[d] for d in range(ndim) if d != axis):
            raise ShapeError(f"concat: non-axis dims differ: {[q.shape for q in parts]}")
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]

    def backward(g):
        grads, start = [], 0
        for n in sizes:
            sl = [slice(None)] * ndim
            sl[axis] = slice(start, start + n)
            grads.append(g[tuple(sl)].copy())
            start += n
        return tuple(grads)

    return _finish("concat", parts, out, backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if a.ndim != 2:
        raise ShapeError(f"slice_cols: expects a 2-D tensor, got shape {a.shape}")
    if not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"slice_cols: bad range [{start}:{stop}] for width {a.shape[1]}")
    in_shape = a.shape

    def backward(g):
        full = np.zeros(in_shape, dtype=g.dtype)
        full[:, start:stop] = g
        return (full,)

    return _finish("slice_cols", (a,), a.data[:, start:stop].copy(), backward)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _finish("tanh", (a,), y, backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)

    def backward(g):
        return (g * y * (1.0 - y),)

    return _finish("sigmoid", (a,), y, backward)


def elu(a: Tensor, alpha: float = 1.0) -> Tensor:
    x = a.data
    y = np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))
    y = y.astype(x.dtype, copy=False)

    def backward(g):
        # d/dx alpha*(e^x - 1) = alpha*e^x = y + alpha on the negative branch
        return (g * np.where(x > 0, 1.0, y + alpha).astype(x.dtype, copy=False),)

    return _finish("elu", (a,), y, backward)


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup: (vocab, dim) table gathered at integer ids (n,) -> (n, dim)."""
    ids = np.asarray(ids)
    if ids.ndim != 1:
        raise ShapeError(f"embedding: ids must be 1-D, got shape {ids.shape}")
    if table.ndim != 2:
        raise ShapeError(f"embedding: table must be 2-D, got shape {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"embedding: id out of range for table of {table.shape[0]} rows")
    out = table.data[ids]
    tab_shape = table.shape

    def backward(g):
        full = np.zeros(tab_shape, dtype=g.dtype)
        np.add.at(full, ids, g)
        return (full,)

    return _finish("embedding", (table,), out, backward)


def _sum_backward_expand(g, axis, in_shape):
    if axis is None:
        return np.broadcast_to(g, in_shape).astype(g.dtype, copy=True)
    return np.broadcast_to(np.expand_dims(g, axis), in_shape).astype(g.dtype, copy=True)


def tensor_sum(a: Tensor, axis: int | None = None) -> Tensor:
    in_shape = a.shape

    def backward(g):
        return (_sum_backward_expand(g, axis, in_shape),)

    return _finish("sum", (a,), np.asarray(a.data.sum(axis=axis), dtype=a.dtype), backward)


def mean(a: Tensor, axis: int | None = None) -> Tensor:
    in_shape = a.shape
    count = a.size if axis is None else in_shape[axis]
    if count == 0:
        raise ShapeError("mean: reduction over zero elements")
    inv = 1.0 / count

    def backward(g):
        return (_sum_backward_expand(g, axis, in_shape) * np.asarray(inv, dtype=g.dtype),)

    return _finish("mean", (a,), np.asarray(a.data.mean(axis=axis), dtype=a.dtype), backward)


def _extreme(op: str, a: Tensor, axis, take_max: bool) -> Tensor:
    data = a.data
    if data.size == 0:
        raise ShapeError(f"{op}: reduction over zero elements")
    in_shape = a.shape
    if axis is None:
        flat_idx = int(np.argmax(data) if take_max else np.argmin(data))
        out = np.asarray(data.reshape(-1)[flat_idx], dtype=a.dtype)

        def backward(g):
            full = np.zeros(in_shape, dtype=g.dtype)
            full.reshape(-1)[flat_idx] = g
            return (full,)

    else:
        idx = np.argmax(data, axis=axis) if take_max else np.argmin(data, axis=axis)
        out = np.take_along_axis(data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

        def backward(g):
            full = np.zeros(in_shape, dtype=g.dtype)
            np.put_along_axis(full, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
            return (full,)

    return _finish(op, (a,), out, backward)


def tensor_max(a: Tensor, axis: int | None = None) -> Tensor:
    """Max reduction; ties route their gradient to the first maximum."""
    return _extreme("max", a, axis, take_max=True)


def tensor_min(a: Tensor, axis: int | None = None) -> Tensor:
    return _extreme("min", a, axis, take_max=False)


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Per-row negative log-likelihood of integer targets under softmax(logits).

    logits: (n, vocab); targets: (n,) ints. Returns shape (n,).
    """
    targets = np.asarray(targets)
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy: logits must be 2-D, got {logits.shape}")
    if targets.shape != (logits.shape[0],):
        raise ShapeError(
            f"softmax_cross_entropy: targets shape {targets.shape} does not match "
            f"logits rows {logits.shape[0]}"
        )
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ShapeError("softmax_cross_entropy: target id out of range")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1)) + zmax[:, 0]
    rows = np.arange(z.shape[0])
    out = (lse - z[rows, targets]).astype(z.dtype, copy=False)

    def backward(g):
        soft = np.exp(shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True)))
        soft[rows, targets] -= 1.0
        return (soft * g[:, None],)

    return _finish("softmax_cross_entropy", (logits,), out, backward)


def log_softmax(logits: Tensor) -> Tensor:
    if logits.ndim != 2:
        raise ShapeError(f"log_softmax: logits must be 2-D, got {logits.shape}")
    z = logits.data
    shifted = z - z.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def backward(g):
        soft = np.exp(out)
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return _finish("log_softmax", (logits,), out.astype(z.dtype, copy=False), backward)


PRIMITIVES = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "neg": neg,
    "matmul": matmul,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "slice_cols": slice_cols,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "elu": elu,
    "embedding": embedding,
    "sum": tensor_sum,
    "mean": mean,
    "max": tensor_max,
    "min": tensor_min,
    "softmax_cross_entropy": softmax_cross_entropy,
    "log_softmax": log_softmax,
}


def apply_primitive(op: str, inputs: Sequence, **kwargs) -> Tensor:
    """Apply a primitive by id. Unknown ops raise KeyError with the op name."""
    if op not in PRIMITIVES:
        raise KeyError(f"unknown primitive '{op}'")
    fn = PRIMITIVES[op]
    if op == "concat":
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)


def backward(tape: Tape, loss: Tensor) -> dict:
    """Reverse sweep over the tape; returns {leaf tensor: gradient array}.

    Every requires_grad leaf reachable from ``loss`` receives dLoss/dLeaf;
    gradients accumulate additively across fan-out. Leaf ``.grad`` buffers are
    also updated (added to, if already set).
    """
    if loss.shape != ():
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    produced = {id(rec.output) for rec in tape.records}
    if id(loss) not in produced:
        raise TapeError("backward: loss was not produced on this tape")

    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    leaf_grads: dict[Tensor, np.ndarray] = {}
    for rec in reversed(tape.records):
        g = grads.pop(id(rec.output), None)
        if g is None:
            continue
        in_grads = rec.backward(g)
        for t, ig in zip(rec.inputs, in_grads):
            if ig is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + ig
            else:
                grads[key] = ig
            if key not in produced:
                leaf_grads[t] = grads[key]

    for t, g in leaf_grads.items():
        t.grad = g if t.grad is None else t.grad + g
    return leaf_grads


def reset_grads(tensors) -> None:
    for t in tensors:
        t.grad = None
