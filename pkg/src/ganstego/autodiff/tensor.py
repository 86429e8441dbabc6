"""Dense arrays with tape-based reverse-mode differentiation.

Operations executed while a :class:`Tape` is active are recorded in execution
order whenever at least one input requires a gradient. Because recording order
is execution order, the tape is already topologically sorted and the backward
sweep is a single reverse walk.
"""
from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

_local = threading.local()


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def current_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """An n-dimensional float array, optionally tracked for gradients.

    Precision is fixed at construction: ``float64`` unless the data is
    already ``float32`` or ``dtype`` says otherwise.
    """

    __slots__ = ("data", "requires_grad", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if dtype is None and arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_lift(other, self), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


Backward = Callable[[np.ndarray, tuple], Sequence["np.ndarray | None"]]


class _Op:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs: tuple, output: Tensor, backward: Backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Records differentiable operations for one forward/backward cycle.

    Use as a context manager. A tape can be consumed by :meth:`backward`
    exactly once; a second call raises :class:`TapeError`.
    """

    def __init__(self):
        self.ops: list[_Op] = []
        self.consumed = False
        self._grads: dict[int, np.ndarray] = {}

    def __enter__(self) -> "Tape":
        if self.consumed:
            raise TapeError("cannot record on a consumed tape")
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        else:
            raise TapeError("tape stack corrupted: exiting a tape that is not innermost")

    def __len__(self) -> int:
        return len(self.ops)

    def record(self, inputs: tuple, output: Tensor, backward: Backward) -> None:
        if self.consumed:
            raise TapeError("cannot record on a consumed tape")
        self.ops.append(_Op(inputs, output, backward))

    def backward(self, loss: Tensor, params: Iterable[Tensor] | None = None):
        """Propagate d(loss)/d(.) back through the recorded operations.

        Returns a list of gradient arrays aligned with ``params`` (zeros for
        parameters with no path to ``loss``), or ``None`` when ``params`` is
        omitted; individual gradients are then available via :meth:`grad`.
        """
        if self.consumed:
            raise TapeError("tape already consumed by a previous backward pass")
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.requires_grad:
            raise TapeError("loss does not depend on any tracked tensor on this tape")

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for op in reversed(self.ops):
            g = grads.pop(id(op.output), None)
            if g is None:
                continue
            needs = tuple(t.requires_grad for t in op.inputs)
            in_grads = op.backward(g, needs)
            for inp, gi, need in zip(op.inputs, in_grads, needs):
                if not need or gi is None:
                    continue
                key = id(inp)
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
        self.ops = []
        self.consumed = True
        self._grads = grads
        if params is None:
            return None
        return [self.grad(p) for p in params]

    def grad(self, t: Tensor) -> np.ndarray:
        if not self.consumed:
            raise TapeError("grad() is only available after backward()")
        g = self._grads.get(id(t))
        return np.zeros_like(t.data) if g is None else g


def backward(loss: Tensor, tape: Tape, params: Iterable[Tensor]) -> list[np.ndarray]:
    """Gradients of a scalar ``loss`` for each of ``params``."""
    return tape.backward(loss, list(params))


def no_grad_tensor(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, dtype=dtype)


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def make(out: np.ndarray, inputs: tuple, backward: Backward) -> Tensor:
    """Wrap ``out`` as a Tensor and record it if any input is tracked."""
    t = Tensor(out)
    tape = current_tape()
    if tape is not None and any(i.requires_grad for i in inputs):
        t.requires_grad = True
        tape.record(inputs, t, backward)
    return t


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape``, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# elementwise binary ops


def add(a, b) -> Tensor:
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)
    sa, sb = a.shape, b.shape

    def bw(g, needs):
        return (unbroadcast(g, sa) if needs[0] else None, unbroadcast(g, sb) if needs[1] else None)

    return make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)
    sa, sb = a.shape, b.shape

    def bw(g, needs):
        return (unbroadcast(g, sa) if needs[0] else None, unbroadcast(-g, sb) if needs[1] else None)

    return make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)
    ad, bd = a.data, b.data

    def bw(g, needs):
        return (
            unbroadcast(g * bd, ad.shape) if needs[0] else None,
            unbroadcast(g * ad, bd.shape) if needs[1] else None,
        )

    return make(ad * bd, (a, b), bw)


def div(a, b) -> Tensor:
    a = _lift(a, b) if not isinstance(a, Tensor) else a
    b = _lift(b, a)
    ad, bd = a.data, b.data

    def bw(g, needs):
        return (
            unbroadcast(g / bd, ad.shape) if needs[0] else None,
            unbroadcast(-g * ad / (bd * bd), bd.shape) if needs[1] else None,
        )

    return make(ad / bd, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return make(-a.data, (a,), lambda g, needs: (-g,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    ad, bd = a.data, b.data

    def bw(g, needs):
        return (g @ bd.T if needs[0] else None, ad.T @ g if needs[1] else None)

    return make(ad @ bd, (a, b), bw)


# reductions and movement


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g, needs):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make(np.asarray(out), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[i] for i in axes]))
    if count == 0:
        raise ShapeError("mean over an empty extent")
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    src = a.shape
    out = a.data.reshape(shape)
    return make(out, (a,), lambda g, needs: (g.reshape(src),))


def transpose(a: Tensor, axes=None) -> Tensor:
    out = np.transpose(a.data, axes)
    inv = None if axes is None else tuple(np.argsort(axes))
    return make(out, (a,), lambda g, needs: (np.transpose(g, inv),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def bw(g, needs):
        return tuple(np.split(g, cuts, axis=axis))

    return make(out, tensors, bw)


# elementwise unary ops


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make(out, (a,), lambda g, needs: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return make(np.log(ad), (a,), lambda g, needs: (g / ad,))


def sigmoid(a: Tensor) -> Tensor:
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make(out, (a,), lambda g, needs: (g * out * (1.0 - out),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return make(out, (a,), lambda g, needs: (g * (1.0 - out * out),))


def leaky_relu(a: Tensor, alpha: float = 0.2) -> Tensor:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"leaky slope must lie in [0, 1], got {alpha}")
    ad = a.data
    a_ = ad.dtype.type(alpha)
    # np.where is several times slower than these ufuncs on large arrays
    out = np.maximum(ad, ad * a_)
    slope = (ad > 0).astype(ad.dtype)
    slope *= 1 - a_
    slope += a_
    return make(out, (a,), lambda g, needs: (g * slope,))


def relu(a: Tensor) -> Tensor:
    return leaky_relu(a, 0.0)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; the gradient is zero where the clamp is active."""
    ad = a.data
    inside = ((ad >= lo) & (ad <= hi)).astype(ad.dtype)
    return make(np.clip(ad, lo, hi), (a,), lambda g, needs: (g * inside,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return make(ad * ad, (a,), lambda g, needs: (2.0 * g * ad,))
