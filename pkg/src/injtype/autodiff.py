"""A small reverse-mode differentiation engine over numpy float64 arrays.

Operations executed while a :class:`Tape` is active are appended to it; calling
:func:`backward` walks the tape once in reverse and accumulates ``.grad`` on
every tensor that requires it.  Outside a tape the same functions are plain
numpy forward computations, which is what decoding uses.

    >>> w = Tensor([[1.0, 2.0]], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_(matmul(w, Tensor([[3.0], [4.0]])))
    >>> backward(loss, tape)
    >>> w.grad.tolist()
    [[3.0, 4.0]]
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field
from itertools import accumulate

import numpy as np

from .errors import ContractError, DimensionError, DomainError

PROB_FLOOR = 1e-12

_state = threading.local()


class Tensor:
    """Dense float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        if type(data) is not np.ndarray or data.dtype != np.float64:
            data = np.asarray(data, dtype=np.float64)
        self.data = data
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def values(self):
        """Row-major flat view of the data."""
        return self.data.reshape(-1)

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar for tests and small scripts
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


class _Node:
    __slots__ = ("inputs", "out", "backward")

    def __init__(self, inputs, out, backward):
        self.inputs = inputs
        self.out = out
        self.backward = backward


class Tape:
    """Append-only record of executed operations.

    Nodes are appended in execution order, so the list is already a
    topological order of the graph.  Use as a context manager; tapes nest per
    thread, and independent threads may run their own tapes.
    """

    def __init__(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        return False


def _stack():
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


def current_tape():
    stack = getattr(_state, "stack", None)
    if not stack:
        return None
    return stack[-1]


@contextmanager
def no_grad():
    """Suspend recording: operations inside run forward only."""
    stack = _stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data, inputs, backward):
    stack = getattr(_state, "stack", None)
    tape = stack[-1] if stack else None
    if tape is None:
        return Tensor(data)
    for t in inputs:
        if t.requires_grad:
            break
    else:
        return Tensor(data)
    out = Tensor(data, requires_grad=True)
    tape.nodes.append(_Node(inputs, out, backward))
    return out


def custom_op(data, inputs, backward):
    """Record an operation with a caller-supplied backward rule.

    ``backward(g)`` must return one gradient (or None) per input.
    """
    return _emit(np.asarray(data, dtype=np.float64), tuple(as_tensor(t) for t in inputs), backward)


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------- linear algebra


def matmul(a, b):
    """Matrix product; 1-D operands follow numpy's vector conventions."""
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim == 0 or bd.ndim == 0 or ad.shape[-1] != bd.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {ad.shape} and {bd.shape}")
    out = ad @ bd

    def backward(g):
        if ad.ndim == 1 and bd.ndim == 1:
            return g * bd, g * ad
        if ad.ndim == 1:
            return bd @ g, np.outer(ad, g)
        if bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g @ bd.T, ad.T @ g

    return _emit(out, (a, b), backward)


def concat(*tensors, axis=-1):
    """Join tensors along ``axis`` (the last axis by default)."""
    tensors = [as_tensor(t) for t in tensors]
    arrays = [t.data for t in tensors]
    try:
        out = np.concatenate(arrays, axis=axis)
    except ValueError as exc:
        shapes = ", ".join(str(a.shape) for a in arrays)
        raise DimensionError(f"concat: incompatible shapes {shapes}") from exc
    bounds = list(accumulate(a.shape[axis] for a in arrays))[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(out, tuple(tensors), backward)


def stack(tensors):
    """Stack equal-shape tensors along a new leading axis."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("stack: no tensors")
    try:
        out = np.stack([t.data for t in tensors])
    except ValueError as exc:
        raise DimensionError(f"stack: incompatible shapes {[t.shape for t in tensors]}") from exc

    def backward(g):
        return tuple(g)

    return _emit(out, tuple(tensors), backward)


def getitem(x, key):
    """Basic (non-fancy) indexing: rows, slices."""
    x = as_tensor(x)
    out = x.data[key]
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[key] = g
        return (full,)

    return _emit(np.array(out, dtype=np.float64), (x,), backward)


def sum_(x):
    x = as_tensor(x)
    shape = x.shape

    def backward(g):
        return (np.full(shape, float(g)),)

    return _emit(np.array(x.data.sum()), (x,), backward)


def embedding_lookup(table, index):
    """Row ``index`` of ``table``; the gradient only reaches that row."""
    table = as_tensor(table)
    index = int(index)
    rows = table.shape[0]
    if not 0 <= index < rows:
        raise IndexError(f"embedding index {index} out of range for table with {rows} rows")
    shape = table.shape

    def backward(g):
        full = np.zeros(shape)
        full[index] = g
        return (full,)

    return _emit(table.data[index].copy(), (table,), backward)


# ---------------------------------------------------------------- elementwise


def _binary_shapes(name, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} do not broadcast") from exc


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        _binary_shapes("add", a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return _emit(a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        _binary_shapes("sub", a, b)
    sa, sb = a.shape, b.shape

    def backward(g):
        return _unbroadcast(g, sa), _unbroadcast(-g, sb)

    return _emit(a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        _binary_shapes("mul", a, b)
    ad, bd = a.data, b.data

    def backward(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return _emit(ad * bd, (a, b), backward)


def scale(x, c):
    """Multiply by a Python constant."""
    x = as_tensor(x)
    c = float(c)

    def backward(g):
        return (g * c,)

    return _emit(x.data * c, (x,), backward)


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)

    def backward(g):
        return (g * (1.0 - y * y),)

    return _emit(y, (x,), backward)


def sigmoid(x):
    x = as_tensor(x)
    # tanh form avoids overflow in exp for large negative inputs
    y = 0.5 * (1.0 + np.tanh(0.5 * x.data))

    def backward(g):
        return (g * y * (1.0 - y),)

    return _emit(y, (x,), backward)


def exp(x):
    x = as_tensor(x)
    y = np.exp(x.data)

    def backward(g):
        return (g * y,)

    return _emit(y, (x,), backward)


def log(x):
    x = as_tensor(x)
    xd = x.data
    if np.any(xd <= 0):
        raise DomainError("log: argument must be strictly positive")

    def backward(g):
        return (g / xd,)

    return _emit(np.log(xd), (x,), backward)


_ELEMENTWISE = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "exp": exp,
    "log": log,
    "add": add,
    "sub": sub,
    "mul": mul,
}


def elementwise(op, *operands):
    """Dispatch by name: ``elementwise("tanh", x)``, ``elementwise("mul", a, b)``."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(*operands)


# ---------------------------------------------------------------- probabilities


def softmax(x):
    """Softmax over the last axis, shifted by the max for stability."""
    x = as_tensor(x)
    if x.size == 0 or x.data.ndim == 0:
        raise DimensionError("softmax: empty input")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _emit(y, (x,), backward)


def cross_entropy(probs, gold, floor=PROB_FLOOR):
    """``-log(probs[gold])`` with probabilities clamped below at ``floor``."""
    probs = as_tensor(probs)
    gold = int(gold)
    n = probs.shape[-1]
    if not 0 <= gold < n:
        raise IndexError(f"gold index {gold} out of range for {n} classes")
    p = float(probs.data[gold])
    shape = probs.shape
    if p < floor:
        value = -np.log(floor)

        def backward(g):
            return (np.zeros(shape),)

    else:
        value = -np.log(p)

        def backward(g):
            full = np.zeros(shape)
            full[gold] = -float(g) / p
            return (full,)

    return _emit(np.array(value), (probs,), backward)


# ---------------------------------------------------------------- backward pass


def backward(loss, tape, params=None):
    """Accumulate d(loss)/d(x) into ``x.grad`` for every recorded tensor.

    ``params``, when given, are leaf tensors that must end up with a gradient
    array; the ones the loss never reached get zeros.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.out.grad
        if g is None:
            continue
        for inp, gi in zip(node.inputs, node.backward(g)):
            if gi is None or not inp.requires_grad:
                continue
            inp.grad = gi if inp.grad is None else inp.grad + gi
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


# ---------------------------------------------------------------- gradient checks


@dataclass
class GradCheckReport:
    max_rel_error: float
    passed: bool
    tolerance: float
    analytic: np.ndarray = field(repr=False)
    numeric: np.ndarray = field(repr=False)


def relative_error(analytic, numeric, floor=1e-6):
    """Coordinatewise |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f, tensor, h=1e-5):
    """Central finite differences of a scalar function w.r.t. ``tensor.data``."""
    flat = tensor.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = _scalar(f())
        flat[i] = orig - h
        fm = _scalar(f())
        flat[i] = orig
        grad[i] = (fp - fm) / (2 * h)
    return grad.reshape(tensor.shape)


def _scalar(t):
    value = float(np.asarray(t.data if isinstance(t, Tensor) else t).reshape(-1)[0])
    if not np.isfinite(value):
        raise DomainError(f"function value is not finite ({value})")
    return value


def gradient_check(f, point, tolerance=1e-4, h=1e-5):
    """Compare the tape gradient of scalar ``f(point)`` with central differences."""
    point = as_tensor(point)
    point.requires_grad = True
    point.grad = None
    with Tape() as tape:
        value = f(point)
    _scalar(value)
    backward(value, tape, params=[point])
    analytic = point.grad.copy()
    with no_grad():
        numeric = numeric_gradient(lambda: f(point), point, h)
    err = relative_error(analytic, numeric)
    worst = float(err.max()) if err.size else 0.0
    return GradCheckReport(worst, worst < tolerance, tolerance, analytic, numeric)


def check_gradients(loss_fn, tensors, h=1e-5, floor=1e-6):
    """Max relative gradient error per named tensor for a zero-argument loss.

    ``loss_fn`` must rebuild the graph from the current contents of
    ``tensors`` on every call.
    """
    for t in tensors.values():
        t.grad = None
        t.requires_grad = True
    with Tape() as tape:
        loss = loss_fn()
    _scalar(loss)
    backward(loss, tape, params=tensors.values())
    report = {}
    with no_grad():
        for name, t in tensors.items():
            numeric = numeric_gradient(loss_fn, t, h)
            report[name] = float(relative_error(t.grad, numeric, floor).max())
    return report
