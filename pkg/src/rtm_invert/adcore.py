"""Minimal reverse-mode automatic differentiation.

A :class:`Tape` records every operation as an append-only list of nodes.
Each node keeps its forward value (a float64 ndarray) and a pullback that maps
the node's adjoint to adjoints of its inputs.  :func:`backward` sweeps the tape
once in reverse from a scalar root.

Values are numpy arrays with numpy broadcasting, so a single tape evaluates a
whole mini-batch.  Plain numbers and arrays mixed into an operation are treated
as constants and never enter the gradient map.

Example
-------
>>> tape = Tape()
>>> x = tape.lift(3.0)
>>> grads = backward(x * x)
>>> float(grads[x.id])
6.0
"""

import numpy as np

from .exceptions import DomainError, NonFiniteInput

EULER_GAMMA = np.euler_gamma
_E1_SWITCH = 1.0
_E1_MAX_ITER = 300
_TINY = 1e-300


def e1(x):
    """Exponential integral E1(x) = int_x^inf exp(-t)/t dt for x > 0.

    Power series below ``x = 1``, Lentz continued fraction above.
    """
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("exp1", float(x[~(x > 0)].flat[0]))
    out = np.empty_like(x)
    lo = x <= _E1_SWITCH
    if np.any(lo):
        out[lo] = _e1_series(x[lo])
    if np.any(~lo):
        out[~lo] = _e1_contfrac(x[~lo])
    return out


def _e1_series(x):
    total = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, _E1_MAX_ITER):
        term = -term * x / k
        contrib = -term / k
        total += contrib
        if np.all(np.abs(contrib) <= 1e-17 * np.abs(total)):
            break
    return -EULER_GAMMA - np.log(x) + total


def _e1_contfrac(x):
    b = x + 1.0
    c = np.full_like(x, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    for i in range(1, _E1_MAX_ITER):
        a = -float(i * i)
        b = b + 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if np.all(np.abs(delta - 1.0) <= 1e-16):
            break
    return h * np.exp(-x)


class Tape:
    """Append-only record of operations.

    Node ``i`` only ever references inputs with ids ``< i``, so the list is
    always in topological order.
    """

    def __init__(self):
        self.opcodes = []
        self.inputs = []
        self.values = []
        self.pullbacks = []

    def __len__(self):
        return len(self.values)

    def clear(self):
        self.opcodes.clear()
        self.inputs.clear()
        self.values.clear()
        self.pullbacks.clear()

    def lift(self, x):
        """Record ``x`` as a leaf node and return its handle."""
        value = np.array(x, dtype=float)
        if not np.all(np.isfinite(value)):
            raise NonFiniteInput(f"lift: non-finite input {value[~np.isfinite(value)].flat[0]!r}")
        return self._record("lift", value, (), None)

    def _record(self, opcode, value, inputs, pullback):
        self.opcodes.append(opcode)
        self.values.append(value)
        self.inputs.append(inputs)
        self.pullbacks.append(pullback)
        return Var(self, len(self.values) - 1)

    def dump(self, path):
        """Write one line per node: id, opcode, input ids, value."""
        with open(path, "w") as fh:
            for i, (op, ins, val) in enumerate(zip(self.opcodes, self.inputs, self.values)):
                text = np.array2string(np.ravel(val), threshold=6, precision=8, max_line_width=10**6)
                shape = "x".join(map(str, np.shape(val))) or "scalar"
                fh.write(f"{i}\t{op}\t{','.join(map(str, ins)) or '-'}\t{shape}\t{text}\n")


class Var:
    """Handle to a node on a :class:`Tape`."""

    __slots__ = ("tape", "id")
    __array_ufunc__ = None  # make ndarray <op> Var dispatch to Var's reflected operators

    def __init__(self, tape, node_id):
        self.tape = tape
        self.id = node_id

    @property
    def value(self):
        return self.tape.values[self.id]

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(id={self.id}, op={self.tape.opcodes[self.id]}, shape={self.shape})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __pow__(self, p):
        return power(self, p)

    def __rpow__(self, base):
        return power(base, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)


def _tape_of(*args):
    tape = None
    for a in args:
        if isinstance(a, Var):
            if tape is None:
                tape = a.tape
            elif a.tape is not tape:
                raise ValueError("cannot combine values from different tapes")
    return tape


def _val(a):
    return a.value if isinstance(a, Var) else np.asarray(a, dtype=float)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(opcode, a, b, value, da, db):
    """Record a two-argument op; ``da``/``db`` map the output adjoint to input adjoints."""
    tape = _tape_of(a, b)
    if tape is None:
        return value
    ins = tuple(x.id for x in (a, b) if isinstance(x, Var))
    sa = np.shape(_val(a))
    sb = np.shape(_val(b))
    a_var, b_var = isinstance(a, Var), isinstance(b, Var)

    def pullback(g):
        out = []
        if a_var:
            out.append(_unbroadcast(da(g), sa))
        if b_var:
            out.append(_unbroadcast(db(g), sb))
        return out

    return tape._record(opcode, value, ins, pullback)


def _unary(opcode, a, value, da):
    if not isinstance(a, Var):
        return value
    return a.tape._record(opcode, value, (a.id,), lambda g: [da(g)])


def add(a, b):
    return _binary("add", a, b, _val(a) + _val(b), lambda g: g, lambda g: g)


def sub(a, b):
    return _binary("sub", a, b, _val(a) - _val(b), lambda g: g, lambda g: -g)


def mul(a, b):
    va, vb = _val(a), _val(b)
    return _binary("mul", a, b, va * vb, lambda g: g * vb, lambda g: g * va)


def div(a, b):
    va, vb = _val(a), _val(b)
    if np.any(vb == 0):
        raise DomainError("div", 0.0)
    out = va / vb
    return _binary("div", a, b, out, lambda g: g / vb, lambda g: -g * out / vb)


def neg(a):
    return _unary("neg", a, -_val(a), lambda g: -g)


def power(a, p):
    """``a ** p``; a Var exponent requires ``a > 0``."""
    va, vp = _val(a), _val(p)
    if isinstance(p, Var):
        if np.any(va <= 0):
            raise DomainError("pow", float(va[va <= 0].flat[0]) if va.ndim else float(va))
    elif np.any(vp != np.round(vp)) and np.any(va < 0):
        raise DomainError("pow", float(va[va < 0].flat[0]) if va.ndim else float(va))
    out = va ** vp
    return _binary(
        "pow", a, p, out,
        lambda g: g * vp * va ** (vp - 1.0),
        lambda g: g * out * np.log(va),
    )


def square(a):
    va = _val(a)
    return _unary("square", a, va * va, lambda g: 2.0 * g * va)


def exp(a):
    out = np.exp(_val(a))
    return _unary("exp", a, out, lambda g: g * out)


def log(a):
    va = _val(a)
    if np.any(va <= 0):
        raise DomainError("log", float(va[va <= 0].flat[0]) if va.ndim else float(va))
    return _unary("log", a, np.log(va), lambda g: g / va)


def sqrt(a):
    va = _val(a)
    if np.any(va < 0):
        raise DomainError("sqrt", float(va[va < 0].flat[0]) if va.ndim else float(va))
    out = np.sqrt(va)
    with np.errstate(divide="ignore"):
        inv = 0.5 / out
    return _unary("sqrt", a, out, lambda g: g * inv)


def sigmoid(a):
    va = _val(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * va))
    return _unary("sigmoid", a, out, lambda g: g * out * (1.0 - out))


def tanh(a):
    out = np.tanh(_val(a))
    return _unary("tanh", a, out, lambda g: g * (1.0 - out * out))


def relu(a):
    va = _val(a)
    mask = va > 0
    return _unary("relu", a, np.where(mask, va, 0.0), lambda g: g * mask)


def exp1(a):
    """E1 with pullback dE1/dx = -exp(-x)/x."""
    va = _val(a)
    out = e1(va)
    return _unary("exp1", a, out, lambda g: -g * np.exp(-va) / va)


def maximum(a, b):
    va, vb = _val(a), _val(b)
    pick_a = va >= vb
    return _binary("maximum", a, b, np.where(pick_a, va, vb), lambda g: g * pick_a, lambda g: g * ~pick_a)


def minimum(a, b):
    va, vb = _val(a), _val(b)
    pick_a = va <= vb
    return _binary("minimum", a, b, np.where(pick_a, va, vb), lambda g: g * pick_a, lambda g: g * ~pick_a)


def clip(a, lo, hi):
    return minimum(maximum(a, lo), hi)


def where(mask, a, b):
    mask = np.asarray(mask, dtype=bool)
    return _binary(
        "where", a, b, np.where(mask, _val(a), _val(b)),
        lambda g: np.where(mask, g, 0.0), lambda g: np.where(mask, 0.0, g),
    )


def outer(a, b):
    va, vb = _val(a), _val(b)
    if va.ndim != 1 or vb.ndim != 1:
        raise ValueError("outer expects two vectors")
    return _binary("outer", a, b, np.outer(va, vb), lambda g: g @ vb, lambda g: va @ g)


def matmul(a, b):
    va, vb = _val(a), _val(b)
    return _binary(
        "matmul", a, b, va @ vb,
        lambda g: g @ np.swapaxes(vb, -1, -2) if vb.ndim > 1 else np.multiply.outer(g, vb),
        lambda g: np.swapaxes(va, -1, -2) @ g if va.ndim > 1 else np.multiply.outer(va, g),
    )


def sum(a, axis=None):  # noqa: A001 - mirrors numpy naming
    va = _val(a)
    shape = va.shape

    def da(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape).copy()

    return _unary("sum", a, np.sum(va, axis=axis), da)


def mean(a, axis=None):
    va = _val(a)
    n = va.size if axis is None else va.shape[axis]
    return sum(a, axis=axis) * (1.0 / n)


def take(a, index):
    va = _val(a)
    shape = va.shape

    def da(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return full

    return _unary("take", a, va[index], da)


def backward(root):
    """Reverse sweep from a scalar ``root``.

    Returns a dict mapping node id to adjoint for ``root`` and all of its
    ancestors.  Nodes outside the ancestry do not appear (their adjoint is 0).
    """
    if not isinstance(root, Var):
        raise TypeError("backward expects a Var")
    if np.size(root.value) != 1:
        raise ValueError(f"backward root must be scalar, got shape {root.shape}")
    tape = root.tape
    adj = {root.id: np.ones_like(root.value)}
    for i in range(root.id, -1, -1):
        g = adj.get(i)
        if g is None or not tape.inputs[i]:
            continue
        for j, gj in zip(tape.inputs[i], tape.pullbacks[i](g)):
            if j in adj:
                adj[j] = adj[j] + gj
            else:
                adj[j] = gj
    return adj


def grad(grads, var):
    """Adjoint of ``var`` from a :func:`backward` result; zeros if unreachable."""
    g = grads.get(var.id)
    return np.zeros_like(var.value) if g is None else g


def scalar_derivative(fn, x):
    """Derivative of a scalar function built from tape ops, at the float ``x``."""
    tape = Tape()
    v = tape.lift(x)
    return float(grad(backward(fn(v)), v))


def central_difference(fn, x, h=None):
    """Central finite difference of a plain float function; default step scales with |x|."""
    if h is None:
        h = 1e-5 * max(1.0, abs(x))
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


__all__ = [
    "EULER_GAMMA", "Tape", "Var", "add", "backward", "central_difference", "clip", "div",
    "e1", "exp", "exp1", "grad", "log", "matmul", "maximum", "mean", "minimum", "mul",
    "neg", "outer", "power", "relu", "scalar_derivative", "sigmoid", "sqrt", "square", "sub",
    "sum", "take", "tanh", "where",
]
