"""Scalar expression tape with reverse-mode sweeps.

A function is *recorded* once by running it on :class:`Var` placeholders; the
resulting :class:`Program` can then be replayed at any input vector.  Recorded
code must be branch-free with respect to input values: every node is a pure
function of its parents, so a program recorded at one point is valid
everywhere its primitives are defined.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, NonFiniteResult
from . import ops
from ._backend import kernel


class Tape:
    """Append-only node store.  Input nodes are created first."""

    def __init__(self, n_inputs: int):
        self.op = [ops.INPUT] * n_inputs
        self.a = [-1] * n_inputs
        self.b = [-1] * n_inputs
        self.c = [0.0] * n_inputs
        self.n_inputs = n_inputs
        self.inputs = [Var(self, i) for i in range(n_inputs)]

    def __len__(self):
        return len(self.op)

    def push(self, op, a, b=-1, c=0.0):
        self.op.append(op)
        self.a.append(a)
        self.b.append(b)
        self.c.append(float(c))
        return Var(self, len(self.op) - 1)

    def const(self, value):
        return self.push(ops.CONST, -1, -1, value)

    def compile(self, output) -> "Program":
        if not isinstance(output, Var):
            output = self.const(float(output))
        elif output.tape is not self:
            raise ValueError("output belongs to a different tape")
        return Program(
            np.asarray(self.op, dtype=np.intc),
            np.asarray(self.a, dtype=np.intc),
            np.asarray(self.b, dtype=np.intc),
            np.asarray(self.c, dtype=np.float64),
            self.n_inputs,
            output.i,
        )


class Var:
    """Handle to one tape node; supports arithmetic with floats and Vars."""

    __slots__ = ("tape", "i")
    __array_ufunc__ = None  # make numpy scalars defer to the reflected ops

    def __init__(self, tape, i):
        self.tape = tape
        self.i = i

    def _bin(self, other, op):
        if isinstance(other, Var):
            return self.tape.push(op, self.i, other.i)
        return self.tape.push(op, self.i, -1, other)

    def __add__(self, other):
        return self._bin(other, ops.ADD)

    def __radd__(self, other):
        return self._bin(other, ops.ADD)

    def __sub__(self, other):
        return self._bin(other, ops.SUB)

    def __rsub__(self, other):
        return self.tape.push(ops.RSUB, self.i, -1, other)

    def __mul__(self, other):
        return self._bin(other, ops.MUL)

    def __rmul__(self, other):
        return self._bin(other, ops.MUL)

    def __truediv__(self, other):
        return self._bin(other, ops.DIV)

    def __rtruediv__(self, other):
        return self.tape.push(ops.RDIV, self.i, -1, other)

    def __neg__(self):
        return self.tape.push(ops.NEG, self.i)

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        if isinstance(exponent, Var):
            return exp(exponent * log(self))
        return self.tape.push(ops.POW, self.i, -1, exponent)

    def __rpow__(self, base):
        return exp(self * math.log(base))

    def __repr__(self):
        return f"Var(#{self.i} {ops.NAMES[self.tape.op[self.i]]})"


# Elementary functions dispatching on float or Var.

def exp(x):
    if isinstance(x, Var):
        return x.tape.push(ops.EXP, x.i)
    return math.exp(x)


def log(x):
    if isinstance(x, Var):
        return x.tape.push(ops.LOG, x.i)
    if not x > 0:
        raise DomainError(f"log of non-positive value {x!r}")
    return math.log(x)


def sqrt(x):
    if isinstance(x, Var):
        return x ** 0.5
    if x < 0:
        raise DomainError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def sigmoid(x):
    if isinstance(x, Var):
        return x.tape.push(ops.SIGMOID, x.i)
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def softplus(x):
    """``log(1 + exp(x))`` without overflow."""
    if isinstance(x, Var):
        return x.tape.push(ops.SOFTPLUS, x.i)
    return math.log1p(math.exp(-abs(x))) + max(x, 0.0)


def logaddexp(x, y):
    if isinstance(x, Var) or isinstance(y, Var):
        tape = x.tape if isinstance(x, Var) else y.tape
        if not isinstance(x, Var):
            x = tape.const(x)
        if not isinstance(y, Var):
            y = tape.const(y)
        return tape.push(ops.LOGADDEXP, x.i, y.i)
    m = max(x, y)
    if m == -math.inf:
        return -math.inf
    return m + math.log1p(math.exp(-abs(x - y)))


def lgamma(x):
    if isinstance(x, Var):
        return x.tape.push(ops.LGAMMA, x.i)
    if not x > 0:
        raise DomainError(f"lgamma of non-positive value {x!r}")
    return math.lgamma(x)


def logsumexp(terms):
    terms = list(terms)
    acc = terms[0]
    for t in terms[1:]:
        acc = logaddexp(acc, t)
    return acc


def vsum(terms):
    """Left fold addition that starts from the first term (no 0.0 node)."""
    it = iter(terms)
    acc = next(it)
    for t in it:
        acc = acc + t
    return acc


@dataclass(frozen=True)
class GradResult:
    value: float
    gradient: np.ndarray


class Program:
    """A compiled tape: replayable forward value and reverse-mode gradient."""

    def __init__(self, op, a, b, c, n_inputs, out):
        self.op = op
        self.a = a
        self.b = b
        self.c = c
        self.n_inputs = n_inputs
        self.out = out
        self._lists = None
        self._local = threading.local()

    def __len__(self):
        return self.out + 1

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_lists"] = None
        del state["_local"]
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._local = threading.local()

    def _buffers(self):
        # one scratch set per thread keeps replay reentrant
        bufs = getattr(self._local, "bufs", None)
        if bufs is None:
            n = self.out + 1
            bufs = self._local.bufs = tuple(np.empty(n) for _ in range(4))
        return bufs

    def _run(self, x, need_grad, backend=None):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.n_inputs,):
            raise ValueError(
                f"expected input of length {self.n_inputs}, got {x.shape}")
        n = self.out + 1
        impl = kernel if backend is None else backend
        if getattr(impl, "COMPILED", False):
            val, da, db, adj = self._buffers()
            status, node = impl.sweep(self.op, self.a, self.b, self.c, x, val,
                                      da, db, adj, self.out, need_grad)
            value = val[self.out]
        else:
            if self._lists is None:
                self._lists = (self.op.tolist(), self.a.tolist(),
                               self.b.tolist(), self.c.tolist())
            op, a, b, c = self._lists
            val = [0.0] * n
            da = [0.0] * n
            db = [0.0] * n
            adj = [0.0] * n if need_grad else val
            status, node = impl.sweep(op, a, b, c, x.tolist(), val, da, db,
                                      adj, self.out, need_grad)
            value = val[self.out]
        grad = None
        if need_grad and status == ops.OK:
            grad = np.array(adj[: self.n_inputs], dtype=np.float64)
        return status, node, float(value), grad

    def _raise(self, status, node):
        name = ops.NAMES.get(int(self.op[node]), "?") if node >= 0 else "?"
        if status == ops.DOMAIN:
            raise DomainError(f"{name} node #{node} evaluated outside its domain",
                              node=node)
        raise NonFiniteResult(f"non-finite value at node #{node} ({name})")

    def value(self, x, backend=None) -> float:
        status, node, value, _ = self._run(x, False, backend)
        if status != ops.OK:
            self._raise(status, node)
        return value

    def value_and_grad(self, x, backend=None) -> GradResult:
        status, node, value, grad = self._run(x, True, backend)
        if status != ops.OK:
            self._raise(status, node)
        if not np.all(np.isfinite(grad)):
            raise NonFiniteResult("non-finite gradient")
        return GradResult(value, grad)

    def try_value_and_grad(self, x):
        """Like :meth:`value_and_grad` but returns ``(-inf, None)`` on failure."""
        status, _, value, grad = self._run(x, True)
        if status != ops.OK or not np.all(np.isfinite(grad)):
            return -math.inf, None
        return value, grad

    def try_value(self, x):
        status, _, value, _ = self._run(x, False)
        if status != ops.OK:
            return -math.inf
        return value


def record(f, n_inputs: int) -> Program:
    """Record ``f(list_of_vars)`` into a replayable program."""
    tape = Tape(n_inputs)
    return tape.compile(f(tape.inputs))


def grad(f, x) -> GradResult:
    """Value and gradient of the scalar function ``f`` at ``x``.

    ``f`` receives a list of :class:`Var` and must use this module's
    elementary functions (``exp``, ``log``, ...) for non-arithmetic operations.

    >>> r = grad(lambda v: v[0] ** 2 + 3 * v[1], [2.0, 1.0])
    >>> r.value, r.gradient.tolist()
    (7.0, [4.0, 3.0])
    """
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return record(f, x.size).value_and_grad(x)
