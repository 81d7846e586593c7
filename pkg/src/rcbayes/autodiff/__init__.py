"""Reverse-mode automatic differentiation over scalar tapes."""

from ._backend import BACKEND, compiled_kernel, python_kernel
from .tape import (GradResult, Program, Tape, Var, exp, grad, lgamma, log,
                   logaddexp, logsumexp, record, sigmoid, softplus, sqrt, vsum)

__all__ = [
    "BACKEND",
    "GradResult",
    "Program",
    "Tape",
    "Var",
    "compiled_kernel",
    "exp",
    "grad",
    "lgamma",
    "log",
    "logaddexp",
    "logsumexp",
    "python_kernel",
    "record",
    "sigmoid",
    "softplus",
    "sqrt",
    "vsum",
]
