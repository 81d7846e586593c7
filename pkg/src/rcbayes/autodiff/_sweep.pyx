# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled forward/reverse sweep over a recorded scalar tape."""

from libc.math cimport exp, log, log1p, fabs, lgamma, pow, floor, isfinite

# must match ops.py
cdef enum:
    INPUT = 0
    CONST = 1
    ADD = 2
    SUB = 3
    MUL = 4
    DIV = 5
    NEG = 6
    EXP = 7
    LOG = 8
    POW = 9
    SIGMOID = 10
    SOFTPLUS = 11
    LOGADDEXP = 12
    LGAMMA = 13
    RSUB = 14
    RDIV = 15
    OK = 0
    DOMAIN = 1
    NONFINITE = 2


cdef inline double _digamma(double x) nogil:
    cdef double result = 0.0
    cdef double inv, inv2
    while x < 6.0:
        result -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    result += log(x) - 0.5 * inv - inv2 * (
        1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (
            1.0 / 240 - inv2 * (1.0 / 132)))))
    return result


cdef inline double _sigmoid(double x) nogil:
    cdef double z
    if x >= 0:
        z = exp(-x)
        return 1.0 / (1.0 + z)
    z = exp(x)
    return z / (1.0 + z)


cdef int _forward(const int[::1] op, const int[::1] a, const int[::1] b,
                  const double[::1] c, const double[::1] x, double[::1] val,
                  double[::1] da, double[::1] db, int out, int* bad) noexcept nogil:
    cdef int i, o, bi
    cdef double v = 0.0, va, vb, e, m
    for i in range(out + 1):
        o = op[i]
        if o == INPUT:
            v = x[i]
        elif o == CONST:
            v = c[i]
        else:
            va = val[a[i]]
            bi = b[i]
            if bi >= 0:
                vb = val[bi]
            else:
                vb = c[i]
            if o == ADD:
                v = va + vb
                da[i] = 1.0
                db[i] = 1.0
            elif o == SUB:
                v = va - vb
                da[i] = 1.0
                db[i] = -1.0
            elif o == MUL:
                v = va * vb
                da[i] = vb
                db[i] = va
            elif o == DIV:
                if vb == 0.0:
                    bad[0] = i
                    return DOMAIN
                v = va / vb
                da[i] = 1.0 / vb
                db[i] = -v / vb
            elif o == NEG:
                v = -va
                da[i] = -1.0
            elif o == EXP:
                v = exp(va)
                da[i] = v
            elif o == LOG:
                if not va > 0.0:
                    bad[0] = i
                    return DOMAIN
                v = log(va)
                da[i] = 1.0 / va
            elif o == POW:
                e = c[i]
                if (va < 0.0 and e != floor(e)) or (va == 0.0 and e < 1.0):
                    bad[0] = i
                    return DOMAIN
                v = pow(va, e)
                da[i] = e * pow(va, e - 1.0)
            elif o == SIGMOID:
                v = _sigmoid(va)
                da[i] = v * (1.0 - v)
            elif o == SOFTPLUS:
                v = log1p(exp(-fabs(va))) + (va if va > 0.0 else 0.0)
                da[i] = _sigmoid(va)
            elif o == LOGADDEXP:
                m = va if va > vb else vb
                v = m + log1p(exp(-fabs(va - vb)))
                da[i] = exp(va - v)
                db[i] = exp(vb - v)
            elif o == LGAMMA:
                if not va > 0.0:
                    bad[0] = i
                    return DOMAIN
                v = lgamma(va)
                da[i] = _digamma(va)
            elif o == RSUB:
                v = c[i] - va
                da[i] = -1.0
            elif o == RDIV:
                if va == 0.0:
                    bad[0] = i
                    return DOMAIN
                v = c[i] / va
                da[i] = -v / va
        val[i] = v
    if not isfinite(val[out]):
        bad[0] = out
        return NONFINITE
    return OK


cdef void _backward(const int[::1] a, const int[::1] b, const double[::1] da,
                    const double[::1] db, double[::1] adj, int out) noexcept nogil:
    cdef int i, ai, bi
    cdef double g
    for i in range(out + 1):
        adj[i] = 0.0
    adj[out] = 1.0
    for i in range(out, -1, -1):
        g = adj[i]
        if g == 0.0:
            continue
        ai = a[i]
        if ai < 0:
            continue
        adj[ai] += g * da[i]
        bi = b[i]
        if bi >= 0:
            adj[bi] += g * db[i]


def sweep(const int[::1] op, const int[::1] a, const int[::1] b,
          const double[::1] c, const double[::1] x, double[::1] val,
          double[::1] da, double[::1] db, double[::1] adj, int out,
          bint need_grad):
    """Evaluate nodes ``0..out`` and optionally accumulate adjoints.

    Returns ``(status, node)`` with ``node`` the failing index, else -1.
    """
    cdef int bad = -1
    cdef int status
    with nogil:
        status = _forward(op, a, b, c, x, val, da, db, out, &bad)
        if status == OK and need_grad:
            _backward(a, b, da, db, adj, out)
    return status, bad
