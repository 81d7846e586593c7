"""Pure-Python forward/reverse sweep, used when the compiled core is absent."""

import math

from .ops import (ADD, CONST, DIV, DOMAIN, EXP, INPUT, LGAMMA, LOG, LOGADDEXP,
                  MUL, NEG, NONFINITE, OK, POW, RDIV, RSUB, SIGMOID, SOFTPLUS,
                  SUB)


def digamma(x):
    result = 0.0
    while x < 6.0:
        result -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    result += math.log(x) - 0.5 * inv - inv2 * (
        1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (
            1.0 / 240 - inv2 * (1.0 / 132)))))
    return result


def _sigmoid(x):
    if x >= 0:
        z = math.exp(-x)
        return 1.0 / (1.0 + z)
    z = math.exp(x)
    return z / (1.0 + z)


def sweep(op, a, b, c, x, val, da, db, adj, out, need_grad):
    """Evaluate nodes ``0..out`` forward, then optionally accumulate adjoints.

    Returns ``(status, node)``; ``node`` is the offending index on failure.
    """
    isfinite = math.isfinite
    for i in range(out + 1):
        o = op[i]
        try:
            if o == INPUT:
                v = x[i]
            elif o == CONST:
                v = c[i]
            else:
                va = val[a[i]]
                bi = b[i]
                if o == ADD:
                    vb = val[bi] if bi >= 0 else c[i]
                    v = va + vb
                    da[i] = 1.0
                    db[i] = 1.0
                elif o == SUB:
                    vb = val[bi] if bi >= 0 else c[i]
                    v = va - vb
                    da[i] = 1.0
                    db[i] = -1.0
                elif o == MUL:
                    vb = val[bi] if bi >= 0 else c[i]
                    v = va * vb
                    da[i] = vb
                    db[i] = va
                elif o == DIV:
                    vb = val[bi] if bi >= 0 else c[i]
                    if vb == 0.0:
                        return DOMAIN, i
                    v = va / vb
                    da[i] = 1.0 / vb
                    db[i] = -v / vb
                elif o == NEG:
                    v = -va
                    da[i] = -1.0
                elif o == EXP:
                    v = math.exp(va)
                    da[i] = v
                elif o == LOG:
                    if not va > 0.0:
                        return DOMAIN, i
                    v = math.log(va)
                    da[i] = 1.0 / va
                elif o == POW:
                    e = c[i]
                    if va < 0.0 and e != math.floor(e):
                        return DOMAIN, i
                    if va == 0.0 and e < 1.0:
                        return DOMAIN, i
                    v = va ** e
                    da[i] = e * va ** (e - 1.0)
                elif o == SIGMOID:
                    v = _sigmoid(va)
                    da[i] = v * (1.0 - v)
                elif o == SOFTPLUS:
                    v = math.log1p(math.exp(-abs(va))) + max(va, 0.0)
                    da[i] = _sigmoid(va)
                elif o == LOGADDEXP:
                    vb = val[bi]
                    m = va if va > vb else vb
                    v = m + math.log1p(math.exp(-abs(va - vb)))
                    da[i] = math.exp(va - v)
                    db[i] = math.exp(vb - v)
                elif o == LGAMMA:
                    if not va > 0.0:
                        return DOMAIN, i
                    v = math.lgamma(va)
                    da[i] = digamma(va)
                elif o == RSUB:
                    v = c[i] - va
                    da[i] = -1.0
                elif o == RDIV:
                    if va == 0.0:
                        return DOMAIN, i
                    v = c[i] / va
                    da[i] = -v / va
                else:
                    raise ValueError(f"unknown opcode {o}")
        except OverflowError:
            return NONFINITE, i
        val[i] = v
    if not isfinite(val[out]):
        return NONFINITE, out
    if not need_grad:
        return OK, -1

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
    return OK, -1
