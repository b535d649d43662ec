"""Double-double arithmetic on numpy arrays.

A value is a pair (hi, lo) of float64 arrays with |lo| <= ulp(hi)/2, giving
about 32 significant digits. Built from the error-free transformations
TwoSum and TwoProd (Dekker splitting, no FMA needed).
"""

from __future__ import annotations

import numpy as np

_SPLIT = 134217729.0  # 2**27 + 1


def two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def fast_two_sum(a, b):
    """Requires |a| >= |b|."""
    s = a + b
    return s, b - (s - a)


def _split(a):
    c = _SPLIT * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def add(x, y):
    s, e = two_sum(x[0], y[0])
    e = e + (x[1] + y[1])
    return fast_two_sum(s, e)


def mul(x, b):
    """Double-double times float64."""
    p, e = two_prod(x[0], b)
    e = e + x[1] * b
    return fast_two_sum(p, e)


def from_float(a):
    a = np.asarray(a, dtype=np.float64)
    return a, np.zeros_like(a)


def causal_decay_sum(v, omega: float):
    """Double-double version of :func:`lasi.wls.causal_decay_sum` on a pair ``v``."""
    vh, vl = v
    h, w = vh.shape[:2]
    zero = np.zeros_like(vh[:, 0])
    left = [(zero, zero)]
    for c in range(w - 1):
        left.append(mul(add(left[c], (vh[:, c], vl[:, c])), omega))
    right = [(zero, zero)] * w
    for c in range(w - 1, 0, -1):
        right[c - 1] = mul(add(right[c], (vh[:, c], vl[:, c])), omega)
    left_h = np.stack([p[0] for p in left], axis=1)
    left_l = np.stack([p[1] for p in left], axis=1)
    right_h = np.stack([p[0] for p in right], axis=1)
    right_l = np.stack([p[1] for p in right], axis=1)
    rh, rl = add(add((left_h, left_l), (vh, vl)), (right_h, right_l))
    out_h, out_l = np.empty_like(vh), np.empty_like(vh)
    up = (np.zeros_like(vh[0]), np.zeros_like(vh[0]))
    for r in range(h):
        out_h[r], out_l[r] = add(up, (left_h[r], left_l[r]))
        up = mul(add(up, (rh[r], rl[r])), omega)
    return out_h, out_l


def matvec(a, x):
    """Double-double ``a @ x`` over the last two axes of ``a`` with a float64 vector ``x``."""
    ah, al = a
    d = ah.shape[-1]
    acc = (np.zeros(ah.shape[:-1]), np.zeros(ah.shape[:-1]))
    for j in range(d):
        acc = add(acc, mul((ah[..., j], al[..., j]), x[..., None, j]))
    return acc
