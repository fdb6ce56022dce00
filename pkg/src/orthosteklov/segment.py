"""Exact integrals of powers of a linear function over [0, 1].

For w(t) = a + (b - a) t these evaluate, vectorised over edge arrays,

    even:  I = int_0^1 |w|^s dt
    odd:   J = int_0^1 sign(w) |w|^s dt

together with their partial derivatives in ``a`` and ``b``. The closed form
(F(b) - F(a)) / (b - a) is used unless b is close to a relative to the
midpoint, where it cancels; there both endpoints share a sign and the
integrand is smooth, so an 8-point Gauss-Legendre rule is exact to rounding.
"""

from __future__ import annotations

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _f(w, s, odd):
    aw = np.abs(w) ** s
    return np.sign(w) * aw if odd else aw


def _antideriv(w, s, odd):
    aw = np.abs(w) ** (s + 1.0) / (s + 1.0)
    return aw if odd else np.sign(w) * aw


def _df(w, s, odd):
    # derivative of _f
    aw = s * np.abs(w) ** (s - 1.0)
    return aw if odd else np.sign(w) * aw


def _near(a, b, s):
    return np.abs(b - a) * max(s, 1.0) <= 0.25 * np.abs(a + b)


def power_integral(a, b, s: float, odd: bool = False) -> np.ndarray:
    """int_0^1 f(a + (b-a)t) dt with f = |w|^s (or sign(w)|w|^s if ``odd``)."""
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    d = b - a
    near = _near(a, b, s)
    far = ~near
    out = np.empty(a.shape)
    if np.any(far):
        out[far] = (_antideriv(b[far], s, odd) - _antideriv(a[far], s, odd)) / d[far]
    if np.any(near):
        w = a[near, None] + d[near, None] * _GL_T[None, :]
        out[near] = _f(w, s, odd) @ _GL_W
    return out


def power_integral_grad(a, b, s: float, odd: bool = False):
    """Value and partials (I, dI/da, dI/db) of :func:`power_integral`.

    Requires s >= 1 so that the integrand is C^1.
    """
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    d = b - a
    near = _near(a, b, s)
    far = ~near
    val = np.empty(a.shape)
    da = np.empty(a.shape)
    db = np.empty(a.shape)
    if np.any(far):
        af, bf, dd = a[far], b[far], d[far]
        I = (_antideriv(bf, s, odd) - _antideriv(af, s, odd)) / dd
        val[far] = I
        da[far] = (I - _f(af, s, odd)) / dd
        db[far] = (_f(bf, s, odd) - I) / dd
    if np.any(near):
        w = a[near, None] + d[near, None] * _GL_T[None, :]
        val[near] = _f(w, s, odd) @ _GL_W
        fp = _df(w, s, odd)
        da[near] = fp @ (_GL_W * (1.0 - _GL_T))
        db[near] = fp @ (_GL_W * _GL_T)
    return val, da, db
