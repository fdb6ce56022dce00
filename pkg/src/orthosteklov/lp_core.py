"""Pointwise l^p primitives and the orthotropic operators built on them.

Everything here is a pure function of its arguments. Exponents are plain
floats; ``math.inf`` is the exact infinity tag (never a large float stand-in).
"""

from __future__ import annotations

import math
from typing import Union

import numpy as np

from .errors import DegenerateInputError, DomainError

ExponentLike = Union[float, int, str]

DEFAULT_TIE_TOL = 1e-9
UNIT_TOL = 1e-12


def as_exponent(p: ExponentLike, allow_one: bool = True) -> float:
    """Coerce ``p`` to a float exponent; accepts ``"inf"`` / ``math.inf``."""
    if isinstance(p, str):
        s = p.strip().lower()
        if s in ("inf", "infinity", "oo", "∞"):
            return math.inf
        p = float(s)
    p = float(p)
    if math.isnan(p):
        raise DomainError("exponent is NaN")
    lo_ok = p >= 1.0 if allow_one else p > 1.0
    if not lo_ok:
        raise DomainError(f"exponent {p!r} outside {'[1' if allow_one else '(1'}, inf]")
    return p


def dual_exponent(p: ExponentLike) -> float:
    """Conjugate exponent p' with 1/p + 1/p' = 1; dual(inf) = 1, dual(1) = inf."""
    p = as_exponent(p)
    if math.isinf(p):
        return 1.0
    if p == 1.0:
        return math.inf
    return p / (p - 1.0)


def _finite_vector(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite vector entries")
    return x


def lp_norm(x, p: ExponentLike) -> float:
    """l^p norm with rescaling by the max entry, exact for p = 1 and p = inf."""
    x = np.abs(_finite_vector(x)).ravel()
    p = as_exponent(p)
    if x.size == 0:
        return 0.0
    m = float(x.max())
    if m == 0.0:
        return 0.0
    if math.isinf(p):
        return m
    if p == 1.0:
        return float(x.sum())
    return m * float(np.sum((x / m) ** p)) ** (1.0 / p)


def lp_norm_rows(x: np.ndarray, p: ExponentLike) -> np.ndarray:
    """Row-wise :func:`lp_norm` for a 2-D array."""
    x = np.abs(np.asarray(x, dtype=float))
    p = as_exponent(p)
    if math.isinf(p):
        return x.max(axis=1)
    if p == 1.0:
        return x.sum(axis=1)
    m = x.max(axis=1)
    out = np.zeros_like(m)
    nz = m > 0
    out[nz] = m[nz] * np.sum((x[nz] / m[nz, None]) ** p, axis=1) ** (1.0 / p)
    return out


def max_index_set(x, tau: float = DEFAULT_TIE_TOL) -> frozenset[int]:
    """0-based indices j with |x_j| >= (1 - tau) * max |x|.

    Raises :class:`DegenerateInputError` for the zero vector; callers that
    need a total function (the Lambda evaluator) handle that case themselves.
    """
    a = np.abs(_finite_vector(x)).ravel()
    m = a.max() if a.size else 0.0
    if m == 0.0:
        raise DegenerateInputError("index set of the zero vector is undefined")
    return frozenset(int(j) for j in np.flatnonzero(a >= (1.0 - tau) * m))


def rho_weight(nu, p: ExponentLike) -> float:
    """Boundary density rho_p(nu) = ||nu||_{p'} for a Euclidean unit normal."""
    nu = _finite_vector(nu)
    if abs(float(np.linalg.norm(nu)) - 1.0) > UNIT_TOL:
        raise DomainError("normal is not a Euclidean unit vector")
    return lp_norm(nu, dual_exponent(p))


def signed_power(t, p: float):
    """|t|^(p-2) t evaluated as sign(t) |t|^(p-1); finite at t = 0 for p > 1."""
    t = np.asarray(t, dtype=float)
    return np.sign(t) * np.abs(t) ** (p - 1.0)


def abs_power(t, s: float, eps: float = 0.0):
    """|t|^s, with (t^2 + eps^2)^(s/2) when s < 0 so that t = 0 stays finite."""
    t = np.asarray(t, dtype=float)
    if s >= 0.0:
        return np.abs(t) ** s
    if eps <= 0.0:
        eps = 1e-12 * max(1.0, float(np.max(np.abs(t))) if t.size else 1.0)
    return (t * t + eps * eps) ** (0.5 * s)


def plug_gap(x, y, p: float) -> float:
    """<|x|^(p-2)x - |y|^(p-2)y, x - y> - 2^(2-p)|x - y|^p  (Euclidean |.|).

    Non-negative for p >= 2 up to rounding.
    """
    if p < 2.0:
        raise DomainError("plug_gap requires p >= 2")
    x = _finite_vector(x)
    y = _finite_vector(y)
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    ax = x * nx ** (p - 2.0) if nx > 0 else np.zeros_like(x)
    ay = y * ny ** (p - 2.0) if ny > 0 else np.zeros_like(y)
    d = x - y
    return float(np.dot(ax - ay, d)) - 2.0 ** (2.0 - p) * float(np.linalg.norm(d)) ** p


def eval_inf_laplacian(grad, hess, tau: float = DEFAULT_TIE_TOL) -> float:
    """Orthotropic infinity-Laplacian: sum over maximal-gradient coordinates
    of u_j^2 u_jj. Zero gradient returns 0."""
    g = _finite_vector(grad).ravel()
    H = _finite_vector(hess)
    if not np.any(g):
        return 0.0
    idx = sorted(max_index_set(g, tau))
    return float(sum(g[j] ** 2 * H[j, j] for j in idx))


def eval_F_p(p: float, grad, hess) -> float:
    """F_p(xi, X) = -sum_j (p-1)|xi_j|^(p-2) X_jj."""
    if p <= 1.0:
        raise DomainError("F_p requires p > 1")
    g = _finite_vector(grad).ravel()
    H = _finite_vector(hess)
    diag = np.diag(H)
    if not np.any(diag):
        return 0.0
    w = abs_power(g, p - 2.0)
    return float(-(p - 1.0) * np.sum(w * diag))


def eval_B_p(p: float, sigma: float, nu, u: float, grad) -> float:
    """Steklov boundary operator sum_j |xi_j|^(p-2) xi_j nu_j - sigma |u|^(p-2) u rho_p(nu)."""
    if p <= 1.0:
        raise DomainError("B_p requires p > 1")
    rho = rho_weight(nu, p)
    g = _finite_vector(grad).ravel()
    nu = np.asarray(nu, dtype=float)
    flux = float(np.dot(signed_power(g, p), nu))
    return flux - sigma * float(signed_power(u, p)) * rho


def directional_sum(eta, nu, tau: float = DEFAULT_TIE_TOL) -> float:
    """sum over j in I(eta) of eta_j nu_j; 0 when eta = 0."""
    e = _finite_vector(eta).ravel()
    if not np.any(e):
        return 0.0
    nu = np.asarray(nu, dtype=float).ravel()
    return float(sum(e[j] * nu[j] for j in sorted(max_index_set(e, tau))))


def eval_Lambda(sigma_inf: float, nu, u: float, eta, tau: float = DEFAULT_TIE_TOL) -> float:
    """Three-branch boundary operator of the limit (p = inf) Steklov problem."""
    nu = _finite_vector(nu)
    if abs(float(np.linalg.norm(nu)) - 1.0) > UNIT_TOL:
        raise DomainError("normal is not a Euclidean unit vector")
    ds = directional_sum(eta, nu, tau)
    if u == 0.0:
        return ds
    gap = lp_norm(eta, math.inf) - sigma_inf * abs(u)
    if u > 0.0:
        return min(gap, ds)
    return max(-gap, ds)
