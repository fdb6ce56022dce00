"""P1 finite elements for the first non-trivial orthotropic Steklov eigenvalue.

The discrete problem is

    Sigma_p^p = min  int ||grad u||_p^p dx / int_{bdry} |u|^p rho_p dH
                s.t. int_{bdry} |u|^(p-2) u rho_p dH = 0

over continuous piecewise-linear u. Volume terms are exact because P1
gradients are constant per triangle; boundary terms are exact because the
trace is linear on each boundary edge (see :mod:`orthosteklov.segment`).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg

from .bodies import Polygon, l1_diameter, monotone_root, sigma_infty, volume
from .errors import DegenerateInputError, DomainError, NumericalFailure
from .lp_core import DEFAULT_TIE_TOL, dual_exponent, eval_Lambda, lp_norm_rows
from .mesh import TriMesh, triangulate
from .segment import power_integral, power_integral_grad

log = logging.getLogger(__name__)

P_MAX = 64.0


@dataclass(frozen=True, eq=False)
class ScalarField:
    values: np.ndarray
    mesh: TriMesh = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.mesh.nodes),):
            raise DomainError("field needs one value per mesh node")
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite field values")
        object.__setattr__(self, "values", v)

    def gradients(self) -> np.ndarray:
        """Constant P1 gradient on each triangle, shape (T, 2)."""
        m = self.mesh
        return np.einsum("tik,tk->ti", m.gradient_operators, self.values[m.triangles])

    def boundary_values(self) -> np.ndarray:
        return self.values[self.mesh.boundary_nodes]


@dataclass
class SpectralResult:
    p: float
    sigma_p: float
    sigma_p_pow_p: float
    field: ScalarField
    constraint_residual: float   # |M_p[u]| / int |u|^(p-1) rho_p
    normalization_residual: float  # |(1/V) int |u|^p rho_p - 1|
    iterations: int
    converged: bool
    method: str = ""
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "sigma_p": self.sigma_p,
            "sigma_p_pow_p": self.sigma_p_pow_p,
            "constraint_residual": self.constraint_residual,
            "normalization_residual": self.normalization_residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "method": self.method,
            "nodes": int(len(self.field.mesh.nodes)),
            "triangles": int(len(self.field.mesh.triangles)),
            "h": self.field.mesh.h,
        }


# ---------------------------------------------------------------- discrete functionals


def _check_p(p: float) -> float:
    p = float(p)
    if not p > 1.0:
        raise DomainError("p must be > 1")
    if math.isinf(p):
        raise DomainError("p = inf has no FEM problem; use the geometric limit 2/diam_1")
    if p > P_MAX:
        raise DomainError(f"p > {P_MAX:g} is outside the double-precision range of the FEM solver")
    return p


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


def boundary_weights(mesh: TriMesh, p: float) -> np.ndarray:
    """Edge length times rho_p of the edge normal, i.e. ||edge||_{p'}."""
    return lp_norm_rows(mesh.boundary_vectors, dual_exponent(p))


def energy(mesh: TriMesh, u, p: float) -> float:
    """int ||grad u||_p^p over the mesh (exact for P1)."""
    g = ScalarField(_values(u), mesh).gradients()
    return float(np.dot(mesh.areas, np.sum(np.abs(g) ** p, axis=1)))


def boundary_term(mesh: TriMesh, u, p: float) -> float:
    """int_{bdry} |u|^p rho_p dH (exact for a piecewise-linear trace)."""
    v = _values(u)
    b = mesh.boundary
    return float(np.dot(boundary_weights(mesh, p), power_integral(v[b[:, 0]], v[b[:, 1]], p)))


def boundary_constraint(mesh: TriMesh, u, p: float) -> float:
    """M_p[u] = int_{bdry} |u|^(p-2) u rho_p dH."""
    v = _values(u)
    b = mesh.boundary
    return float(np.dot(boundary_weights(mesh, p), power_integral(v[b[:, 0]], v[b[:, 1]], p - 1.0, odd=True)))


def rayleigh_quotient(mesh: TriMesh, u, p: float) -> float:
    B = boundary_term(mesh, u, p)
    if B <= 0:
        raise DegenerateInputError("field vanishes on the boundary")
    return energy(mesh, u, p) / B


def recenter(mesh: TriMesh, u, p: float, tol: float = 1e-12) -> float:
    """Shift c with M_p[u - c] = 0; c -> M_p[u - c] is strictly decreasing."""
    v = _values(u)
    b = mesh.boundary
    w = boundary_weights(mesh, p)
    a0, b0 = v[b[:, 0]], v[b[:, 1]]
    lo, hi = float(v[b[:, 0]].min()), float(v[b[:, 0]].max())
    if hi - lo <= 1e-14 * max(abs(lo), abs(hi), 1e-300):
        raise DegenerateInputError("constant boundary trace cannot be recentered")

    def resid(c):
        return float(np.dot(w, power_integral(a0 - c, b0 - c, p - 1.0, odd=True)))

    def slope(c):
        return -(p - 1.0) * float(np.dot(w, power_integral(a0 - c, b0 - c, p - 2.0)))

    scale = float(np.dot(w, power_integral(a0 - 0.5 * (lo + hi), b0 - 0.5 * (lo + hi), p - 1.0)))
    return monotone_root(resid, lo, hi, scale=scale, tol=tol, slope=slope)


def _constraint_scale(mesh: TriMesh, v: np.ndarray, p: float) -> float:
    b = mesh.boundary
    return float(np.dot(boundary_weights(mesh, p), power_integral(v[b[:, 0]], v[b[:, 1]], p - 1.0)))


def _diagnose(mesh: TriMesh, v: np.ndarray, p: float):
    V = volume(mesh.polygon)
    E = energy(mesh, v, p)
    B = boundary_term(mesh, v, p)
    M = boundary_constraint(mesh, v, p)
    return E / B, abs(M) / _constraint_scale(mesh, v, p), abs(B / V - 1.0)


class _Functional:
    """log R_p on the constraint set, written as an unconstrained function.

    f(u) = log E(u) - log B(u - c(u)) with c(u) the recentering shift. The
    chain-rule term through c(u) is a multiple of M_p[u - c(u)] = 0, so the
    gradient is E'(u)/E - B'(w)/B with w = u - c(u).
    """

    def __init__(self, mesh: TriMesh, p: float):
        self.mesh = mesh
        self.p = p
        T = len(mesh.triangles)
        n = len(mesh.nodes)
        D = mesh.gradient_operators
        rows = np.concatenate([np.repeat(np.arange(T), 3), T + np.repeat(np.arange(T), 3)])
        cols = np.concatenate([mesh.triangles.ravel(), mesh.triangles.ravel()])
        data = np.concatenate([D[:, 0, :].ravel(), D[:, 1, :].ravel()])
        self.G = sp.csr_matrix((data, (rows, cols)), shape=(2 * T, n))
        self.GT = self.G.T.tocsr()
        self.area2 = np.concatenate([mesh.areas, mesh.areas])
        self.weights = boundary_weights(mesh, p)
        self.n = n
        self.evaluations = 0

    def energy_and_grad(self, u):
        p = self.p
        g = self.G @ u
        ag = np.abs(g)
        E = float(np.dot(self.area2, ag ** p))
        dE = self.GT @ (self.area2 * p * np.sign(g) * ag ** (p - 1.0))
        return E, dE

    def boundary_and_grad(self, w):
        b = self.mesh.boundary
        I, Ia, Ib = power_integral_grad(w[b[:, 0]], w[b[:, 1]], self.p)
        B = float(np.dot(self.weights, I))
        dB = (np.bincount(b[:, 0], self.weights * Ia, minlength=self.n)
              + np.bincount(b[:, 1], self.weights * Ib, minlength=self.n))
        return B, dB

    def __call__(self, u):
        self.evaluations += 1
        c = recenter(self.mesh, u, self.p)
        w = u - c
        E, dE = self.energy_and_grad(u)
        B, dB = self.boundary_and_grad(w)
        if E <= 0 or B <= 0:
            raise DegenerateInputError("degenerate field during descent")
        return math.log(E) - math.log(B), dE / E - dB / B, c, B


# ---------------------------------------------------------------- p = 2: linear problem


def assemble_stiffness(mesh: TriMesh) -> sp.csr_matrix:
    D = mesh.gradient_operators
    Ke = np.einsum("t,tik,til->tkl", mesh.areas, D, D)
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = len(mesh.nodes)
    return sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n, n))


def assemble_boundary_mass(mesh: TriMesh, weights=None) -> sp.csr_matrix:
    """Consistent 1-D mass matrix on the boundary; ``weights`` default to edge lengths."""
    L = mesh.boundary_lengths if weights is None else weights
    b = mesh.boundary
    n = len(mesh.nodes)
    rows = np.concatenate([b[:, 0], b[:, 1], b[:, 0], b[:, 1]])
    cols = np.concatenate([b[:, 0], b[:, 1], b[:, 1], b[:, 0]])
    data = np.concatenate([L / 3, L / 3, L / 6, L / 6])
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def solve_sigma2(mesh: TriMesh, seed: int = 0, block: int = 3, tol: float = 1e-10,
                 cg_rtol: float = 1e-10, max_iter: int = 500) -> SpectralResult:
    """Smallest non-trivial eigenpair of K u = sigma M_b u by block inverse iteration.

    Iterates live in the M_b-orthogonal complement of the constants; each
    step solves K X = M_b X column-wise by Jacobi-preconditioned CG and is
    followed by a Rayleigh-Ritz projection onto the block.
    """
    K = assemble_stiffness(mesh)
    Mb = assemble_boundary_mass(mesh)
    n = K.shape[0]
    ones = np.ones(n)
    m1 = Mb @ ones
    mass1 = float(ones @ m1)
    dinv = 1.0 / K.diagonal()
    prec = LinearOperator((n, n), matvec=lambda x: dinv * x)

    def project(X):
        return X - np.outer(ones, (m1 @ X) / mass1)

    rng = np.random.default_rng(seed)
    X = project(rng.standard_normal((n, block)))
    sigma_old = math.inf
    sigma = math.nan
    ritz = np.ones(block)
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        Y = np.empty_like(X)
        B = Mb @ X
        for k in range(block):
            # K^-1 M_b x ~ x / sigma near an eigenvector
            y, info = cg(K, B[:, k], x0=X[:, k] / ritz[k], rtol=cg_rtol, maxiter=20 * n, M=prec)
            if info != 0:
                raise NumericalFailure(f"CG did not converge (info={info})")
            Y[:, k] = y
        Y = project(Y)
        A = Y.T @ (K @ Y)
        Bm = Y.T @ (Mb @ Y)
        A = 0.5 * (A + A.T)
        Bm = 0.5 * (Bm + Bm.T)
        vals, vecs = scipy.linalg.eigh(A, Bm)
        X = Y @ vecs
        X /= np.sqrt(np.einsum("ik,ik->k", X, Mb @ X))[None, :]
        ritz = np.maximum(vals, 1e-300)
        sigma = float(vals[0])
        u = X[:, 0]
        res = np.linalg.norm(K @ u - sigma * (Mb @ u)) / max(np.linalg.norm(K @ u), 1e-300)
        if abs(sigma - sigma_old) <= tol * abs(sigma) and res < 1e-7:
            converged = True
            break
        sigma_old = sigma
    if not converged:
        raise NumericalFailure("inverse iteration did not converge")
    u = X[:, 0]
    V = volume(mesh.polygon)
    u = u * math.sqrt(V / boundary_term(mesh, u, 2.0))
    u = u - recenter(mesh, u, 2.0)
    R, cres, nres = _diagnose(mesh, u, 2.0)
    return SpectralResult(2.0, math.sqrt(R), R, ScalarField(u, mesh), cres, nres, it, converged,
                          method="block-inverse-iteration")


# ---------------------------------------------------------------- general p: descent


def _retract(fun: _Functional, u: np.ndarray, V: float):
    """Recenter and normalize so that (1/V) int |u|^p rho_p = 1."""
    c = recenter(fun.mesh, u, fun.p)
    w = u - c
    B, _ = fun.boundary_and_grad(w)
    lam = (V / B) ** (1.0 / fun.p)
    return lam * w, lam


def solve_sigma_p(mesh: TriMesh, p: float, init, tol: float = 1e-10, max_iter: int = 10_000,
                  memory: int = 12, patience: int = 3) -> SpectralResult:
    """Minimize R_p over the constraint set, starting from ``init``.

    Descent on log R_p with limited-memory quasi-Newton directions and
    Armijo backtracking. After each step the iterate is recentered and
    rescaled to the normalization (1/V) int |u|^p rho_p = 1; both maps leave
    R_p unchanged. Stops once the relative change of R_p stays below ``tol``
    for ``patience`` consecutive steps.
    """
    p = _check_p(p)
    fun = _Functional(mesh, p)
    V = volume(mesh.polygon)
    u = _values(init).copy()
    if u.shape != (fun.n,):
        raise DomainError("init has the wrong length")
    u, _ = _retract(fun, u, V)
    f, g, _, _ = fun(u)
    S: list[np.ndarray] = []
    Y: list[np.ndarray] = []
    history = [math.exp(f)]
    quiet = 0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        d = _lbfgs_direction(g, S, Y)
        slope = float(g @ d)
        if not slope < 0:
            S.clear()
            Y.clear()
            d = _lbfgs_direction(g, S, Y)
            slope = float(g @ d)
        if not S:
            d *= 1e-2 * np.linalg.norm(u) / max(np.linalg.norm(d), 1e-300)
            slope = float(g @ d)
        alpha = 1.0
        ok = False
        for _ in range(60):
            trial = u + alpha * d
            try:
                f_new, g_new, _, _ = fun(trial)
            except (DegenerateInputError, NumericalFailure):
                alpha *= 0.5
                continue
            if f_new <= f + 1e-4 * alpha * slope:
                ok = True
                break
            alpha *= 0.5
        if not ok:
            # no descent possible at rounding level: a stationary point
            converged = (f - history[-1] == 0.0) or _grad_small(g, u)
            break
        s = alpha * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
        u, lam = _retract(fun, trial, V)
        # f is 0-homogeneous: grad at lam*x is grad(x)/lam; shift-invariant
        S[:] = [lam * s_ for s_ in S]
        Y[:] = [y_ / lam for y_ in Y]
        g = g_new / lam
        rel = abs(math.exp(f_new) - math.exp(f)) / math.exp(f)
        f = f_new
        history.append(math.exp(f))
        quiet = quiet + 1 if rel < tol else 0
        if quiet >= patience:
            converged = True
            break
    R, cres, nres = _diagnose(mesh, u, p)
    if not converged:
        log.warning("solve_sigma_p(p=%g) stopped after %d iterations without converging", p, it)
    return SpectralResult(p, R ** (1.0 / p), R, ScalarField(u, mesh), cres, nres, it, converged,
                          method="lbfgs-armijo", history=history)


def _grad_small(g, u) -> bool:
    return float(np.linalg.norm(g) * np.linalg.norm(u)) < 1e-9


def _lbfgs_direction(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / float(y @ s)
        a = rho * float(s @ q)
        alphas.append((rho, a))
        q -= a * y
    if S:
        q *= float(S[-1] @ Y[-1]) / float(Y[-1] @ Y[-1])
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * float(y @ q)
        q += (a - b) * s
    return -q


# ---------------------------------------------------------------- sweeps and candidates


@dataclass
class SweepResult:
    results: list
    target_sigma_infty: float
    fit_sigma_infty: float | None = None
    fit_slope: float | None = None
    fit_residual: float | None = None
    holdout_residual: float | None = None  # model misfit at the largest p left out of the fit
    fit_points: tuple = ()
    complete: bool = True
    monotone: bool = True
    error: str | None = None


def fit_inverse_p(ps, sigmas):
    """Least-squares fit sigma ~ s_inf + c/p; returns (s_inf, c, rms residual)."""
    ps = np.asarray(ps, float)
    sg = np.asarray(sigmas, float)
    A = np.column_stack([np.ones_like(ps), 1.0 / ps])
    coef, *_ = np.linalg.lstsq(A, sg, rcond=None)
    resid = sg - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def sweep_p(polygon: Polygon, p_list, h: float | None = None, mesh: TriMesh | None = None,
            seed: int = 0, tol: float = 1e-10, max_iter: int = 10_000,
            monotone_tol: float = 1e-6) -> SweepResult:
    """Continuation in p from the linear p = 2 eigenfield, then a 1/p extrapolation
    of Sigma_p over the upper half of the sweep.

    The upper half is the floor(n/2) largest exponents (at least two), i.e. the
    points strictly above the median for odd n.
    """
    ps = [float(p) for p in p_list]
    if not ps or ps[0] != 2.0:
        raise DomainError("p_list must start at 2")
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise DomainError("p_list must be strictly ascending")
    for p in ps:
        _check_p(p)
    if mesh is None:
        if h is None:
            raise DomainError("give a mesh or a mesh size h")
        mesh = triangulate(polygon, h)
    out = SweepResult([], sigma_infty(polygon))
    prev = solve_sigma2(mesh, seed=seed)
    out.results.append(prev)
    for p in ps[1:]:
        res = solve_sigma_p(mesh, p, prev.field, tol=tol, max_iter=max_iter)
        out.results.append(res)
        if not res.converged:
            out.complete = False
            out.error = f"solve at p={p:g} did not converge"
            break
        prev = res
    sig = [r.sigma_p for r in out.results]
    out.monotone = all(b <= a + monotone_tol for a, b in zip(sig, sig[1:]))
    if out.complete and len(ps) >= 2:
        k = max(2, len(ps) // 2)
        out.fit_points = tuple(ps[-k:])
        out.fit_sigma_infty, out.fit_slope, out.fit_residual = fit_inverse_p(ps[-k:], sig[-k:])
        if len(ps) > k:
            p_out = ps[-k - 1]
            pred = out.fit_sigma_infty + out.fit_slope / p_out
            out.holdout_residual = float(sig[-k - 1] - pred)
    return out


def distance_candidate(polygon: Polygon, mesh: TriMesh, x0, p: float):
    """Interpolant of d_1(., x0) shifted into the constraint set, and R_p^(1/p) of it.

    Any admissible field bounds the discrete minimum from above.
    """
    p = _check_p(p)
    x0 = np.asarray(x0, float)
    if not polygon.contains(x0, strict=True):
        raise DomainError("x0 must lie strictly inside the polygon")
    d = np.abs(mesh.nodes - x0[None, :]).sum(axis=1)
    w = d - recenter(mesh, d, p)
    return ScalarField(w, mesh), rayleigh_quotient(mesh, w, p) ** (1.0 / p)


# ---------------------------------------------------------------- diagnostics


@dataclass(frozen=True)
class LipschitzCheck:
    boundary_oscillation: float   # max over boundary node pairs of |u(x) - u(y)|
    bound: float                  # max_T ||grad u||_inf * diam_1
    holds: bool


def lipschitz_check(u: ScalarField, slack: float = 1e-10) -> LipschitzCheck:
    bv = u.boundary_values()
    osc = float(bv.max() - bv.min())
    gmax = float(np.abs(u.gradients()).max())
    bound = gmax * l1_diameter(u.mesh.polygon)
    return LipschitzCheck(osc, bound, osc <= bound + slack)


def lambda_diagnostics(u: ScalarField, sigma_inf: float | None = None, tau: float = DEFAULT_TIE_TOL):
    """Lambda(x, u, grad u) at boundary-edge midpoints, using the gradient of the
    triangle that owns each edge. Returns (midpoints, u values, Lambda values)."""
    mesh = u.mesh
    if sigma_inf is None:
        sigma_inf = sigma_infty(mesh.polygon)
    owner = _boundary_owner(mesh)
    grads = u.gradients()[owner]
    b = mesh.boundary
    mids = 0.5 * (mesh.nodes[b[:, 0]] + mesh.nodes[b[:, 1]])
    uv = 0.5 * (u.values[b[:, 0]] + u.values[b[:, 1]])
    normals = mesh.boundary_normals
    lam = np.array([eval_Lambda(sigma_inf, nu, float(val), g, tau)
                    for nu, val, g in zip(normals, uv, grads)])
    return mids, uv, lam


def _boundary_owner(mesh: TriMesh) -> np.ndarray:
    t = mesh.triangles
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    owner = np.concatenate([np.arange(len(t))] * 3)
    lookup = {(int(a), int(b)): int(k) for (a, b), k in zip(edges, owner)}
    return np.array([lookup[(int(a), int(b))] for a, b in mesh.boundary])
