"""Convex bodies and their anisotropic geometric functionals.

Planar bodies are stored as counterclockwise vertex lists and every
functional is evaluated exactly on the polygon. In higher dimension only
boxes and the cross-polytope (the l^1 ball) are available, in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import ConvexHull
from scipy.special import gammaln

from .errors import DomainError, NumericalFailure, UnsupportedConfigurationError
from .lp_core import ExponentLike, as_exponent, dual_exponent, lp_norm_rows
from .segment import power_integral


class ConvexBody:
    """Common base; concrete kinds are :class:`Polygon`, :class:`Box`, :class:`CrossPolytope`."""

    dim: int

    def translate(self, t) -> "ConvexBody":
        raise NotImplementedError

    def scale(self, s: float) -> "ConvexBody":
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Polygon(ConvexBody):
    """Strictly convex planar polygon; ``vertices`` are counterclockwise."""

    vertices: np.ndarray
    label: str = "polygon"
    dim: int = field(default=2, init=False)

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise DomainError("polygon vertices must be an (n, 2) array")
        if len(v) < 3:
            raise DomainError("polygon needs at least 3 vertices")
        if not np.all(np.isfinite(v)):
            raise DomainError("non-finite polygon vertex")
        e = np.roll(v, -1, axis=0) - v
        if np.any(np.all(e == 0.0, axis=1)):
            raise DomainError("repeated polygon vertex")
        cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if np.all(cross < 0):
            v = v[::-1].copy()
            e = np.roll(v, -1, axis=0) - v
            cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
        if not np.all(cross > 0):
            raise DomainError("vertices are not in strictly convex order")
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        if _shoelace(v) <= 0:
            raise DomainError("polygon has non-positive area")

    @property
    def n(self) -> int:
        return len(self.vertices)

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.hypot(self.edge_vectors[:, 0], self.edge_vectors[:, 1])

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Outward Euclidean unit normals, one per edge (v_i -> v_{i+1})."""
        e = self.edge_vectors
        return np.column_stack([e[:, 1], -e[:, 0]]) / self.edge_lengths[:, None]

    @cached_property
    def centroid(self) -> np.ndarray:
        v = self.vertices
        w = np.roll(v, -1, axis=0)
        c = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        a = 0.5 * c.sum()
        return np.array([((v[:, 0] + w[:, 0]) * c).sum(), ((v[:, 1] + w[:, 1]) * c).sum()]) / (6 * a)

    def translate(self, t) -> "Polygon":
        return Polygon(self.vertices + np.asarray(t, float), label=self.label)

    def scale(self, s: float) -> "Polygon":
        return Polygon(self.vertices * float(s), label=self.label)

    def transform(self, A) -> "Polygon":
        """Image under a linear map (orientation is repaired if A flips it)."""
        return Polygon(self.vertices @ np.asarray(A, float).T, label=self.label)

    def contains(self, x, strict: bool = True) -> bool:
        x = np.asarray(x, float)
        d = self.edge_vectors
        rel = x[None, :] - self.vertices
        cr = d[:, 0] * rel[:, 1] - d[:, 1] * rel[:, 0]
        return bool(np.all(cr > 0) if strict else np.all(cr >= 0))


@dataclass(frozen=True, eq=False)
class Box(ConvexBody):
    """Axis-aligned box with the given half-widths about ``center``."""

    half_widths: np.ndarray
    center: np.ndarray | None = None
    label: str = "box"

    def __post_init__(self):
        h = np.array(self.half_widths, dtype=float).ravel()
        if h.size < 2:
            raise DomainError("box needs dimension >= 2")
        if not np.all(h > 0) or not np.all(np.isfinite(h)):
            raise DomainError("box half-widths must be positive and finite")
        c = np.zeros_like(h) if self.center is None else np.array(self.center, dtype=float).ravel()
        if c.shape != h.shape:
            raise DomainError("box center has the wrong dimension")
        object.__setattr__(self, "half_widths", h)
        object.__setattr__(self, "center", c)

    @property
    def dim(self) -> int:
        return len(self.half_widths)

    def translate(self, t) -> "Box":
        return Box(self.half_widths, self.center + np.asarray(t, float), label=self.label)

    def scale(self, s: float) -> "Box":
        return Box(self.half_widths * s, self.center * s, label=self.label)

    def to_polygon(self) -> Polygon:
        if self.dim != 2:
            raise UnsupportedConfigurationError("only planar boxes convert to polygons")
        hx, hy = self.half_widths
        v = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]]) + self.center
        return Polygon(v, label=self.label)


@dataclass(frozen=True, eq=False)
class CrossPolytope(ConvexBody):
    """l^1 ball {x : ||x - center||_1 <= radius} in R^N."""

    dim: int
    radius: float = 1.0
    center: np.ndarray | None = None
    label: str = "l1_ball"

    def __post_init__(self):
        if self.dim < 2:
            raise DomainError("cross-polytope needs dimension >= 2")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise DomainError("radius must be positive and finite")
        c = np.zeros(self.dim) if self.center is None else np.array(self.center, float).ravel()
        if c.shape != (self.dim,):
            raise DomainError("center has the wrong dimension")
        object.__setattr__(self, "center", c)

    def translate(self, t) -> "CrossPolytope":
        return CrossPolytope(self.dim, self.radius, self.center + np.asarray(t, float), self.label)

    def scale(self, s: float) -> "CrossPolytope":
        return CrossPolytope(self.dim, self.radius * s, self.center * s, self.label)

    def to_polygon(self) -> Polygon:
        if self.dim != 2:
            raise UnsupportedConfigurationError("only the planar l^1 ball converts to a polygon")
        r = self.radius
        v = np.array([[r, 0.0], [0.0, r], [-r, 0.0], [0.0, -r]]) + self.center
        return Polygon(v, label=self.label)


# ---------------------------------------------------------------- construction


def _shoelace(v: np.ndarray) -> float:
    w = np.roll(v, -1, axis=0)
    return 0.5 * float(np.sum(v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]))


def regular_polygon(sides: int, circumradius: float = 1.0, center=(0.0, 0.0),
                    rotation: float = 0.0) -> Polygon:
    if sides < 3:
        raise DomainError("regular polygon needs >= 3 sides")
    th = rotation + 2 * np.pi * np.arange(sides) / sides
    v = circumradius * np.column_stack([np.cos(th), np.sin(th)]) + np.asarray(center, float)
    return Polygon(v, label=f"regular_{sides}")


def lp_ball_polygon(p: float, radius: float = 1.0, vertices: int = 512, center=(0.0, 0.0)) -> Polygon:
    """Inscribed polygon of the planar l^p ball, equal-angle samples of ||x||_p = radius.

    The sample set contains the four axis points, so the approximation keeps
    the symmetries of the ball when ``vertices`` is a multiple of 4.
    """
    p = as_exponent(p)
    th = 2 * np.pi * np.arange(vertices) / vertices
    d = np.column_stack([np.cos(th), np.sin(th)])
    d[np.abs(d) < 1e-15] = 0.0
    pts = radius * d / lp_norm_rows(d, p)[:, None] + np.asarray(center, float)
    return Polygon(_strictly_convex(pts), label=f"W_{p:g}_approx{vertices}")


def _strictly_convex(pts: np.ndarray) -> np.ndarray:
    """Drop (near-)collinear points from a ccw convex point cycle."""
    keep = list(range(len(pts)))
    changed = True
    while changed and len(keep) > 3:
        changed = False
        out = []
        n = len(keep)
        for k in range(n):
            a, b, c = pts[keep[k - 1]], pts[keep[k]], pts[keep[(k + 1) % n]]
            cr = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            scale = np.hypot(*(b - a)) * np.hypot(*(c - b))
            if cr > 1e-13 * scale:
                out.append(keep[k])
            else:
                changed = True
        keep = out
    return pts[keep]


def make_ball(p: ExponentLike, dim: int = 2, radius: float = 1.0, vertices: int = 512,
              center=None) -> ConvexBody:
    """The l^p ball of the given radius; exact for p in {1, inf}."""
    p = as_exponent(p)
    if dim < 2:
        raise DomainError("dimension must be >= 2")
    if radius <= 0:
        raise DomainError("radius must be positive")
    c = np.zeros(dim) if center is None else np.asarray(center, float)
    if math.isinf(p):
        b = Box(np.full(dim, float(radius)), c, label="W_inf")
        return b.to_polygon() if dim == 2 else b
    if p == 1.0:
        b = CrossPolytope(dim, float(radius), c, label="W_1")
        return b.to_polygon() if dim == 2 else b
    if dim != 2:
        raise UnsupportedConfigurationError(f"l^{p:g} ball in dimension {dim} is not representable")
    return lp_ball_polygon(p, radius, vertices, c)


def random_polygon(seed: int, points: int | None = None, max_tries: int = 1000) -> Polygon:
    """Convex hull of uniform points in [-1, 1]^2, reproducible from ``seed``.

    The point count is drawn from [6, 40] unless given. Hulls with fewer than
    three vertices or area below 1e-3 are redrawn from the same stream.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        k = int(rng.integers(6, 41)) if points is None else int(points)
        pts = rng.uniform(-1.0, 1.0, size=(k, 2))
        try:
            hull = ConvexHull(pts)
        except Exception:  # qhull rejects degenerate inputs
            continue
        v = _strictly_convex(pts[hull.vertices])
        if len(v) >= 3 and _shoelace(v) >= 1e-3:
            return Polygon(v, label=f"random_{seed}")
    raise NumericalFailure(f"no admissible random polygon for seed {seed}")


def as_polygon(body: ConvexBody) -> Polygon | None:
    if isinstance(body, Polygon):
        return body
    if body.dim == 2 and hasattr(body, "to_polygon"):
        return body.to_polygon()
    return None


# ---------------------------------------------------------------- l^p ball reference values


def ball_volume(p: ExponentLike, dim: int) -> float:
    """V(W_p) = (2 Gamma(1 + 1/p))^N / Gamma(1 + N/p); 2^N at p = inf."""
    p = as_exponent(p)
    if math.isinf(p):
        return 2.0 ** dim
    if p == 1.0:
        return 2.0 ** dim / math.factorial(dim)
    return math.exp(dim * (math.log(2.0) + gammaln(1 + 1 / p)) - gammaln(1 + dim / p))


def ball_perimeter(p: ExponentLike, dim: int) -> float:
    """P_p(W_p) = N V(W_p)."""
    return dim * ball_volume(p, dim)


def ball_shape_functional(p: float, dim: int) -> float:
    """I_p(W_p) = V(W_p)^(-p/N), from M_p(W_p) = P_p(W_p)."""
    return ball_volume(p, dim) ** (-p / dim)


# ---------------------------------------------------------------- functionals


def volume(body: ConvexBody) -> float:
    poly = as_polygon(body)
    if poly is not None:
        return _shoelace(poly.vertices)
    if isinstance(body, Box):
        return float(np.prod(2 * body.half_widths))
    if isinstance(body, CrossPolytope):
        return 2.0 ** body.dim * body.radius ** body.dim / math.factorial(body.dim)
    raise UnsupportedConfigurationError(type(body).__name__)


def anisotropic_perimeter(body: ConvexBody, p: ExponentLike) -> float:
    """P_p = boundary integral of ||nu||_{p'}."""
    p = as_exponent(p)
    poly = as_polygon(body)
    if poly is not None:
        # length * ||nu||_{p'} = ||edge rotated by 90 deg||_{p'} = ||edge||_{p'}
        return float(lp_norm_rows(poly.edge_vectors, dual_exponent(p)).sum())
    N = body.dim
    if isinstance(body, Box):
        fa = np.prod(2 * body.half_widths) / (2 * body.half_widths)
        return float(2 * fa.sum())
    if isinstance(body, CrossPolytope):
        q = dual_exponent(p)
        nq = 1.0 if math.isinf(q) else N ** (1.0 / q)
        return 2.0 ** N * body.radius ** (N - 1) * nq / math.factorial(N - 1)
    raise UnsupportedConfigurationError(type(body).__name__)


def _polygon_coordinate_moments(poly: Polygon, p: float, shift=(0.0, 0.0)) -> np.ndarray:
    """Per-coordinate boundary integrals int |x_i - shift_i|^p rho_p dH, shape (2,)."""
    v = poly.vertices - np.asarray(shift, float)
    w = np.roll(v, -1, axis=0)
    weight = lp_norm_rows(poly.edge_vectors, dual_exponent(p))
    return np.array([float(np.dot(weight, power_integral(v[:, i], w[:, i], p))) for i in range(2)])


def coordinate_moments(body: ConvexBody, p: float) -> np.ndarray:
    """int_{boundary} |x_i|^p rho_p dH for each coordinate i (about the origin)."""
    p = as_exponent(p, allow_one=False)
    if math.isinf(p):
        raise DomainError("boundary momentum needs finite p")
    poly = as_polygon(body)
    if poly is not None:
        return _polygon_coordinate_moments(poly, p)
    if isinstance(body, Box):
        return _box_coordinate_moments(body, p)
    if isinstance(body, CrossPolytope):
        if np.any(body.center != 0):
            raise UnsupportedConfigurationError("momentum of an off-center cross-polytope in N >= 3")
        N, r = body.dim, body.radius
        q = dual_exponent(p)
        rho = (1.0 if math.isinf(q) else N ** (1.0 / q)) / math.sqrt(N)
        # each of 2^N facets: sqrt(N) * r^(p+N-1) Gamma(p+1) / Gamma(p+N) per coordinate
        per = 2.0 ** N * math.sqrt(N) * r ** (p + N - 1) * math.exp(gammaln(p + 1) - gammaln(p + N)) * rho
        return np.full(N, per)
    raise UnsupportedConfigurationError(type(body).__name__)


def _box_coordinate_moments(body: Box, p: float) -> np.ndarray:
    h, c = body.half_widths, body.center
    lo, hi = c - h, c + h
    N = body.dim
    side = 2 * h
    # int_{lo_j}^{hi_j} |x|^p dx
    line = (np.sign(hi) * np.abs(hi) ** (p + 1) - np.sign(lo) * np.abs(lo) ** (p + 1)) / (p + 1)
    out = np.zeros(N)
    for i in range(N):
        for k in range(N):  # facets x_k = lo_k, hi_k
            area = np.prod(np.delete(side, k))
            if i == k:
                out[i] += area * (abs(lo[k]) ** p + abs(hi[k]) ** p)
            else:
                out[i] += 2 * area / side[i] * line[i]
    return out


def boundary_momentum(body: ConvexBody, p: float) -> float:
    """M_p = boundary integral of ||x||_p^p rho_p (about the origin)."""
    return float(coordinate_moments(body, p).sum())


def l1_diameter(body: ConvexBody) -> float:
    poly = as_polygon(body)
    if poly is not None:
        v = poly.vertices
        return float(np.abs(v[:, None, :] - v[None, :, :]).sum(axis=2).max())
    if isinstance(body, Box):
        return float(2 * body.half_widths.sum())
    if isinstance(body, CrossPolytope):
        return 2.0 * body.radius
    raise UnsupportedConfigurationError(type(body).__name__)


def sigma_infty(body: ConvexBody) -> float:
    """Limit eigenvalue 2 / diam_1."""
    return 2.0 / l1_diameter(body)


def boundary_p_center(body: ConvexBody, p: float, tol: float = 1e-10, max_iter: int = 200) -> np.ndarray:
    """Translation c such that ``body.translate(-c)`` has
    int |x_i|^(p-2) x_i rho_p dH = 0 for every coordinate i.

    Each coordinate equation only involves its own shift and is strictly
    monotone in it, so coordinates are solved independently by bracketed
    root finding.
    """
    p = as_exponent(p, allow_one=False)
    if isinstance(body, (Box, CrossPolytope)) and as_polygon(body) is None:
        return body.center.copy()  # centrally symmetric about its center
    poly = as_polygon(body)
    if poly is None:
        raise UnsupportedConfigurationError(type(body).__name__)
    v = poly.vertices
    w = np.roll(v, -1, axis=0)
    weight = lp_norm_rows(poly.edge_vectors, dual_exponent(p))
    c = np.zeros(2)
    for i in range(2):
        a, b = v[:, i], w[:, i]

        def resid(t, a=a, b=b):
            return float(np.dot(weight, power_integral(a - t, b - t, p - 1.0, odd=True)))

        def slope(t, a=a, b=b):
            return -(p - 1.0) * float(np.dot(weight, power_integral(a - t, b - t, p - 2.0))) if p > 2 else None

        scale = float(np.dot(weight, power_integral(a, b, p - 1.0))) + 1e-300
        c[i] = monotone_root(resid, float(a.min()), float(a.max()), scale=scale, tol=tol,
                             max_iter=max_iter, slope=slope if p > 2 else None)
    return c


def monotone_root(f, lo: float, hi: float, scale: float = 1.0, tol: float = 1e-12,
                  max_iter: int = 200, slope=None) -> float:
    """Root of a strictly decreasing f on [lo, hi] (f(lo) >= 0 >= f(hi)).

    Bisection, accelerated by Newton steps from ``slope`` when they stay
    inside the current bracket. Stops when |f| <= tol * scale or the bracket
    collapses to rounding.
    """
    flo, fhi = f(lo), f(hi)
    if flo < 0 or fhi > 0:
        raise NumericalFailure("root is not bracketed")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        fx = f(x)
        if abs(fx) <= tol * scale:
            return x
        if fx > 0:
            lo = x
        else:
            hi = x
        if hi - lo <= 4 * np.finfo(float).eps * max(abs(lo), abs(hi), 1e-300):
            return x
        nxt = 0.5 * (lo + hi)
        if slope is not None:
            d = slope(x)
            if d is not None and d < 0:
                xn = x - fx / d
                if lo < xn < hi:
                    nxt = xn
        x = nxt
    raise NumericalFailure("monotone root finder did not converge")


@dataclass(frozen=True)
class UpperBound:
    """Coordinate-function bounds on Sigma_p^p for a p-centered body."""

    bound: float             # N V / M_p
    per_coordinate: float    # min_i V / int |x_i|^p rho_p
    center: np.ndarray


def coordinate_upper_bound(body: ConvexBody, p: float) -> UpperBound:
    """Bounds on Sigma_p^p from the coordinate test functions, after p-centering."""
    c = boundary_p_center(body, p)
    moments = coordinate_moments(body.translate(-c), p)
    V = volume(body)
    return UpperBound(body.dim * V / float(moments.sum()), float(V / moments.max()), c)


def shape_functional(body: ConvexBody, p: float, center: bool = True) -> float:
    """I_p = M_p / (P_p V^(p/N)), by default evaluated on the p-centered body."""
    if center:
        body = body.translate(-boundary_p_center(body, p))
    return boundary_momentum(body, p) / (anisotropic_perimeter(body, p) * volume(body) ** (p / body.dim))


@dataclass(frozen=True)
class GeometricSummary:
    p: float
    volume: float
    perimeter_p: float
    momentum_p: float | None
    diam1: float
    shape_Ip: float | None
    sigma_infty: float


def summarize(body: ConvexBody, p: ExponentLike) -> GeometricSummary:
    """All functionals at one exponent; M_p and I_p are for the p-centered body
    and are ``None`` at p = inf or p = 1."""
    p = as_exponent(p)
    mp = ip = None
    if 1.0 < p < math.inf:
        centered = body.translate(-boundary_p_center(body, p))
        mp = boundary_momentum(centered, p)
        ip = shape_functional(centered, p, center=False)
    return GeometricSummary(p, volume(body), anisotropic_perimeter(body, p), mp,
                            l1_diameter(body), ip, sigma_infty(body))


def l1_widths(poly: Polygon, directions: int = 3600) -> np.ndarray:
    """l^1 distance between the two supporting lines orthogonal to each direction.

    The grid is merged with the edge-normal directions, where widths of a
    polygon attain their extremes.
    """
    th = np.concatenate([np.pi * np.arange(directions) / directions,
                         np.mod(np.arctan2(poly.edge_normals[:, 1], poly.edge_normals[:, 0]), np.pi)])
    d = np.column_stack([np.cos(th), np.sin(th)])
    proj = poly.vertices @ d.T
    euclid = proj.max(axis=0) - proj.min(axis=0)
    return euclid / np.abs(d).max(axis=1)
