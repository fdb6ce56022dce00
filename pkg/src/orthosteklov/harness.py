"""Slack checks for the Brock-Weinstock, Weinstock, isodiametric,
Rosenthal-Szasz and isoperimetric inequalities, and the campaign runner.

Every check is written as lhs <= rhs; ``slack = rhs - lhs`` and a record
passes iff ``slack >= -tolerance``. Geometry-only checks use an absolute
tolerance; checks that consume an FEM eigenvalue use a tolerance relative
to |rhs| because discretization error dominates there.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import io as oio
from .bodies import (ConvexBody, anisotropic_perimeter, as_polygon, ball_perimeter, ball_shape_functional,
                     ball_volume, coordinate_upper_bound, l1_diameter, l1_widths, shape_functional,
                     sigma_infty, volume)
from .config import CampaignConfig, Tolerances
from .errors import DomainError, OrthoSteklovError
from .lp_core import as_exponent

log = logging.getLogger(__name__)

GEOMETRY_TOL = 1e-9
FEM_REL_TOL = 1e-4
THREADS_ENV = "ORTHOSTEKLOV_THREADS"
REPORT_FORMAT = "orthosteklov.campaign-report"
REPORT_VERSION = 1


@dataclass
class CheckRecord:
    name: str
    lhs: float | None
    rhs: float | None
    slack: float | None
    tolerance: float
    passed: bool | None
    params: dict
    body_id: str = ""
    seed: int | None = None
    source: str = "analytic"     # analytic | fem | coordinate_bound
    tol_mode: str = "absolute"   # absolute | relative
    asserted: bool = True        # False: reported only, never counted as a failure
    status: str = "ok"           # ok | skipped | error
    equality: bool | None = None
    note: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.asserted and (self.status == "error" or self.passed is False)

    def sort_key(self):
        pr = self.params
        return (self.name, _num_key(pr.get("p")), _num_key(pr.get("r")), _num_key(pr.get("q")), self.source)


def _num_key(x):
    return -math.inf if x is None else float(x)


def _record(name, lhs, rhs, tol, params, tol_mode="absolute", **kw) -> CheckRecord:
    slack = rhs - lhs
    budget = tol * abs(rhs) if tol_mode == "relative" else tol
    return CheckRecord(name, lhs, rhs, slack, budget, bool(slack >= -budget), params, tol_mode=tol_mode, **kw)


# ---------------------------------------------------------------- FEM access


class FemCounter:
    """Counts eigenvalue solves so geometry-only runs can prove none happened."""

    calls = 0

    @classmethod
    def reset(cls):
        cls.calls = 0


def fem_sigma_pow_p(body: ConvexBody, p: float, h_rel: float = 0.05, seed: int = 0,
                    max_iter: int = 10_000):
    """Discrete Sigma_p^p on a uniform mesh with h = h_rel * Euclidean diameter.

    p = 2 is the linear problem; other p continue from it through doubling
    exponents. Returns the final :class:`SpectralResult`.
    """
    from .mesh import triangulate
    from .steklov import solve_sigma2, solve_sigma_p

    poly = as_polygon(body)
    if poly is None:
        raise DomainError("FEM eigenvalues need a planar body")
    FemCounter.calls += 1
    v = poly.vertices
    diam = float(np.sqrt(((v[:, None, :] - v[None, :, :]) ** 2).sum(axis=2)).max())
    mesh = triangulate(poly, h_rel * diam)
    res = solve_sigma2(mesh, seed=seed)
    ladder = [q for q in (4.0, 8.0, 16.0, 32.0) if q < p]
    for q in ladder + ([float(p)] if p != 2 else []):
        res = solve_sigma_p(mesh, q, res.field, max_iter=max_iter)
        if not res.converged:
            break
    return res


# ---------------------------------------------------------------- checks


def _step_relation(p, q, r, N):
    if not (0.0 <= r <= N):
        raise DomainError(f"r = {r} outside [0, {N}]")
    if q < 0:
        raise DomainError("q must be non-negative")
    if abs(p / N - (q + r / N)) > 1e-12:
        raise DomainError("parameters violate p/N = q + r/N")


def check_step(body: ConvexBody, p: float, q: float, r: float, sigma_pow_p: float | None = None,
               bound_only: bool = False, tol: float | None = None, fem_options: dict | None = None,
               fem_result=None) -> CheckRecord:
    """Sigma_p^p P_p^((r-1)/(N-1)) V^q <= P_p(W_p)^((r-1)/(N-1)) V(W_p)^q."""
    p = float(as_exponent(p, allow_one=False))
    if math.isinf(p):
        raise DomainError("the step inequality needs finite p")
    N = body.dim
    _step_relation(p, q, r, N)
    diag = {}
    if sigma_pow_p is not None:
        source = "given"
    elif bound_only:
        sigma_pow_p = coordinate_upper_bound(body, p).bound
        source = "coordinate_bound"
    else:
        res = fem_result or fem_sigma_pow_p(body, p, **(fem_options or {}))
        sigma_pow_p = res.sigma_p_pow_p
        source = "fem"
        diag = _fem_diag(res)
    e = (r - 1.0) / (N - 1.0)
    lhs = sigma_pow_p * anisotropic_perimeter(body, p) ** e * volume(body) ** q
    rhs = ball_perimeter(p, N) ** e * ball_volume(p, N) ** q
    rel = source == "fem"
    if tol is None:
        tol = FEM_REL_TOL if rel else GEOMETRY_TOL
    rec = _record("step", lhs, rhs, tol, {"p": p, "q": q, "r": r}, "relative" if rel else "absolute",
                  source=source, diagnostics=diag)
    notes = []
    if r == N:
        # the proof divides by N - r; the statement includes the endpoint
        rec.asserted = False
        notes.append("r = N endpoint: reported, not asserted")
    if source == "coordinate_bound":
        notes.append("consistency probe with the coordinate upper bound")
    if diag and not diag.get("converged", True):
        rec.status = "error"
        notes.append("FEM solve did not converge")
    rec.note = "; ".join(notes)
    return rec


def check_weinstock_p(body: ConvexBody, p: float, sigma_pow_p: float | None = None,
                      tol: float | None = None, fem_options: dict | None = None, fem_result=None) -> CheckRecord:
    """Sigma_p^p P_p^((p-1)/(N-1)) <= P_p(W_p)^((p-1)/(N-1)), for 1 < p <= N."""
    N = body.dim
    p = float(p)
    if not 1.0 < p <= N:
        raise DomainError(f"Weinstock-type check needs 1 < p <= N = {N}")
    diag = {}
    if sigma_pow_p is None:
        res = fem_result or fem_sigma_pow_p(body, p, **(fem_options or {}))
        sigma_pow_p = res.sigma_p_pow_p
        source = "fem"
        diag = _fem_diag(res)
    else:
        source = "given"
    e = (p - 1.0) / (N - 1.0)
    lhs = sigma_pow_p * anisotropic_perimeter(body, p) ** e
    rhs = ball_perimeter(p, N) ** e
    rel = source == "fem"
    if tol is None:
        tol = FEM_REL_TOL if rel else GEOMETRY_TOL
    rec = _record("weinstock", lhs, rhs, tol, {"p": p}, "relative" if rel else "absolute",
                  source=source, diagnostics=diag)
    if diag and not diag.get("converged", True):
        rec.status = "error"
        rec.note = "FEM solve did not converge"
    return rec


def check_isodiametric(body: ConvexBody, tol: float = GEOMETRY_TOL, eq_tol: float = 1e-12) -> CheckRecord:
    """Sigma_inf V^(1/N) <= Sigma_inf(W_1) V(W_1)^(1/N) = V(W_1)^(1/N)."""
    N = body.dim
    lhs = sigma_infty(body) * volume(body) ** (1.0 / N)
    rhs = ball_volume(1, N) ** (1.0 / N)
    rec = _record("isodiametric", lhs, rhs, tol, {"p": math.inf})
    rec.equality = abs(rec.slack) < eq_tol
    return rec


def check_rosenthal_szasz(body: ConvexBody, tol: float = GEOMETRY_TOL, eq_tol: float = 1e-12,
                          width_tol: float = 1e-9, directions: int = 3600) -> CheckRecord:
    """Sigma_inf P_inf <= Sigma_inf(W_1) P_inf(W_1) = 8 in the plane.

    ``equality`` is the constant-width test: every l^1 width on the direction
    grid equals diam_1 to ``width_tol`` relative.
    """
    if body.dim != 2:
        raise DomainError("Rosenthal-Szasz check is planar only")
    poly = as_polygon(body)
    lhs = sigma_infty(poly) * anisotropic_perimeter(poly, math.inf)
    # W_1: diam_1 = 2, so Sigma_inf = 1; P_inf = sum of ||edge||_1 = 4 * 2
    rhs = 1.0 * ball_perimeter_inf_w1()
    rec = _record("rosenthal_szasz", lhs, rhs, tol, {"p": math.inf})
    d1 = l1_diameter(poly)
    w = l1_widths(poly, directions)
    spread = float(np.max(np.abs(w - d1)) / d1)
    rec.equality = spread <= width_tol
    rec.diagnostics = {"width_spread": spread, "slack_zero": abs(rec.slack) < eq_tol}
    return rec


def ball_perimeter_inf_w1() -> float:
    """P_inf(W_1) in the plane, from the exact cross-polygon."""
    from .bodies import make_ball

    return anisotropic_perimeter(make_ball(1, 2), math.inf)


def check_isoperimetric(body: ConvexBody, p, tol: float = GEOMETRY_TOL) -> CheckRecord:
    """V^(1-1/N) / P_p <= V(W_p)^(1-1/N) / P_p(W_p)."""
    p = as_exponent(p)
    N = body.dim
    lhs = volume(body) ** (1 - 1 / N) / anisotropic_perimeter(body, p)
    rhs = ball_volume(p, N) ** (1 - 1 / N) / ball_perimeter(p, N)
    return _record("isoperimetric", lhs, rhs, tol, {"p": float(p)})


def check_shape_functional(body: ConvexBody, p: float, tol: float = GEOMETRY_TOL) -> CheckRecord:
    """I_p(W_p) <= I_p(body), I_p taken on the p-centered body (its minimum over translations)."""
    p = float(p)
    if not 1.0 < p < math.inf:
        raise DomainError("shape functional needs 1 < p < inf")
    lhs = ball_shape_functional(p, body.dim)
    rhs = shape_functional(body, p, center=True)
    return _record("shape_functional", lhs, rhs, tol, {"p": p})


def _fem_diag(res) -> dict:
    d = res.to_dict()
    return {k: d[k] for k in ("sigma_p_pow_p", "constraint_residual", "normalization_residual",
                              "iterations", "converged", "nodes", "h", "method")}


def default_step_grid(p: float, N: int, r_values=None):
    """(q, r) pairs with q = (p - r)/N >= 0, from r in {0, 1/2, 1, min(p, N)}."""
    rs = r_values if r_values is not None else [0.0, 0.5, 1.0, min(p, N)]
    out = []
    for r in sorted(set(float(x) for x in rs)):
        q = (p - r) / N
        if 0 <= r <= N and q >= -1e-15:
            out.append((max(q, 0.0), r))
    return out


# ---------------------------------------------------------------- campaign


@dataclass
class InequalityReport:
    body_id: str
    seed: int | None
    kind: str
    records: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    fem_solves: int = 0

    def to_dict(self) -> dict:
        return {
            "body_id": self.body_id,
            "seed": self.seed,
            "kind": self.kind,
            "fem_solves": self.fem_solves,
            "errors": list(self.errors),
            "records": [_rec_dict(r) for r in self.records],
        }


def _rec_dict(r: CheckRecord) -> dict:
    d = asdict(r)
    d.pop("body_id")
    d.pop("seed")
    return d


@dataclass
class CampaignResult:
    config: CampaignConfig
    reports: list

    @property
    def records(self):
        return [r for rep in self.reports for r in rep.records]

    @property
    def fem_solves(self) -> int:
        return sum(rep.fem_solves for rep in self.reports)

    def failures(self):
        return [r for r in self.records if r.failed]

    def errors(self):
        return [(rep.body_id, e) for rep in self.reports for e in rep.errors]

    def summary(self) -> dict:
        mins: dict = {}
        for r in self.records:
            if r.slack is None:
                continue
            key = r.name if r.source != "coordinate_bound" else r.name + "_bound_probe"
            mins[key] = min(mins.get(key, math.inf), r.slack)
        return {
            "bodies": len(self.reports),
            "records": len(self.records),
            "failures": [{"body_id": r.body_id, "check": r.name, "params": r.params, "slack": r.slack}
                         for r in self.failures()],
            "errors": [{"body_id": b, "error": e} for b, e in self.errors()],
            "min_slack": mins,
            "skipped": sum(1 for r in self.records if r.status == "skipped"),
            "not_asserted": sum(1 for r in self.records if not r.asserted),
            "fem_solves": self.fem_solves,
        }

    def to_dict(self, timestamp: str | None = None) -> dict:
        body = {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "config": self.config.to_dict(),
            "summary": self.summary(),
            "bodies": [rep.to_dict() for rep in self.reports],
        }
        # the hash covers everything except the timestamp
        body["content_sha256"] = hashlib.sha256(oio.to_json(body).encode()).hexdigest()
        if timestamp is not None:
            body["timestamp"] = timestamp
        return body

    def to_json(self, timestamp: str | None = None) -> str:
        return oio.to_json(self.to_dict(timestamp))

    CSV_HEADER = ("body_id", "seed", "check", "p", "q", "r", "source", "lhs", "rhs", "slack",
                  "tolerance", "tol_mode", "passed", "asserted", "equality", "status", "note")

    def to_csv(self) -> str:
        rows = []
        for r in self.records:
            pr = r.params
            rows.append((r.body_id, r.seed, r.name, pr.get("p"), pr.get("q"), pr.get("r"), r.source,
                         r.lhs, r.rhs, r.slack, r.tolerance, r.tol_mode, r.passed, r.asserted,
                         r.equality, r.status, r.note))
        return oio.to_csv(self.CSV_HEADER, rows)

    def write(self, out_dir, timestamp: str | None = None):
        os.makedirs(out_dir, exist_ok=True)
        jp = os.path.join(out_dir, "report.json")
        cp = os.path.join(out_dir, "slacks.csv")
        oio.atomic_write(jp, self.to_json(timestamp))
        oio.atomic_write(cp, self.to_csv())
        return jp, cp


def evaluate_body(entry, cfg: CampaignConfig) -> InequalityReport:
    """All applicable checks for one body. Failures of sub-operations are recorded, never raised."""
    FemCounter.reset()
    rep = InequalityReport(entry.body_id, entry.seed, entry.spec.kind)
    tol: Tolerances = cfg.tolerances
    try:
        body = entry.spec.build()
    except OrthoSteklovError as exc:
        rep.errors.append(f"{type(exc).__name__}: {exc}")
        return rep
    fem_opts = {"h_rel": cfg.fem_h_rel, "seed": cfg.fem_seed, "max_iter": cfg.fem_max_iter}
    N = body.dim
    recs = []

    def attempt(name, params, fn):
        try:
            out = fn()
        except OrthoSteklovError as exc:
            msg = f"{type(exc).__name__}: {exc}"
            rep.errors.append(f"{name} {params}: {msg}")
            recs.append(CheckRecord(name, None, None, None, 0.0, None, params, status="error", note=msg))
            return
        if out is not None:
            recs.extend(out if isinstance(out, list) else [out])

    checks = set(cfg.checks)
    if "isodiametric" in checks:
        attempt("isodiametric", {}, lambda: check_isodiametric(body, tol.geometry, tol.equality))
    if "rosenthal_szasz" in checks and N == 2:
        attempt("rosenthal_szasz", {}, lambda: check_rosenthal_szasz(body, tol.geometry, tol.equality, tol.width))
    for p in cfg.p_list:
        if "isoperimetric" in checks:
            attempt("isoperimetric", {"p": p}, lambda p=p: check_isoperimetric(body, p, tol.geometry))
        if "shape_functional" in checks and math.isfinite(p):
            attempt("shape_functional", {"p": p}, lambda p=p: check_shape_functional(body, p, tol.geometry))
    fem_checks = [c for c in ("step", "weinstock") if c in checks]
    for p in cfg.fem_p_list if fem_checks else []:
        if cfg.bound_probe and "step" in checks:
            for q, r in default_step_grid(p, N, cfg.step_r):
                attempt("step", {"p": p, "q": q, "r": r},
                        lambda p=p, q=q, r=r: check_step(body, p, q, r, bound_only=True, tol=tol.geometry))
        if cfg.geometry_only or N != 2:
            why = "geometry-only mode" if cfg.geometry_only else "FEM is planar only"
            if "step" in checks:
                for q, r in default_step_grid(p, N, cfg.step_r):
                    recs.append(CheckRecord("step", None, None, None, tol.fem, None, {"p": p, "q": q, "r": r},
                                            source="fem", tol_mode="relative", status="skipped", note=why))
            if "weinstock" in checks and 1 < p <= N:
                recs.append(CheckRecord("weinstock", None, None, None, tol.fem, None, {"p": p},
                                        source="fem", tol_mode="relative", status="skipped", note=why))
            continue
        try:
            res = fem_sigma_pow_p(body, p, **fem_opts)
        except OrthoSteklovError as exc:
            rep.errors.append(f"fem p={p}: {type(exc).__name__}: {exc}")
            recs.append(CheckRecord("fem_solve", None, None, None, 0.0, None, {"p": p}, status="error",
                                    note=f"{type(exc).__name__}: {exc}"))
            continue
        if "step" in checks:
            for q, r in default_step_grid(p, N, cfg.step_r):
                attempt("step", {"p": p, "q": q, "r": r},
                        lambda p=p, q=q, r=r: check_step(body, p, q, r, tol=tol.fem, fem_result=res))
        if "weinstock" in checks and 1 < p <= N:
            attempt("weinstock", {"p": p}, lambda p=p: check_weinstock_p(body, p, tol=tol.fem, fem_result=res))
    for r in recs:
        r.body_id = entry.body_id
        r.seed = entry.seed
    rep.records = sorted(recs, key=CheckRecord.sort_key)
    rep.fem_solves = FemCounter.calls
    return rep


def _eval_star(args):
    return evaluate_body(*args)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise DomainError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run_campaign(cfg: CampaignConfig, out_dir=None, workers: int | None = None,
                 timestamp: str | None = None) -> CampaignResult:
    """Evaluate every body; the result order is the config order whatever the worker count."""
    n = worker_count() if workers is None else max(1, int(workers))
    jobs = [(entry, cfg) for entry in cfg.bodies]
    if n > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n) as ex:
            reports = list(ex.map(_eval_star, jobs))
    else:
        reports = [evaluate_body(*j) for j in jobs]
    result = CampaignResult(cfg, reports)
    if out_dir is not None:
        result.write(out_dir, timestamp)
    return result
