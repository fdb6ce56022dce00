"""Command-line front end.

Exit codes: 0 success, 1 check failures, 2 input errors, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from datetime import datetime, timezone
from importlib import resources

import numpy as np

from . import __version__
from . import io as oio
from .bodies import ConvexBody, as_polygon, coordinate_upper_bound, l1_diameter, summarize
from .config import load_campaign, load_shape
from .errors import (DomainError, NumericalFailure, ResourceError, ShapeSpecError,
                     UnsupportedConfigurationError)
from .lp_core import as_exponent

EXIT_OK, EXIT_CHECKS, EXIT_INPUT, EXIT_NUMERICAL = 0, 1, 2, 3
SWEEP_FORMAT = "orthosteklov.sweep"
SOLVE_FORMAT = "orthosteklov.solve"

log = logging.getLogger("orthosteklov")


def default_campaign_path(name: str = "default_campaign.yaml"):
    return resources.files("orthosteklov").joinpath("configs", name)


def _exponent_list(text: str, allow_inf: bool = True) -> list[float]:
    try:
        ps = [as_exponent(t, allow_one=False) for t in text.replace(",", " ").split()]
    except (DomainError, ValueError) as exc:
        raise ShapeSpecError(str(exc), "--p-list") from exc
    if not ps:
        raise ShapeSpecError("empty exponent list", "--p-list")
    if not allow_inf and any(math.isinf(p) for p in ps):
        raise ShapeSpecError("p = inf has no FEM problem; 'describe' reports the geometric limit", "--p-list")
    return ps


def _positive(name):
    def conv(s):
        try:
            x = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number") from None
        if not x > 0 or not math.isfinite(x):
            raise argparse.ArgumentTypeError(f"{name} must be positive")
        return x
    return conv


def _non_negative(name):
    def conv(s):
        try:
            x = float(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{name} must be a number") from None
        if not x >= 0 or not math.isfinite(x):
            raise argparse.ArgumentTypeError(f"{name} must be non-negative")
        return x
    return conv


def _emit(text: str, out: str | None):
    if out:
        oio.atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _planar(body: ConvexBody):
    poly = as_polygon(body)
    if poly is None:
        raise UnsupportedConfigurationError("FEM solves need a planar body (N = 2)")
    return poly


# ---------------------------------------------------------------- commands


DESCRIBE_HEADER = ("p", "volume", "perimeter_p", "momentum_p", "shape_Ip", "diam1", "sigma_infty")


def cmd_describe(args) -> int:
    spec = load_shape(args.shape)
    body = spec.build()
    ps = _exponent_list(args.p_list)
    rows = []
    for p in ps:
        s = summarize(body, p)
        rows.append((p, s.volume, s.perimeter_p, s.momentum_p, s.shape_Ip, s.diam1, s.sigma_infty))
    if args.out and args.out.endswith(".json"):
        text = oio.to_json({"format": "orthosteklov.describe", "version": 1, "shape": spec.label,
                            "rows": [dict(zip(DESCRIBE_HEADER, r)) for r in rows]})
    else:
        text = oio.to_csv(DESCRIBE_HEADER, rows)
    _emit(text, args.out)
    return EXIT_OK


def _continuation(mesh, p: float, seed: int, tol: float, max_iter: int):
    from .steklov import solve_sigma2, solve_sigma_p

    res = solve_sigma2(mesh, seed=seed)
    stages = [res]
    for q in [q for q in (4.0, 8.0, 16.0, 32.0) if q < p] + ([p] if p != 2.0 else []):
        res = solve_sigma_p(mesh, q, res.field, tol=tol, max_iter=max_iter)
        stages.append(res)
        if not res.converged:
            break
    return stages


def cmd_solve(args) -> int:
    from .mesh import triangulate
    from .steklov import lipschitz_check

    spec = load_shape(args.shape)
    poly = _planar(spec.build())
    p = as_exponent(args.p, allow_one=False)
    if math.isinf(p):
        raise DomainError("p = inf has no FEM problem; the limit Sigma_inf = 2/diam_1 is printed by 'describe'")
    mesh = triangulate(poly, args.h)
    stages = _continuation(mesh, p, args.seed, args.tol_solver, args.max_iter)
    res = stages[-1]
    lip = lipschitz_check(res.field)
    doc = {
        "format": SOLVE_FORMAT,
        "version": 1,
        "shape": spec.label,
        "p": p,
        "h_target": args.h,
        "result": res.to_dict(),
        "continuation": [s.p for s in stages],
        "lipschitz": {"boundary_oscillation": lip.boundary_oscillation, "bound": lip.bound, "holds": lip.holds},
    }
    if args.out:
        oio.atomic_write(args.out, oio.to_json(doc))
    if args.field_csv:
        x = mesh.nodes
        oio.atomic_write(args.field_csv, oio.to_csv(("x", "y", "u"), zip(x[:, 0], x[:, 1], res.field.values)))
    print(f"sigma_p        {oio.fmt_float(res.sigma_p)}")
    print(f"sigma_p^p      {oio.fmt_float(res.sigma_p_pow_p)}")
    print(f"iterations     {res.iterations}  converged={str(res.converged).lower()}")
    print(f"constraint     {oio.fmt_float(res.constraint_residual)}")
    print(f"normalization  {oio.fmt_float(res.normalization_residual)}")
    if not res.converged:
        print(f"error: solve at p={p:g} did not converge", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


SWEEP_HEADER = ("p", "sigma_p", "sigma_p_pow_p", "coord_upper_bound", "distance_candidate_bound",
                "target_sigma_infty", "fit_sigma_infty", "fit_residual", "status")


def distance_anchor(poly) -> np.ndarray:
    """Interior point next to an endpoint of an l^1 diameter, where d_1 reaches furthest."""
    v = poly.vertices
    d = np.abs(v[:, None, :] - v[None, :, :]).sum(axis=2)
    i, _ = np.unravel_index(int(np.argmax(d)), d.shape)
    return v[i] + 0.01 * (poly.centroid - v[i])


def sweep_rows(poly, sweep, p_list, mesh) -> list[tuple]:
    from .steklov import distance_candidate

    x0 = distance_anchor(poly)
    rows = []
    done = {r.p: r for r in sweep.results}
    for p in p_list:
        r = done.get(float(p))
        ub = coordinate_upper_bound(poly, p).bound ** (1.0 / p)
        _, dc = distance_candidate(poly, mesh, x0, p)
        if r is None:
            status = "not_run"
        else:
            status = "ok" if r.converged else "not_converged"
        rows.append((p, None if r is None else r.sigma_p, None if r is None else r.sigma_p_pow_p, ub, dc,
                     sweep.target_sigma_infty, sweep.fit_sigma_infty, sweep.fit_residual, status))
    return rows


def cmd_sweep(args) -> int:
    from .mesh import triangulate
    from .steklov import SweepResult, solve_sigma2, sweep_p

    spec = load_shape(args.shape)
    poly = _planar(spec.build())
    ps = _exponent_list(args.p_list, allow_inf=False)
    mesh = triangulate(poly, args.h)
    if len(ps) == 1 and ps[0] == 2.0:
        sweep = SweepResult([solve_sigma2(mesh, seed=args.seed)], 2.0 / l1_diameter(poly))
    else:
        sweep = sweep_p(poly, ps, mesh=mesh, seed=args.seed, tol=args.tol_solver, max_iter=args.max_iter)
    rows = sweep_rows(poly, sweep, ps, mesh)
    _emit(oio.to_csv(SWEEP_HEADER, rows), args.out)
    if args.out:
        fit = "none" if sweep.fit_sigma_infty is None else oio.fmt_float(sweep.fit_sigma_infty)
        print(f"target sigma_inf  {oio.fmt_float(sweep.target_sigma_infty)}")
        print(f"fitted sigma_inf  {fit}")
    if not sweep.complete:
        print(f"error: {sweep.error}; partial sweep written", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_campaign(args) -> int:
    from .harness import run_campaign

    cfg = load_campaign(args.config or default_campaign_path())
    if args.geometry_only:
        cfg.geometry_only = True
    if args.tol_geometry is not None:
        cfg.tolerances.geometry = args.tol_geometry
    if args.tol_fem is not None:
        cfg.tolerances.fem = args.tol_fem
    if args.seed is not None:
        # shift every random body to a new seed block
        from .config import BodyEntry, ShapeSpec
        shifted = []
        for b in cfg.bodies:
            if b.spec.kind == "random":
                s = b.seed + args.seed
                shifted.append(BodyEntry(f"random_{s}", s, ShapeSpec("random", {**b.spec.params, "seed": s},
                                                                     f"random_{s}")))
            else:
                shifted.append(b)
        cfg.bodies = shifted
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds") if args.timestamp else None
    result = run_campaign(cfg, out_dir=args.out, timestamp=stamp)
    if not args.out:
        sys.stdout.write(result.to_json(stamp))
    s = result.summary()
    print(f"bodies={s['bodies']} records={s['records']} failures={len(s['failures'])} "
          f"errors={len(s['errors'])} fem_solves={s['fem_solves']}", file=sys.stderr)
    for f in s["failures"]:
        print(f"FAIL {f['body_id']} {f['check']} {f['params']} slack={oio.fmt_float(f['slack'])}",
              file=sys.stderr)
    for e in s["errors"]:
        print(f"ERROR {e['body_id']}: {e['error']}", file=sys.stderr)
    if any("NumericalFailure" in e["error"] or "ResourceError" in e["error"] for e in s["errors"]):
        return EXIT_NUMERICAL
    if any(r.status == "error" and r.source == "fem" for r in result.records):
        # a solve that stopped short without raising
        return EXIT_NUMERICAL
    return EXIT_CHECKS if s["failures"] or s["errors"] else EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="orthosteklov", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="command", required=True)

    d = sub.add_parser("describe", help="geometric functionals of a shape")
    d.add_argument("--shape", required=True, help="shape document (YAML/JSON)")
    d.add_argument("--p-list", default="2", help="exponents, comma separated; 'inf' allowed")
    d.add_argument("--out", help="write CSV (or JSON if the name ends in .json)")
    d.set_defaults(func=cmd_describe)

    def fem_flags(sp):
        sp.add_argument("--shape", required=True, help="shape document (YAML/JSON)")
        sp.add_argument("--h", type=_positive("--h"), default=0.05, help="target mesh size")
        sp.add_argument("--seed", type=int, default=0, help="seed of the p = 2 start vectors")
        sp.add_argument("--tol-solver", type=_positive("--tol-solver"), default=1e-10,
                        help="relative change of R_p that stops the descent")
        sp.add_argument("--max-iter", type=int, default=10_000)

    s = sub.add_parser("solve", help="Sigma_p and eigenfield on one shape")
    fem_flags(s)
    s.add_argument("--p", required=True, help="exponent > 1")
    s.add_argument("--out", help="JSON result file")
    s.add_argument("--field-csv", help="nodal field CSV (x, y, u)")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="continuation in p with 1/p extrapolation")
    fem_flags(w)
    w.add_argument("--p-list", default="2,4,8,16,32", help="ascending exponents starting at 2")
    w.add_argument("--out", help="CSV file (stdout if omitted)")
    w.set_defaults(func=cmd_sweep)

    c = sub.add_parser("campaign", help="inequality campaign from a config document")
    c.add_argument("config", nargs="?", help="campaign document (default: the shipped config)")
    c.add_argument("--out", help="directory for report.json and slacks.csv")
    c.add_argument("--geometry-only", action="store_true", help="skip every FEM-backed check")
    c.add_argument("--seed", type=int, help="offset added to every random-body seed")
    c.add_argument("--tol-geometry", type=_non_negative("--tol-geometry"))
    c.add_argument("--tol-fem", type=_non_negative("--tol-fem"))
    c.add_argument("--timestamp", action="store_true", help="add a timestamp field (excluded from the hash)")
    c.set_defaults(func=cmd_campaign)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ShapeSpecError, DomainError, UnsupportedConfigurationError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (NumericalFailure, ResourceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
