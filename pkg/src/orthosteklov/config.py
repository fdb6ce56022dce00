"""Versioned shape and campaign documents (YAML or JSON).

A shape document::

    version: 1
    kind: regular_polygon     # polygon | box | lp_ball | random
    sides: 6
    circumradius: 1.0
    center: [0, 0]            # optional

A campaign document lists bodies, exponents, checks and tolerances; see
``configs/default_campaign.yaml`` for a complete example. Every validation
error names the offending field (``bodies[3].shape.vertices[2]``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .bodies import Box, ConvexBody, Polygon, make_ball, random_polygon, regular_polygon
from .errors import DomainError, ShapeSpecError, UnsupportedConfigurationError

SCHEMA_VERSION = 1
SHAPE_KINDS = ("regular_polygon", "polygon", "box", "lp_ball", "random")
CHECK_NAMES = ("isoperimetric", "isodiametric", "rosenthal_szasz", "shape_functional", "step", "weinstock")


def load_document(path) -> dict:
    """Parse a YAML (or JSON, which YAML accepts) file into a mapping."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ShapeSpecError(f"cannot read file: {exc.strerror}", str(path)) from exc
    return parse_document(text, str(path))


def parse_document(text: str, source: str = "<string>") -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        loc = f"{source}:line {mark.line + 1}" if mark is not None else source
        raise ShapeSpecError(f"malformed document ({getattr(exc, 'problem', None) or exc})", loc) from exc
    if not isinstance(doc, dict):
        raise ShapeSpecError("document must be a mapping", source)
    return doc


def _check_version(doc: dict, where: str):
    if "version" not in doc:
        raise ShapeSpecError(f"missing schema version (expected {SCHEMA_VERSION})", _join(where, "version"))
    if doc["version"] != SCHEMA_VERSION:
        raise ShapeSpecError(f"unsupported version {doc['version']!r} (expected {SCHEMA_VERSION})",
                             _join(where, "version"))


def _join(where: str, key) -> str:
    if isinstance(key, int):
        return f"{where}[{key}]"
    return f"{where}.{key}" if where else str(key)


def _number(v, where: str, positive: bool = False, allow_inf: bool = False) -> float:
    if isinstance(v, str) and allow_inf and v.strip().lower() in ("inf", "infinity", "+inf"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ShapeSpecError(f"expected a number, got {v!r}", where)
    x = float(v)
    if math.isnan(x) or (math.isinf(x) and not allow_inf):
        raise ShapeSpecError("expected a finite number", where)
    if positive and not x > 0:
        raise ShapeSpecError("must be positive", where)
    return x


def _integer(v, where: str, minimum: int | None = None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ShapeSpecError(f"expected an integer, got {v!r}", where)
    if minimum is not None and v < minimum:
        raise ShapeSpecError(f"must be >= {minimum}", where)
    return int(v)


def _point(v, where: str, dim: int | None = None) -> list[float]:
    if not isinstance(v, (list, tuple)):
        raise ShapeSpecError("expected a list of coordinates", where)
    if dim is not None and len(v) != dim:
        raise ShapeSpecError(f"expected {dim} coordinates, got {len(v)}", where)
    return [_number(c, _join(where, k)) for k, c in enumerate(v)]


def _known_keys(doc: dict, allowed, where: str):
    for k in doc:
        if k not in allowed:
            raise ShapeSpecError(f"unknown field (allowed: {', '.join(sorted(allowed))})", _join(where, k))


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    params: dict
    label: str

    def build(self) -> ConvexBody:
        return _build_shape(self)


def parse_shape(doc: dict, where: str = "", require_version: bool = True) -> ShapeSpec:
    if not isinstance(doc, dict):
        raise ShapeSpecError("shape must be a mapping", where or None)
    if require_version:
        _check_version(doc, where)
    kind = doc.get("kind")
    if kind not in SHAPE_KINDS:
        raise ShapeSpecError(f"kind must be one of {', '.join(SHAPE_KINDS)}", _join(where, "kind"))
    common = {"version", "kind", "center", "label"}
    p = {}
    if kind == "regular_polygon":
        _known_keys(doc, common | {"sides", "circumradius", "rotation"}, where)
        p["sides"] = _integer(doc.get("sides"), _join(where, "sides"), minimum=3)
        p["circumradius"] = _number(doc.get("circumradius", 1.0), _join(where, "circumradius"), positive=True)
        p["rotation"] = _number(doc.get("rotation", 0.0), _join(where, "rotation"))
    elif kind == "polygon":
        _known_keys(doc, common | {"vertices"}, where)
        verts = doc.get("vertices")
        w = _join(where, "vertices")
        if not isinstance(verts, list) or len(verts) < 3:
            raise ShapeSpecError("expected a list of at least 3 vertices", w)
        p["vertices"] = [_point(v, _join(w, k), 2) for k, v in enumerate(verts)]
    elif kind == "box":
        _known_keys(doc, common | {"N", "half_widths"}, where)
        hw = doc.get("half_widths")
        w = _join(where, "half_widths")
        if isinstance(hw, (int, float)) and not isinstance(hw, bool):
            N = _integer(doc.get("N", 2), _join(where, "N"), minimum=2)
            hw = [hw] * N
        if not isinstance(hw, list):
            raise ShapeSpecError("expected a list of half-widths", w)
        p["half_widths"] = [_number(x, _join(w, k), positive=True) for k, x in enumerate(hw)]
        if "N" in doc and _integer(doc["N"], _join(where, "N"), minimum=2) != len(hw):
            raise ShapeSpecError("N does not match the number of half-widths", _join(where, "N"))
        if len(p["half_widths"]) < 2:
            raise ShapeSpecError("need at least 2 half-widths", w)
    elif kind == "lp_ball":
        _known_keys(doc, common | {"N", "p", "radius", "vertices"}, where)
        p["N"] = _integer(doc.get("N", 2), _join(where, "N"), minimum=2)
        p["p"] = _number(doc.get("p"), _join(where, "p"), allow_inf=True)
        if not p["p"] >= 1:
            raise ShapeSpecError("p must be >= 1 or inf", _join(where, "p"))
        p["radius"] = _number(doc.get("radius", 1.0), _join(where, "radius"), positive=True)
        p["vertices"] = _integer(doc.get("vertices", 512), _join(where, "vertices"), minimum=8)
    else:  # random
        _known_keys(doc, common | {"seed", "points"}, where)
        p["seed"] = _integer(doc.get("seed"), _join(where, "seed"), minimum=0)
        pts = doc.get("points")
        p["points"] = None if pts is None else _integer(pts, _join(where, "points"), minimum=3)
    dim = len(p["half_widths"]) if kind == "box" else p.get("N", 2)
    p["center"] = None if doc.get("center") is None else _point(doc["center"], _join(where, "center"), dim)
    label = doc.get("label")
    if label is not None and not isinstance(label, str):
        raise ShapeSpecError("label must be a string", _join(where, "label"))
    spec = ShapeSpec(kind, p, label or _default_label(kind, p))
    try:
        spec.build()
    except (DomainError, UnsupportedConfigurationError) as exc:
        raise ShapeSpecError(str(exc), where or None) from exc
    return spec


def _default_label(kind: str, p: dict) -> str:
    if kind == "regular_polygon":
        return f"regular_{p['sides']}"
    if kind == "random":
        return f"random_{p['seed']}"
    if kind == "lp_ball":
        return f"W_{'inf' if math.isinf(p['p']) else format(p['p'], 'g')}_N{p['N']}"
    return kind


def _build_shape(spec: ShapeSpec) -> ConvexBody:
    p = spec.params
    c = p.get("center")
    if spec.kind == "regular_polygon":
        body = regular_polygon(p["sides"], p["circumradius"], c or (0.0, 0.0), p["rotation"])
    elif spec.kind == "polygon":
        body = Polygon(p["vertices"], label=spec.label)
        if c is not None:
            body = body.translate(c)
    elif spec.kind == "box":
        body = Box(p["half_widths"], c, label=spec.label)
        if body.dim == 2:
            body = body.to_polygon()
    elif spec.kind == "lp_ball":
        body = make_ball(p["p"], p["N"], p["radius"], p["vertices"], c)
    else:
        body = random_polygon(p["seed"], p["points"])
        if c is not None:
            body = body.translate(c)
    return body


def load_shape(path) -> ShapeSpec:
    return parse_shape(load_document(path), "")


# ---------------------------------------------------------------- campaign documents


@dataclass(frozen=True)
class BodyEntry:
    body_id: str
    seed: int | None
    spec: ShapeSpec


@dataclass
class Tolerances:
    geometry: float = 1e-9      # absolute, on slacks
    fem: float = 1e-4           # relative to |rhs|, on FEM-backed slacks
    equality: float = 1e-12     # |slack| below which an exact-path check reports equality
    width: float = 1e-9         # relative spread of l^1 widths for the constant-width flag


@dataclass
class CampaignConfig:
    name: str = "campaign"
    bodies: list = field(default_factory=list)
    p_list: list = field(default_factory=lambda: [1.5, 2.0, 3.0, 5.0])
    checks: tuple = CHECK_NAMES
    geometry_only: bool = True
    fem_p_list: list = field(default_factory=lambda: [2.0])
    fem_h_rel: float = 0.05
    fem_seed: int = 0
    fem_max_iter: int = 10_000
    step_r: list | None = None   # None: the default grid {0, 1/2, 1, min(p, N)}
    bound_probe: bool = False
    tolerances: Tolerances = field(default_factory=Tolerances)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "bodies": [{"id": b.body_id, "seed": b.seed, "kind": b.spec.kind} for b in self.bodies],
            "p_list": list(self.p_list),
            "checks": list(self.checks),
            "mode": "geometry-only" if self.geometry_only else "fem",
            "fem": {"p_list": list(self.fem_p_list), "h_rel": self.fem_h_rel, "seed": self.fem_seed,
                    "max_iter": self.fem_max_iter},
            "step_r": None if self.step_r is None else list(self.step_r),
            "bound_probe": self.bound_probe,
            "tolerances": vars(self.tolerances).copy(),
        }


_CAMPAIGN_KEYS = {"version", "name", "bodies", "p_list", "checks", "mode", "fem", "step_r",
                  "bound_probe", "tolerances"}


def parse_campaign(doc: dict) -> CampaignConfig:
    _check_version(doc, "")
    _known_keys(doc, _CAMPAIGN_KEYS, "")
    cfg = CampaignConfig()
    if "name" in doc:
        if not isinstance(doc["name"], str):
            raise ShapeSpecError("expected a string", "name")
        cfg.name = doc["name"]
    bodies = doc.get("bodies", [])
    if not isinstance(bodies, list):
        raise ShapeSpecError("expected a list", "bodies")
    seen = set()
    for k, entry in enumerate(bodies):
        for b in _parse_body_entry(entry, f"bodies[{k}]"):
            if b.body_id in seen:
                raise ShapeSpecError(f"duplicate body id {b.body_id!r}", f"bodies[{k}]")
            seen.add(b.body_id)
            cfg.bodies.append(b)
    if "p_list" in doc:
        cfg.p_list = _p_list(doc["p_list"], "p_list", allow_inf=True)
    if "checks" in doc:
        ch = doc["checks"]
        if not isinstance(ch, list):
            raise ShapeSpecError("expected a list", "checks")
        for k, name in enumerate(ch):
            if name not in CHECK_NAMES:
                raise ShapeSpecError(f"unknown check (known: {', '.join(CHECK_NAMES)})", f"checks[{k}]")
        cfg.checks = tuple(ch)
    mode = doc.get("mode", "geometry-only")
    if mode not in ("geometry-only", "fem"):
        raise ShapeSpecError("mode must be 'geometry-only' or 'fem'", "mode")
    cfg.geometry_only = mode == "geometry-only"
    fem = doc.get("fem", {}) or {}
    if not isinstance(fem, dict):
        raise ShapeSpecError("expected a mapping", "fem")
    _known_keys(fem, {"p_list", "h_rel", "seed", "max_iter"}, "fem")
    if "p_list" in fem:
        cfg.fem_p_list = _p_list(fem["p_list"], "fem.p_list")
    if "h_rel" in fem:
        cfg.fem_h_rel = _number(fem["h_rel"], "fem.h_rel", positive=True)
    if "seed" in fem:
        cfg.fem_seed = _integer(fem["seed"], "fem.seed", minimum=0)
    if "max_iter" in fem:
        cfg.fem_max_iter = _integer(fem["max_iter"], "fem.max_iter", minimum=1)
    if doc.get("step_r") is not None:
        sr = doc["step_r"]
        if not isinstance(sr, list):
            raise ShapeSpecError("expected a list of r values", "step_r")
        cfg.step_r = [_number(r, f"step_r[{k}]") for k, r in enumerate(sr)]
    if "bound_probe" in doc:
        if not isinstance(doc["bound_probe"], bool):
            raise ShapeSpecError("expected true or false", "bound_probe")
        cfg.bound_probe = doc["bound_probe"]
    tol = doc.get("tolerances", {}) or {}
    if not isinstance(tol, dict):
        raise ShapeSpecError("expected a mapping", "tolerances")
    _known_keys(tol, set(vars(Tolerances())), "tolerances")
    for key, val in tol.items():
        # zero is allowed: it makes every check strict
        x = _number(val, f"tolerances.{key}")
        if x < 0:
            raise ShapeSpecError("must be non-negative", f"tolerances.{key}")
        setattr(cfg.tolerances, key, x)
    return cfg


def _p_list(v, where: str, allow_inf: bool = False) -> list[float]:
    if not isinstance(v, list) or not v:
        raise ShapeSpecError("expected a non-empty list of exponents", where)
    out = []
    for k, x in enumerate(v):
        p = _number(x, f"{where}[{k}]", allow_inf=allow_inf)
        if not p > 1:
            raise ShapeSpecError("exponents must be > 1" + (" or inf" if allow_inf else ""), f"{where}[{k}]")
        out.append(p)
    return out


def _parse_body_entry(entry, where: str) -> list[BodyEntry]:
    if not isinstance(entry, dict):
        raise ShapeSpecError("expected a mapping", where)
    if "random" in entry:
        _known_keys(entry, {"random"}, where)
        r = entry["random"]
        w = f"{where}.random"
        if not isinstance(r, dict):
            raise ShapeSpecError("expected a mapping", w)
        _known_keys(r, {"seed_start", "count", "points"}, w)
        start = _integer(r.get("seed_start", 0), f"{w}.seed_start", minimum=0)
        count = _integer(r.get("count"), f"{w}.count", minimum=0)
        pts = r.get("points")
        if pts is not None:
            _integer(pts, f"{w}.points", minimum=3)
        return [BodyEntry(f"random_{s}", s,
                          ShapeSpec("random", {"seed": s, "points": pts, "center": None}, f"random_{s}"))
                for s in range(start, start + count)]
    _known_keys(entry, {"id", "shape"}, where)
    spec = parse_shape(entry.get("shape"), f"{where}.shape", require_version=False)
    bid = entry.get("id", spec.label)
    if not isinstance(bid, str):
        raise ShapeSpecError("expected a string", f"{where}.id")
    return [BodyEntry(bid, spec.params.get("seed"), spec)]


def load_campaign(path) -> CampaignConfig:
    return parse_campaign(load_document(path))
