"""Run configuration: YAML file -> validated, fully resolved nested dict -> library objects."""

from __future__ import annotations

import copy
import math
from pathlib import Path

import numpy as np
import yaml

from .energy import Functional, FunctionalParams
from .errors import ConfigParse, ValidationFailed
from .mesh import MAX_SUBDIVISIONS, DomainMesh, icosphere, jittered_icosphere, mobius_dilation
from .target import TargetManifold, make_form, make_target

TARGET_KINDS = ("round_sphere", "ellipsoid", "flat_euclidean", "flat_torus")
FORM_KINDS = ("zero", "volume", "cmc", "cosine", "linear", "expression")
INIT_KINDS = ("identity", "equator", "blob", "constant", "latitude", "file")
METHODS = ("sobolev", "gradient", "newton", "auto")

DEFAULTS = {
    "seed": 0,
    "mesh": {"subdivisions": 3, "rotation": None, "jitter": 0.0},
    "target": {"kind": "round_sphere", "n": 2},
    "form": {"kind": "zero"},
    "functional": {"alpha": 1.0, "lam": 1.0, "tau": 1.0, "schedule": None},
    "solver": {"method": "auto", "tol_grad": 1e-6, "max_iters": 500},
    "init": {"kind": "identity", "scale": [1.0, 1.0, 1.0], "perturb": 0.0, "noise": 0.0,
             "zoom": 1.0, "zoom_center": [0.0, 0.0, 1.0], "t": 0.5, "path": None},
    "minmax": {"samples": 16, "budget": 200, "radius": None, "zoom": 1.0, "string_tol": 1e-3},
    "continuation": {"conc_factor": 50.0, "gap_threshold": 0.0, "minmax_start": True},
    "scan": {"alphas": [1.0], "lambdas": [0.5, 1.0, 2.0], "family": "sweepout"},
    "index": {"tol_eig": None, "n_eig": 24, "gauge": "auto", "crit_tol": 1e-4},
    "bomega": {"area_tol": 1e-3, "C0": None},
    "diagnose": {"state": None, "center_vertex": None, "radii": [0.25, 0.5, 0.75, 1.0, 1.25]},
}


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in out:
            raise ValidationFailed(f"unknown config key {where + k!r}")
        if isinstance(out[k], dict) and k not in ("target", "form"):
            if not isinstance(v, dict):
                raise ValidationFailed(f"config section {where + k!r} must be a mapping")
            out[k] = _merge(out[k], v, where + k + ".")
        elif k in ("target", "form"):
            if not isinstance(v, dict):
                raise ValidationFailed(f"config section {where + k!r} must be a mapping")
            out[k] = copy.deepcopy(v)
        else:
            out[k] = v
    return out


def parse_config(text: str, source: str = "<string>") -> dict:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParse(f"{source}: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigParse(f"{source}: top level must be a mapping")
    return validate(_merge(DEFAULTS, raw))


def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def _num(cfg, section, key, lo=-math.inf, hi=math.inf, integer=False, allow_none=False):
    v = cfg[section][key] if section else cfg[key]
    name = f"{section}.{key}" if section else key
    if v is None and allow_none:
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not float(v).is_integer()):
        raise ValidationFailed(f"{name} must be {'an integer' if integer else 'a number'}, got {v!r}")
    if not lo <= v <= hi:
        raise ValidationFailed(f"{name} = {v} outside [{lo}, {hi}]")


def validate(cfg: dict) -> dict:
    _num(cfg, None, "seed", 0, 2**64 - 1, integer=True)
    _num(cfg, "mesh", "subdivisions", 0, MAX_SUBDIVISIONS, integer=True)
    _num(cfg, "mesh", "rotation", 0, 2**32 - 1, integer=True, allow_none=True)
    _num(cfg, "mesh", "jitter", 0.0, 0.3)
    t = cfg["target"]
    if t.get("kind") not in TARGET_KINDS:
        raise ValidationFailed(f"target.kind must be one of {TARGET_KINDS}, got {t.get('kind')!r}")
    try:
        target = build_target(cfg)
    except (TypeError, ValueError) as exc:
        raise ValidationFailed(f"target: {exc}") from exc
    f = cfg["form"]
    if f.get("kind") not in FORM_KINDS:
        raise ValidationFailed(f"form.kind must be one of {FORM_KINDS}, got {f.get('kind')!r}")
    try:
        build_form(cfg, target)
    except (TypeError, ValueError, SyntaxError) as exc:
        raise ValidationFailed(f"form: {exc}") from exc
    _num(cfg, "functional", "alpha", 1.0)
    _num(cfg, "functional", "lam", 0.0)
    _num(cfg, "functional", "tau", 1e-300, 1.0)
    sch = cfg["functional"]["schedule"]
    if sch is not None:
        from .solve import validate_schedule

        try:
            cfg["functional"]["schedule"] = validate_schedule(sch)
        except (TypeError, ValueError) as exc:
            raise ValidationFailed(f"functional.schedule: {exc}") from exc
    if cfg["solver"]["method"] not in METHODS:
        raise ValidationFailed(f"solver.method must be one of {METHODS}")
    _num(cfg, "solver", "tol_grad", 0.0)
    _num(cfg, "solver", "max_iters", 0, integer=True)
    if cfg["init"]["kind"] not in INIT_KINDS:
        raise ValidationFailed(f"init.kind must be one of {INIT_KINDS}")
    if cfg["init"]["kind"] == "file" and not cfg["init"]["path"]:
        raise ValidationFailed("init.kind = file needs init.path")
    _num(cfg, "init", "zoom", 1e-6, 1e6)
    _num(cfg, "minmax", "samples", 8, 4096, integer=True)
    _num(cfg, "minmax", "budget", 0, integer=True)
    _num(cfg, "minmax", "zoom", 1e-6, 1e6)
    _num(cfg, "continuation", "conc_factor", 0.0)
    lams = cfg["scan"]["lambdas"]
    if not lams or any(not isinstance(v, (int, float)) or v <= 0 for v in lams) or any(
            b <= a for a, b in zip(lams, lams[1:])):
        raise ValidationFailed("scan.lambdas must be positive and strictly increasing")
    if not cfg["scan"]["alphas"] or any(not isinstance(a, (int, float)) or a < 1 for a in cfg["scan"]["alphas"]):
        raise ValidationFailed("scan.alphas must be numbers >= 1")
    if cfg["scan"]["family"] not in ("sweepout", "single"):
        raise ValidationFailed("scan.family must be 'sweepout' or 'single'")
    if cfg["index"]["gauge"] not in ("auto", "none", "conformal"):
        raise ValidationFailed("index.gauge must be auto, none or conformal")
    for r in cfg["diagnose"]["radii"]:
        if not isinstance(r, (int, float)) or not 0 < r <= math.pi / 2:
            raise ValidationFailed(f"diagnose.radii entries must lie in (0, pi/2], got {r!r}")
    return cfg


# builders


def build_mesh(cfg: dict) -> DomainMesh:
    m = cfg["mesh"]
    if m["jitter"]:
        return jittered_icosphere(int(m["subdivisions"]), float(m["jitter"]), seed=int(cfg["seed"]))
    return icosphere(int(m["subdivisions"]), rotation=m["rotation"])


def build_target(cfg: dict) -> TargetManifold:
    t = dict(cfg["target"])
    kind = t.pop("kind")
    return make_target(kind, **t)


def build_form(cfg: dict, target: TargetManifold | None = None):
    target = build_target(cfg) if target is None else target
    f = dict(cfg["form"])
    kind = f.pop("kind")
    if kind == "expression" and "components" in f:
        f["components"] = {str(k): str(v) for k, v in f["components"].items()}
    return make_form(kind, target.ambient_dim, **f)


def build_params(cfg: dict, alpha: float | None = None) -> FunctionalParams:
    fp = cfg["functional"]
    return FunctionalParams(alpha=float(fp["alpha"] if alpha is None else alpha), lam=float(fp["lam"]),
                            tau=float(fp["tau"]))


def build_functional(cfg: dict, mesh: DomainMesh | None = None) -> Functional:
    mesh = build_mesh(cfg) if mesh is None else mesh
    target = build_target(cfg)
    return Functional(mesh, target, build_form(cfg, target), build_params(cfg))


def build_initial_state(cfg: dict, fun: Functional) -> np.ndarray:
    """Initial map from the ``init`` section; seeded noise uses ``seed``."""
    from .io import load_state
    from .solve import latitude_sweepout

    ini = cfg["init"]
    mesh, target = fun.mesh, fun.target
    K = target.ambient_dim
    rng = np.random.default_rng(int(cfg["seed"]))
    x = mesh.vertices
    if ini["zoom"] != 1.0:
        c = np.asarray(ini["zoom_center"], float)
        x = mobius_dilation(c / np.linalg.norm(c), 1.0 / float(ini["zoom"]), x)
    kind = ini["kind"]
    if kind == "file":
        return target.project_point(load_state(ini["path"], mesh))
    if kind == "latitude":
        sw = latitude_sweepout(mesh, target, m=int(cfg["minmax"]["samples"]), radius=cfg["minmax"]["radius"],
                               zoom=float(ini["zoom"]), center=ini["zoom_center"])
        k = int(round(float(ini["t"]) * sw.m))
        return sw.states[k]
    if kind == "constant":
        u = np.tile(target.project_point(target.sample(1, rng))[0], (len(x), 1))
        return u
    y = np.zeros((len(x), K))
    if kind == "identity":
        y[:, :3] = x * np.asarray(ini["scale"], float)[:3]
        if target.kind == "flat_torus":
            raise ValidationFailed("init.kind = identity is not defined for flat_torus targets")
        if target.kind in ("round_sphere", "ellipsoid") and target.dim > 2:
            raise ValidationFailed("init.kind = identity needs a 2-dimensional target; use 'equator'")
    elif kind == "equator":
        if target.kind != "round_sphere" or target.dim < 3:
            raise ValidationFailed("init.kind = equator needs a round sphere of dimension >= 3")
        y[:, :3] = x
        y[:, -1] = float(ini["perturb"]) * (x[:, 0] * x[:, 1] + 0.5 * x[:, 2] ** 2 - 0.2)
        y = target.center + target.radius * y
    elif kind == "blob":
        if target.kind != "flat_euclidean" or K != 3:
            raise ValidationFailed("init.kind = blob needs a flat R^3 target")
        y = x * np.asarray(ini["scale"], float)
    if ini["noise"]:
        y = y + float(ini["noise"]) * rng.standard_normal(y.shape)
    return target.project_point(y)


def resolved_yaml(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=False)
