"""Campaign configuration: parsing, builtins and problem factories."""

import copy
import hashlib
import json

import numpy as np

from .adaptive import AdaptiveConfig
from .assembly import Problem
from .contact import FrictionModel, MaterialParams, NitscheParams
from .mesh import build_rectangle_mesh
from .newton import NewtonConfig

BUILTIN_NAMES = ("tresca-rect", "coulomb-rect", "square-lit")

_RECT_BASE = {
    "name": "tresca-rect",
    "geometry": {
        "x_range": [-1.0, 1.0],
        "y_range": [0.0, 1.0],
        "nx": 10,
        "ny": 5,
        "sides": {"bottom": "C", "top": "D", "left": "N0", "right": "N1"},
        "gap": 0.0,
    },
    "material": {"E": 1.0, "nu": 0.3},
    "loads": {
        "body_force": [0.0, -0.02],
        "neumann": {"N0": [-0.028, 0.0], "N1": [0.0, 0.0]},
    },
    "friction": {"kind": "tresca", "s": 5e-3},
    "nitsche": {"gamma0_factor": 10.0},
    "degree": 1,
    "newton": {"stopping": "estimator", "gamma_lin": 0.01,
               "rtol": 1e-10, "max_iters": 30},
    "adaptive": {"theta_mark": 0.062, "max_levels": 11,
                 "max_dofs": 200000, "rho_even": 0.0},
    "uniform": {"max_levels": 5, "max_dofs": 200000},
    "reference": {"h": 1.0 / 64.0, "degree": 2},
    "output_dir": "out",
    "seed": 0,
    "threads": 1,
}


def builtin_config(name):
    """Configuration dictionary of one of the shipped test cases."""
    if name not in BUILTIN_NAMES:
        raise ValueError(f"unknown builtin {name!r}; choose from {BUILTIN_NAMES}")
    cfg = copy.deepcopy(_RECT_BASE)
    if name == "coulomb-rect":
        cfg["name"] = name
        cfg["friction"] = {"kind": "coulomb", "mu_c": 0.5}
    elif name == "square-lit":
        cfg.update(
            name=name,
            geometry={
                "x_range": [0.0, 1.0],
                "y_range": [0.0, 1.0],
                "nx": 6,
                "ny": 6,
                "sides": {"bottom": "N0", "top": "N1",
                          "left": "D", "right": "C"},
                "gap": 0.0,
            },
            material={"E": 1.0e6, "nu": 0.3},
            loads={"body_force": [0.0, -76518.0], "neumann": {}},
            friction={"kind": "coulomb", "mu_c": 0.2},
            nitsche={"gamma0_factor": 1.0},
        )
    return cfg


def load_config(path):
    with open(path) as f:
        cfg = json.load(f)
    validate_config(cfg)
    return cfg


def save_config(cfg, path):
    with open(path, "w") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")


def config_hash(cfg):
    """Short stable digest of a configuration."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def validate_config(cfg):
    """Raise ValueError naming the offending field on bad input."""
    def need(d, key, ctx):
        if key not in d:
            raise ValueError(f"missing config field {ctx}.{key}")
        return d[key]

    geo = need(cfg, "geometry", "config")
    for key in ("x_range", "y_range", "nx", "ny", "sides"):
        need(geo, key, "geometry")
    if float(geo.get("gap", 0.0)) != 0.0:
        raise ValueError("geometry.gap: initial gaps are not supported; "
                         "the body must rest on the foundation")
    sides = geo["sides"]
    if "C" not in sides.values():
        raise ValueError("geometry.sides: one side must carry the contact "
                         "label C")
    if "D" not in sides.values():
        raise ValueError("geometry.sides: one side must carry the Dirichlet "
                         "label D")
    mat = need(cfg, "material", "config")
    MaterialParams(float(need(mat, "E", "material")),
                   float(need(mat, "nu", "material")))
    fr = need(cfg, "friction", "config")
    _friction(fr)
    loads = need(cfg, "loads", "config")
    f = np.asarray(need(loads, "body_force", "loads"), dtype=float)
    if f.shape != (2,) or not np.all(np.isfinite(f)):
        raise ValueError("loads.body_force must be a finite 2-vector")
    for lab, g in loads.get("neumann", {}).items():
        if lab not in ("N0", "N1"):
            raise ValueError(f"loads.neumann.{lab}: label must be N0 or N1")
        g = np.asarray(g, dtype=float)
        if g.shape != (2,) or not np.all(np.isfinite(g)):
            raise ValueError(f"loads.neumann.{lab} must be a finite 2-vector")
    nit = need(cfg, "nitsche", "config")
    if "gamma0" not in nit and "gamma0_factor" not in nit:
        raise ValueError("nitsche: give gamma0 or gamma0_factor")
    NitscheParams(_gamma0(cfg))
    NewtonConfig(**cfg.get("newton", {}))
    AdaptiveConfig(**cfg.get("adaptive", {}))


def _friction(fr):
    kind = fr.get("kind")
    if kind == "tresca":
        return FrictionModel("tresca", s=float(fr["s"]))
    if kind == "coulomb":
        return FrictionModel("coulomb", mu_c=float(fr["mu_c"]))
    raise ValueError("friction.kind must be tresca or coulomb")


def _gamma0(cfg):
    nit = cfg["nitsche"]
    if "gamma0" in nit:
        return float(nit["gamma0"])
    return float(nit["gamma0_factor"]) * float(cfg["material"]["E"])


def _labeler(geo):
    x0, x1 = geo["x_range"]
    y0, y1 = geo["y_range"]
    sides = geo["sides"]

    def label(mid):
        x, y = mid
        if abs(y - y0) < 1e-12:
            return sides["bottom"]
        if abs(y - y1) < 1e-12:
            return sides["top"]
        if abs(x - x0) < 1e-12:
            return sides["left"]
        return sides["right"]

    return label


def initial_mesh(cfg):
    geo = cfg["geometry"]
    return build_rectangle_mesh(tuple(geo["x_range"]), tuple(geo["y_range"]),
                                int(geo["nx"]), int(geo["ny"]), _labeler(geo))


def reference_mesh(cfg):
    geo = cfg["geometry"]
    h = float(cfg.get("reference", {}).get("h", 1.0 / 64.0))
    x0, x1 = geo["x_range"]
    y0, y1 = geo["y_range"]
    nx = max(2, round((x1 - x0) / h))
    ny = max(2, round((y1 - y0) / h))
    return build_rectangle_mesh((x0, x1), (y0, y1), nx, ny, _labeler(geo))


def problem_factory(cfg):
    """``make_problem(mesh, degree)`` closure over one configuration."""
    material = MaterialParams(float(cfg["material"]["E"]),
                              float(cfg["material"]["nu"]))
    friction = _friction(cfg["friction"])
    nitsche = NitscheParams(_gamma0(cfg))
    body = np.asarray(cfg["loads"]["body_force"], dtype=float)
    neumann = {lab: np.asarray(g, dtype=float)
               for lab, g in cfg["loads"].get("neumann", {}).items()}

    def make_problem(mesh, degree=None):
        return Problem(mesh, material, friction, nitsche, body,
                       neumann=neumann,
                       degree=int(cfg.get("degree", 1)) if degree is None
                       else degree)

    return make_problem


def newton_config(cfg):
    return NewtonConfig(**cfg.get("newton", {}))


def adaptive_config(cfg, mode="adaptive"):
    key = "uniform" if mode == "uniform" else "adaptive"
    kw = dict(cfg.get("adaptive", {}))
    if mode == "uniform":
        kw.update(cfg.get("uniform", {}))
        kw.pop("theta_mark", None)
    return AdaptiveConfig(mode=mode, **kw)
