"""Run configuration: TOML files, problem presets and resolved defaults.

A config file is TOML. Top-level keys::

    problem = "cantilever"     # cantilever | lshape | custom
    element = "quad"           # quad | triangle
    k = 1
    h = 0.05
    max_iterations = 50
    snapshot_every = 10
    output_dir = "out"

    [material]      E, nu
    [optimization]  kappa, c1, c2, T0, gamma_d, gamma_ghost, substeps, filter
    [domain]        width, height, void = [x0, y0, x1, y1]     (custom only)
    [[dirichlet]]   p0 = [x, y], p1 = [x, y]                   (custom only)
    [[load]]        p0, p1, traction = [gx, gy]                (custom only)
    holes = [[cx, cy, r], ...]                                  (overrides the preset layout)

Anything omitted falls back to the preset, then to the defaults below.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .boundary import BoundarySpec, Load, Segment
from .elasticity import CutFEMParameters, ElasticMaterial
from .levelset import InitialDesign
from .mesh import DesignDomain, MeshError, _as_count, normalize_kind
from .shapeopt import OptimizationSettings


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


PROBLEMS = ("cantilever", "lshape", "custom")


@dataclass
class RunConfig:
    problem: str = "cantilever"
    element: str = "quad"
    k: int = 1
    h: float = 0.05
    E: float = 1e4
    nu: float = 0.3
    kappa: float = 35.0
    c1: float | None = None
    c2: float = 0.1
    gamma_d: float | None = None
    gamma_ghost: float | list | None = None
    T0: float | None = None
    substeps: int | None = None
    filter: bool = True
    max_iterations: int = 50
    snapshot_every: int = 10
    output_dir: str = "out"
    domain: DesignDomain = field(default_factory=lambda: DesignDomain(2.0, 1.0))
    dirichlet: list = field(default_factory=list)
    loads: list = field(default_factory=list)
    holes: list = field(default_factory=list)

    # ------------------------------------------------------------ derived objects
    @property
    def material(self) -> ElasticMaterial:
        return ElasticMaterial(self.E, self.nu)

    @property
    def boundary(self) -> BoundarySpec:
        return BoundarySpec(dirichlet=list(self.dirichlet), loads=list(self.loads))

    @property
    def initial_design(self) -> InitialDesign:
        return InitialDesign(holes=tuple(tuple(map(float, x)) for x in self.holes))

    @property
    def cutfem(self) -> CutFEMParameters:
        return CutFEMParameters(k=self.k, gamma_d=self.gamma_d, gamma_ghost=self.gamma_ghost)

    def settings(self) -> OptimizationSettings:
        return OptimizationSettings(kappa=self.kappa, c1=self.c1, c2=self.c2, T0=self.T0,
                                    max_iterations=self.max_iterations, substeps=self.substeps,
                                    filter=self.filter)

    def resolved(self) -> dict:
        """All parameters with defaults filled in."""
        mat = self.material
        params = self.cutfem
        return {
            "problem": self.problem, "element": normalize_kind(self.element), "k": self.k,
            "h": self.h, "E": self.E, "nu": self.nu, "mu": mat.mu, "lambda": mat.lam,
            "kappa": self.kappa,
            "c1": self.c1 if self.c1 is not None else 3.0 * (self.h / self.k) ** 2,
            "c2": self.c2,
            "gamma_d": params.nitsche_penalty(mat),
            "gamma_ghost": params.ghost_weights(mat),
            "T0": self.T0 if self.T0 is not None else 0.05 * self.domain.diameter,
            "max_iterations": self.max_iterations, "snapshot_every": self.snapshot_every,
            "output_dir": self.output_dir,
            "domain": [self.domain.width, self.domain.height, self.domain.void],
            "dirichlet": [[list(s.p0), list(s.p1)] for s in self.dirichlet],
            "loads": [[list(ld.segment.p0), list(ld.segment.p1), list(ld.traction)]
                      for ld in self.loads],
            "holes": [list(x) for x in self.holes],
        }

    def validate(self) -> "RunConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError("problem", f"must be one of {PROBLEMS}, got {self.problem!r}")
        try:
            normalize_kind(self.element)
        except MeshError as exc:
            raise ConfigError("element", str(exc)) from None
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigError("k", f"polynomial degree must be an integer >= 1, got {self.k!r}")
        _positive("h", self.h)
        d = self.domain
        try:
            _as_count(d.width, self.h, "domain width")
            _as_count(d.height, self.h, "domain height")
            if d.void is not None:
                for name, v in zip(("x0", "y0", "x1", "y1"), d.void):
                    if v > 0:
                        _as_count(v, self.h, f"void {name}")
        except MeshError as exc:
            raise ConfigError("h", str(exc)) from None
        _positive("material.E", self.E)
        if not 0.0 < self.nu < 0.5:
            raise ConfigError("material.nu", f"must lie in (0, 0.5) for plane strain, got {self.nu}")
        if self.kappa < 0:
            raise ConfigError("optimization.kappa", f"must be >= 0, got {self.kappa}")
        for name in ("c1", "T0", "gamma_d"):
            v = getattr(self, name)
            if v is not None:
                _positive(f"optimization.{name}", v)
        _positive("optimization.c2", self.c2, allow_zero=True)
        g = self.gamma_ghost
        if g is not None:
            vals = [g] if isinstance(g, (int, float)) else list(g)
            if not isinstance(g, (int, float)) and len(vals) != self.k:
                raise ConfigError("optimization.gamma_ghost", f"need {self.k} values, got {len(vals)}")
            for v in vals:
                _positive("optimization.gamma_ghost", v, allow_zero=True)
        if self.substeps is not None and self.substeps < 1:
            raise ConfigError("optimization.substeps", "must be >= 1")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations", "must be >= 0")
        if self.snapshot_every < 0:
            raise ConfigError("snapshot_every", "must be >= 0")
        if not self.dirichlet:
            raise ConfigError("dirichlet", "at least one Dirichlet segment is required")
        for i, hole in enumerate(self.holes):
            if len(hole) != 3 or hole[2] <= 0:
                raise ConfigError(f"holes[{i}]", "expected [cx, cy, r] with r > 0")
        return self


def _positive(name: str, v, allow_zero: bool = False):
    ok = isinstance(v, (int, float)) and math.isfinite(v) and (v >= 0 if allow_zero else v > 0)
    if not ok:
        raise ConfigError(name, f"must be {'non-negative' if allow_zero else 'positive'}, got {v!r}")


# --------------------------------------------------------------------------- presets
def hole_grid(domain: DesignDomain, keep_clear: list[Segment], radius: float = 0.06,
              spacing: float = 1 / 3, clearance: float = 0.1) -> list[list[float]]:
    """Regular array of circular holes at cell centres of a ``spacing`` grid,
    skipping the void region and anything within ``clearance`` of
    ``keep_clear``."""
    import numpy as np

    nx = int(round(domain.width / spacing))
    ny = int(round(domain.height / spacing))
    holes = []
    for j in range(ny):
        for i in range(nx):
            c = np.array([(i + 0.5) * spacing, (j + 0.5) * spacing])
            if domain.void is not None:
                x0, y0, x1, y1 = domain.void
                if x0 - radius < c[0] < x1 + radius and y0 - radius < c[1] < y1 + radius:
                    continue
            if any(s.distance(c[None])[0] < radius + clearance for s in keep_clear):
                continue
            holes.append([float(c[0]), float(c[1]), radius])
    return holes


def cantilever_preset() -> RunConfig:
    """2 m x 1 m beam clamped on the left, loaded downwards on the right edge
    within 0.1 m of the centre line."""
    domain = DesignDomain(2.0, 1.0)
    dirichlet = [Segment((0.0, 0.0), (0.0, 1.0))]
    loads = [Load(Segment((2.0, 0.4), (2.0, 0.6)), (0.0, -20.0))]
    holes = hole_grid(domain, [])
    return RunConfig(problem="cantilever", domain=domain, dirichlet=dirichlet, loads=loads,
                     holes=holes)


def lshape_preset() -> RunConfig:
    """2 m x 2 m square minus its top-right 1 m x 1 m quarter; clamped on the
    top edge, loaded downwards on the right edge between 5/16 m and 1/2 m."""
    domain = DesignDomain(2.0, 2.0, void=(1.0, 1.0, 2.0, 2.0))
    dirichlet = [Segment((0.0, 2.0), (1.0, 2.0))]
    loads = [Load(Segment((2.0, 5 / 16), (2.0, 0.5)), (0.0, -20.0))]
    holes = hole_grid(domain, [loads[0].segment], clearance=0.08)
    return RunConfig(problem="lshape", element="triangle", k=2, domain=domain,
                     dirichlet=dirichlet, loads=loads, holes=holes)


PRESETS = {"cantilever": cantilever_preset, "lshape": lshape_preset}


# --------------------------------------------------------------------------- loading
_TOP = {"problem", "element", "k", "h", "max_iterations", "snapshot_every", "output_dir",
        "material", "optimization", "domain", "dirichlet", "load", "holes"}
_OPT = {"kappa", "c1", "c2", "T0", "gamma_d", "gamma_ghost", "substeps", "filter"}


def _point(name, v):
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ConfigError(name, f"expected [x, y], got {v!r}")
    return (float(v[0]), float(v[1]))


def config_from_dict(data: dict) -> RunConfig:
    unknown = set(data) - _TOP
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown field")
    problem = data.get("problem", "cantilever")
    if problem not in PROBLEMS:
        raise ConfigError("problem", f"must be one of {PROBLEMS}, got {problem!r}")
    cfg = PRESETS[problem]() if problem in PRESETS else RunConfig(problem="custom")
    updates = {}
    for key in ("element", "k", "h", "max_iterations", "snapshot_every", "output_dir"):
        if key in data:
            updates[key] = data[key]
    mat = data.get("material", {})
    for key in mat:
        if key not in ("E", "nu"):
            raise ConfigError(f"material.{key}", "unknown field")
        updates[key] = float(mat[key])
    opt = data.get("optimization", {})
    for key, v in opt.items():
        if key not in _OPT:
            raise ConfigError(f"optimization.{key}", "unknown field")
        updates[key] = v
    if "domain" in data:
        d = data["domain"]
        try:
            void = d.get("void")
            updates["domain"] = DesignDomain(float(d["width"]), float(d["height"]),
                                             tuple(map(float, void)) if void else None)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("domain", f"invalid domain table ({exc})") from None
    if "dirichlet" in data:
        updates["dirichlet"] = [Segment(_point(f"dirichlet[{i}].p0", s.get("p0")),
                                        _point(f"dirichlet[{i}].p1", s.get("p1")))
                                for i, s in enumerate(data["dirichlet"])]
    if "load" in data:
        updates["loads"] = [Load(Segment(_point(f"load[{i}].p0", s.get("p0")),
                                         _point(f"load[{i}].p1", s.get("p1"))),
                                 _point(f"load[{i}].traction", s.get("traction")))
                            for i, s in enumerate(data["load"])]
    if "holes" in data:
        updates["holes"] = [list(map(float, x)) for x in data["holes"]]
    return replace(cfg, **updates)


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    return config_from_dict(data).validate()


def build_problem(cfg: RunConfig):
    """Mesh, elasticity problem and initial level set for a validated config."""
    from .elasticity import ElasticityProblem
    from .levelset import init_levelset
    from .mesh import build_background_mesh, refine_uniform

    mesh = build_background_mesh(cfg.domain, cfg.h, cfg.element)
    refined = refine_uniform(mesh, cfg.k)
    problem = ElasticityProblem(refined, cfg.material, cfg.boundary, cfg.cutfem)
    return refined, problem, init_levelset(cfg.initial_design, refined)
