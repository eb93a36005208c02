"""Builtin geometries, experiment presets and the scenario configuration."""

from __future__ import annotations

import ast
import configparser
import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .incident import Grounding, IncidentWave
from .material import CoefficientField, MaterialError, PiezoMaterial, c_from_upper
from .mesh import Label, TriMesh, load_mesh, mesh_polygon, polygon_area


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# geometries

PENTAGON_RADIUS = 0.55


def pentagon_ring(radius: float = PENTAGON_RADIUS) -> np.ndarray:
    """Regular pentagon centred at the origin with one vertex on the +y axis."""
    ang = math.pi / 2 + 2 * math.pi * np.arange(5) / 5
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])


def trapping_ring() -> np.ndarray:
    """U-shaped cup of width 1 with a 0.5 x 0.7 cavity, opening towards (1, -1)."""
    local = np.array([
        [-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [0.25, 0.5],
        [0.25, -0.2], [-0.25, -0.2], [-0.25, 0.5], [-0.5, 0.5],
    ])
    th = -3 * math.pi / 4  # maps the opening direction (0, 1) to (1, -1)/sqrt(2)
    R = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    return local @ R.T


def circle_ring(n: int, radius: float = 1.0) -> np.ndarray:
    ang = 2 * math.pi * np.arange(n) / n
    return radius * np.column_stack([np.cos(ang), np.sin(ang)])


def square_ring() -> np.ndarray:
    return np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])


GEOMETRIES = ("pentagon", "trapping", "trapping_steep", "circle", "square")


def _perimeter(ring: np.ndarray) -> float:
    return float(np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1).sum())


def resolve_h(ring: np.ndarray, resolution) -> float:
    """An integer resolution is a target panel count, a float below 1 is h."""
    if isinstance(resolution, (int, np.integer)) and not isinstance(resolution, bool):
        if resolution < 3:
            raise ConfigError("panel count must be at least 3")
        return _perimeter(ring) / resolution
    h = float(resolution)
    if not 0 < h < 1:
        raise ConfigError(f"mesh size must lie in (0, 1), got {resolution!r}")
    return h


def builtin_geometry(name: str, resolution=64, labels=None) -> TriMesh:
    """Labeled mesh of a builtin shape. ``circle`` uses ``resolution`` as its
    panel count (an inscribed regular polygon of radius 1)."""
    if name == "pentagon":
        ring = pentagon_ring()
    elif name in ("trapping", "trapping_steep"):
        ring = trapping_ring()
    elif name == "circle":
        n = int(resolution) if not (isinstance(resolution, float) and resolution < 1) else \
            int(math.ceil(2 * math.pi / float(resolution)))
        ring = circle_ring(n)
        return mesh_polygon([ring], _perimeter(ring) / n, labels)
    elif name == "square":
        ring = square_ring()
    else:
        raise ConfigError(f"unknown geometry {name!r}; choose from {', '.join(GEOMETRIES)}")
    return mesh_polygon([ring], resolve_h(ring, resolution), labels)


def geometry_area(name: str) -> float:
    ring = {"pentagon": pentagon_ring, "trapping": trapping_ring, "trapping_steep": trapping_ring,
            "square": square_ring}[name]()
    return polygon_area(ring)


def receiver_rings(radii=(0.9, 1.4), count: int = 10, phase: float = 0.0) -> np.ndarray:
    """``count`` receivers split evenly over circles of the given radii, the
    second ring rotated by half a spacing."""
    per = count // len(radii)
    pts = []
    for k, r in enumerate(radii):
        n = per if k < len(radii) - 1 else count - per * (len(radii) - 1)
        ang = phase + 2 * math.pi * (np.arange(n) + 0.5 * k) / n
        pts.append(r * np.column_stack([np.cos(ang), np.sin(ang)]))
    return np.vstack(pts)


# --------------------------------------------------------------------------
# configuration

BENCH_C = [2.118, 0.6, 0.0, 2.118, 0.0, 0.9]
BENCH_E = [1.0, 5.0, 5.0, 5.0, 1.0, 5.0]
BENCH_KAPPA = [4.0, 4.0, 1.0]


def _default_config() -> dict:
    return {
        "scenario": {"base": ""},
        "mesh": {"builtin": "pentagon", "resolution": 64, "path": ""},
        "material": {
            "c_voigt": list(BENCH_C), "e_voigt": list(BENCH_E), "kappa_psi": list(BENCH_KAPPA),
            "rho": "1", "omega": "0", "kappa0": 1.0, "kappa1": 1.0,
        },
        "boundary": {"dirichlet": "all"},  # all | none | file | expression in x, y
        "discretization": {"fem_order": 2, "bem_order": 1},
        "time": {"dt": 0.012, "nsteps": 500, "cq_tol": 1e-12},
        "incident": {
            "kind": "none", "amplitude": 3.0, "direction": [1.0, 0.0], "window": 0.3, "omega": 88.0,
            "origin": "auto", "flip_sign": False, "flux": "derivative",
        },
        "grounding": {"kind": "none", "amplitude": 10.0, "omega": 4 * math.pi, "profile": "1"},
        "receivers": {"points": "rings", "radii": [0.9, 1.4], "count": 10},
        "solver": {"mode": "coupled", "workers": 1},
        "output": {"directory": "out", "snapshot_times": [], "raster": [-1.5, 1.5, -1.5, 1.5, 41, 41],
                   "figures": True},
        # refinement ladder for the convergence command: kind time | space,
        # reference finest | oracle (the oracle needs a sound-soft circle)
        "convergence": {"kind": "time", "levels": 3, "reference": "finest"},
    }


def _preset(name: str) -> dict:
    cfg = _default_config()
    d15 = [1 / math.sqrt(26), 5 / math.sqrt(26)]
    dm11 = [-1 / math.sqrt(2), 1 / math.sqrt(2)]
    if name == "pentagon":
        cfg["mesh"]["builtin"] = "pentagon"
        cfg["material"]["rho"] = "5 + 25*exp(-100*r**2)"
        cfg["incident"].update(kind="plane_pulse", direction=d15)
        cfg["grounding"].update(kind="step", amplitude=10.0)
        cfg["time"].update(dt=0.012, nsteps=500)
    elif name == "trapping":
        cfg["mesh"]["builtin"] = "trapping"
        cfg["material"]["rho"] = "20 + abs(x) + 10*abs(y)"
        cfg["incident"].update(kind="plane_pulse", direction=dm11)
        cfg["grounding"].update(kind="step", amplitude=10.0)
        cfg["receivers"]["radii"] = [1.0, 1.5]
        cfg["time"].update(dt=0.012, nsteps=500)
    elif name == "transition":
        cfg["mesh"]["builtin"] = "trapping_steep"
        cfg["material"]["rho"] = "20 + abs(x) + 50*abs(y)"
        cfg["incident"].update(kind="causal_sine", omega=6 * math.pi, direction=dm11)
        cfg["grounding"].update(kind="step", amplitude=10.0)
        cfg["receivers"]["radii"] = [1.0, 1.5]
        cfg["time"].update(dt=0.014, nsteps=500)
        cfg["output"]["snapshot_times"] = [0.75, 1.5, 2.25, 3.0, 3.75, 7.0]
    elif name == "generation":
        cfg["mesh"]["builtin"] = "pentagon"
        cfg["material"]["rho"] = "5 + 25*exp(-100*r**2)"
        # a spatially uniform potential has no mechanical effect, so the
        # grounding varies linearly across the solid
        cfg["grounding"].update(kind="sine", amplitude=6.0, omega=4 * math.pi, profile="y/0.55")
        cfg["time"].update(dt=0.012, nsteps=500)
    else:
        raise ConfigError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    cfg["scenario"] = {"base": name}
    return cfg


SCENARIOS = ("pentagon", "trapping", "transition", "generation")


def _parse_value(text: str):
    t = text.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return ast.literal_eval(t)
    except (ValueError, SyntaxError):
        return t.strip("\"'")


def read_config(path) -> dict:
    """Parse an INI-style scenario file into a nested dict (with preset defaults)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    raw = {sec: {k: _parse_value(v) for k, v in parser.items(sec)} for sec in parser.sections()}
    base = raw.get("scenario", {}).get("base")
    cfg = _preset(base) if base else _default_config()
    for sec, vals in raw.items():
        if sec not in cfg:
            raise ConfigError(f"unknown config section [{sec}]")
        for k, v in vals.items():
            if k not in cfg[sec]:
                raise ConfigError(f"unknown key {k!r} in [{sec}]")
            cfg[sec][k] = v
    cfg["_source"] = str(path)
    if cfg["mesh"]["path"]:
        p = Path(cfg["mesh"]["path"])
        cfg["mesh"]["path"] = str(p if p.is_absolute() else (path.parent / p))
    return cfg


def write_config(cfg: dict, path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    for sec, vals in cfg.items():
        if sec.startswith("_"):
            continue
        parser[sec] = {k: repr(v) for k, v in vals.items()}
    with open(path, "w") as fh:
        parser.write(fh)


def preset_config(name: str, **overrides) -> dict:
    """Preset plus ``section__key=value`` overrides."""
    cfg = _preset(name)
    for key, v in overrides.items():
        sec, _, k = key.partition("__")
        if sec not in cfg or k not in cfg[sec]:
            raise ConfigError(f"unknown override {key!r}")
        cfg[sec][k] = v
    return cfg


@dataclass(eq=False)
class Scenario:
    config: dict
    mesh: TriMesh
    material: PiezoMaterial
    fem_order: int
    bem_order: int
    dt: float
    nsteps: int
    cq_tol: float
    incident: IncidentWave
    grounding: Grounding
    receivers: np.ndarray
    mode: str
    flux: str
    sign: float
    workers: int
    snapshot_times: list = field(default_factory=list)
    raster: tuple = ()


def _num(cfg, sec, key, kind=float):
    v = cfg[sec][key]
    try:
        if kind is int:
            if isinstance(v, bool) or float(v) != int(v):
                raise ValueError
            return int(v)
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"[{sec}] {key} must be {kind.__name__}, got {v!r}") from None


def _vector(cfg, sec, key, n=None):
    v = cfg[sec][key]
    try:
        arr = np.asarray(v, dtype=float).ravel()
    except (TypeError, ValueError):
        raise ConfigError(f"[{sec}] {key} must be a list of numbers, got {v!r}") from None
    if n is not None and arr.size != n:
        raise ConfigError(f"[{sec}] {key} needs {n} values, got {arr.size}")
    return arr


def _dirichlet_labels(mesh: TriMesh, rule) -> TriMesh:
    """Relabel boundary panels: ``all``, ``none`` or an expression in the
    panel midpoint (x, y) that is true on Dirichlet panels."""
    if rule == "all":
        lab = np.full(len(mesh.panels), Label.DIRICHLET)
    elif rule == "none":
        lab = np.full(len(mesh.panels), Label.NEUMANN)
    elif rule == "file":
        return mesh
    else:
        mid = 0.5 * (mesh.vertices[mesh.panels[:, 0]] + mesh.vertices[mesh.panels[:, 1]])
        try:
            flag = np.asarray(CoefficientField(str(rule))(mid[:, 0], mid[:, 1])).astype(bool)
        except MaterialError as exc:
            raise ConfigError(f"[boundary] dirichlet: {exc}") from exc
        lab = np.where(flag, Label.DIRICHLET, Label.NEUMANN)
    return TriMesh.from_arrays(mesh.vertices, mesh.triangles, mesh.panels, lab.astype(int))


def build_scenario(cfg: dict) -> Scenario:
    """Validate a config dict and construct the mesh, material and data."""
    cfg = copy.deepcopy(cfg)
    dt = _num(cfg, "time", "dt")
    nsteps = _num(cfg, "time", "nsteps", int)
    tol = _num(cfg, "time", "cq_tol")
    if not dt > 0:
        raise ConfigError("[time] dt must be positive")
    if nsteps < 1:
        raise ConfigError("[time] nsteps must be at least 1")
    if not 0 < tol < 1:
        raise ConfigError("[time] cq_tol must lie in (0, 1)")
    k = _num(cfg, "discretization", "fem_order", int)
    p = _num(cfg, "discretization", "bem_order", int)
    if not 1 <= k <= 4:
        raise ConfigError("[discretization] fem_order must be 1..4")
    if not 1 <= p <= 4:
        raise ConfigError("[discretization] bem_order must be 1..4")

    m = cfg["material"]
    try:
        e = _vector(cfg, "material", "e_voigt", 6).reshape(2, 3)
        material = PiezoMaterial(
            c_voigt=c_from_upper(_vector(cfg, "material", "c_voigt", 6)),
            e_voigt=e,
            kappa_psi=_vector(cfg, "material", "kappa_psi", 3),
            rho=CoefficientField(str(m["rho"])),
            omega=CoefficientField(str(m["omega"])),
            kappa0=_num(cfg, "material", "kappa0"),
            kappa1=_num(cfg, "material", "kappa1"),
        )
    except MaterialError as exc:
        raise ConfigError(f"[material] {exc}") from exc

    mc = cfg["mesh"]
    if mc["path"]:
        mesh = load_mesh(mc["path"])
        mesh = _dirichlet_labels(mesh, cfg["boundary"]["dirichlet"])
    else:
        res = mc["resolution"]
        if isinstance(res, str):
            raise ConfigError("[mesh] resolution must be a panel count or a mesh size")
        mesh = builtin_geometry(str(mc["builtin"]), res)
        mesh = _dirichlet_labels(mesh, cfg["boundary"]["dirichlet"])

    ic = cfg["incident"]
    try:
        direction = _vector(cfg, "incident", "direction", 2)
        if ic["origin"] == "auto":
            # the front starts just behind the solid
            d = direction / np.linalg.norm(direction)
            origin = (float(np.min(mesh.vertices @ d)) - 0.05) * d
        else:
            origin = _vector(cfg, "incident", "origin", 2)
        wave = IncidentWave(
            kind=str(ic["kind"]), amplitude=_num(cfg, "incident", "amplitude"), direction=tuple(direction),
            omega=_num(cfg, "incident", "omega"), window=_num(cfg, "incident", "window"), origin=tuple(origin),
        )
        gc = cfg["grounding"]
        grounding = Grounding(
            kind=str(gc["kind"]), amplitude=_num(cfg, "grounding", "amplitude"),
            omega=_num(cfg, "grounding", "omega"), profile=CoefficientField(str(gc["profile"])),
        )
    except (ValueError, MaterialError) as exc:
        raise ConfigError(f"[incident/grounding] {exc}") from exc
    if ic["flux"] not in ("derivative", "pointwise"):
        raise ConfigError("[incident] flux must be 'derivative' or 'pointwise'")

    rc = cfg["receivers"]
    if rc["points"] == "rings":
        rec = receiver_rings(tuple(_vector(cfg, "receivers", "radii")), _num(cfg, "receivers", "count", int))
    else:
        rec = np.asarray(rc["points"], dtype=float).reshape(-1, 2)
    if len(rec) and np.any(mesh.contains(rec)):
        raise ConfigError("[receivers] receivers must lie strictly outside the solid")
    if len(rec):
        b = mesh.vertices[mesh.panels]
        from .mesh import _segment_distance

        if np.min(_segment_distance(rec, b[:, 0], b[:, 1])) <= 1e-10:
            raise ConfigError("[receivers] a receiver lies on the boundary")

    mode = cfg["solver"]["mode"]
    if mode not in ("coupled", "sound_soft"):
        raise ConfigError("[solver] mode must be 'coupled' or 'sound_soft'")
    if material.is_piezoelectric and mode == "coupled" and not np.any(mesh.panel_labels == Label.DIRICHLET):
        raise ConfigError("[boundary] piezoelectric coupling needs a nonempty Dirichlet boundary")
    raster = tuple(cfg["output"]["raster"]) if cfg["output"]["raster"] else ()
    if raster and len(raster) != 6:
        raise ConfigError("[output] raster is [xmin, xmax, ymin, ymax, nx, ny]")
    return Scenario(
        config=cfg, mesh=mesh, material=material, fem_order=k, bem_order=p, dt=dt, nsteps=nsteps,
        cq_tol=tol, incident=wave, grounding=grounding, receivers=rec, mode=mode, flux=str(ic["flux"]),
        sign=-1.0 if ic["flip_sign"] else 1.0, workers=_num(cfg, "solver", "workers", int),
        snapshot_times=[float(t) for t in cfg["output"]["snapshot_times"]], raster=raster,
    )


def make_problem(scn: Scenario):
    """Discretize a scenario and wrap it as a coupler problem."""
    from .coupler import Problem, discretize
    from .cq import CqScheme

    disc = discretize(scn.mesh, scn.material, scn.fem_order, scn.bem_order)
    return Problem(
        disc=disc, scheme=CqScheme(scn.dt, scn.nsteps, scn.cq_tol), incident=scn.incident,
        grounding=scn.grounding, receivers=scn.receivers, mode=scn.mode, flux=scn.flux,
        sign=scn.sign, workers=scn.workers,
    )
