"""Command line entry point: run, validate, convergence, mesh.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 validation failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bem import PotentialError, QuadratureError
from .coupler import (
    NORM_COLUMNS, CouplingError, SolverError, norm_operators, norm_timeseries, snapshot_frames, solve_scenario,
)
from .cq import CqError
from .material import MaterialError
from .mesh import MeshError, save_mesh
from .scenarios import GEOMETRIES, ConfigError, build_scenario, builtin_geometry, make_problem, read_config

log = logging.getLogger("piezocq")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4
CONFIG_ERRORS = (ConfigError, MaterialError, MeshError, CouplingError, CqError)
NUMERIC_ERRORS = (SolverError, QuadratureError, PotentialError, np.linalg.LinAlgError, FloatingPointError)


# --------------------------------------------------------------------------
# output helpers


def write_csv(path, header, columns) -> Path:
    """Columns of equal length, full double precision (repr of float)."""
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in data.tolist():
            fh.write(",".join(repr(v) for v in row) + "\n")
    return Path(path)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def load_config(path) -> dict:
    """An INI scenario file or a manifest.json from an earlier run."""
    path = Path(path)
    if path.suffix == ".json":
        try:
            man = json.loads(path.read_text())
            cfg = man["config"]
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot read manifest {path}: {exc}") from exc
        cfg["_source"] = str(path)
        return cfg
    return read_config(path)


def resolved_config(scn) -> dict:
    """The config with derived values (origin, receivers) made explicit."""
    cfg = {k: dict(v) for k, v in scn.config.items() if not k.startswith("_")}
    cfg["incident"]["origin"] = list(scn.incident.origin)
    cfg["incident"]["direction"] = list(scn.incident.direction)
    cfg["receivers"]["points"] = scn.receivers.tolist()
    return cfg


# --------------------------------------------------------------------------
# commands


def run(config_path, out_dir=None, workers=None, figures=None, snapshots=True) -> dict:
    """Run one scenario and write its outputs; returns the manifest."""
    cfg = load_config(config_path)
    if out_dir is not None:
        cfg["output"]["directory"] = str(out_dir)
    if workers is not None:
        cfg["solver"]["workers"] = int(workers)
    scn = build_scenario(cfg)
    out = Path(cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    problem = make_problem(scn)
    want_snap = snapshots and bool(scn.snapshot_times) and bool(scn.raster)
    t0 = time.perf_counter()
    log.info("solving %d frequencies", len(problem.scheme.retained_frequencies))
    result = solve_scenario(problem, keep_frequency_data=want_snap)
    elapsed = time.perf_counter() - t0

    files = []
    norms = norm_timeseries(result, norm_operators(problem.disc))
    files.append(write_csv(out / "norms.csv", ("t",) + NORM_COLUMNS, [norms["t"]] + [norms[k] for k in NORM_COLUMNS]))
    rec_hdr = ("t",) + tuple(f"r{i}" for i in range(len(result.receivers)))
    files.append(write_csv(out / "receivers.csv", rec_hdr, [result.times] + list(result.total.T)))
    files.append(write_csv(out / "receivers_scattered.csv", rec_hdr, [result.times] + list(result.scattered.T)))

    frames = []
    if want_snap:
        snap_dir = out / "snapshots"
        snap_dir.mkdir(exist_ok=True)
        frames = snapshot_frames(problem, result, scn.snapshot_times, scn.raster)
        for i, fr in enumerate(frames):
            files.append(write_csv(snap_dir / f"frame_{i:04d}.csv", ("x", "y", "acoustic", "u_abs"),
                                   [fr.x, fr.y, fr.acoustic, fr.u_magnitude]))

    make_figs = cfg["output"]["figures"] if figures is None else figures
    if make_figs:
        from . import plotting

        plotting.plot_norms(norms, out / "norms.png")
        if len(result.receivers):
            plotting.plot_receivers(result.times, result.total, out / "receivers.png")
        plotting.plot_setup(scn.mesh, scn.receivers, out / "setup.png", scn.incident)
        shape = (int(scn.raster[5]), int(scn.raster[4])) if scn.raster else None
        for i, fr in enumerate(frames):
            plotting.plot_snapshot(fr, shape, out / "snapshots" / f"frame_{i:04d}.png")

    d = problem.disc
    manifest = {
        "package": {"name": "piezocq", "version": __version__},
        "environment": {"python": platform.python_version(), "numpy": np.__version__},
        "config": resolved_config(scn),
        "discretization": {
            "n_triangles": int(len(scn.mesh.triangles)), "n_panels": int(len(scn.mesh.panels)),
            "n_displacement_dofs": int(d.n_u), "n_potential_dofs": int(d.spaces.n_scalar),
            "n_dirichlet_dofs": int(len(d.dirichlet)), "n_x": int(d.bspaces.n_x), "n_y": int(d.bspaces.n_y),
            "cq_radius": float(problem.scheme.lam), "n_frequencies_solved": int(len(problem.scheme.retained_frequencies)),
            "final_time": float(problem.scheme.times[-1]),
        },
        "snapshot_times_used": [fr.t for fr in frames],
        "solve_seconds": elapsed,
        "outputs": {str(p.relative_to(out)): sha256(p) for p in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest


def _cmd_run(args) -> int:
    man = run(args.config, args.out, args.workers, False if args.no_figures else None, not args.no_snapshots)
    print(f"wrote {len(man['outputs'])} files; solve took {man['solve_seconds']:.1f} s")
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .validation import validate

    checks = validate(perturb_v=args.perturb_v, only=args.only or None)
    bad = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(bad)}/{len(checks)} checks passed")
    return EXIT_VALIDATION if bad else EXIT_OK


def _cmd_convergence(args) -> int:
    from .validation import convergence, write_ladder

    cfg = load_config(args.config)
    rows = convergence(cfg)
    out = Path(args.out or cfg["output"]["directory"])
    out.mkdir(parents=True, exist_ok=True)
    write_ladder(rows, out / "convergence.csv")
    for r in rows:
        print(f"level {r.level}: dt={r.dt:.4g} panels={r.panels} error={r.error:.3e} order={r.order:.2f}")
    return EXIT_OK


def _cmd_mesh(args) -> int:
    try:
        res = float(args.resolution)
    except ValueError:
        raise ConfigError(f"resolution must be a number, got {args.resolution!r}") from None
    if not res > 0:
        raise ConfigError("resolution must be positive")
    res = int(res) if res >= 1 else res
    mesh = builtin_geometry(args.name, res)
    save_mesh(mesh, args.out)
    print(f"{args.name}: {len(mesh.triangles)} triangles, {len(mesh.panels)} boundary panels -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="piezocq", description="Transient piezoelectric scattering by FEM/BEM and CQ.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario config (or a manifest.json)")
    r.add_argument("config")
    r.add_argument("--out", help="output directory (overrides the config)")
    r.add_argument("--workers", type=int)
    r.add_argument("--no-figures", action="store_true")
    r.add_argument("--no-snapshots", action="store_true")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("validate", help="run the oracle suite")
    v.add_argument("--perturb-v", type=float, default=0.0, help="relative perturbation of V (sensitivity canary)")
    v.add_argument("--only", nargs="*", help="subset of checks")
    v.set_defaults(func=_cmd_validate)

    c = sub.add_parser("convergence", help="refinement ladder from the [convergence] section")
    c.add_argument("config")
    c.add_argument("--out")
    c.set_defaults(func=_cmd_convergence)

    m = sub.add_parser("mesh", help="write a builtin geometry as a Gmsh 2.2 file")
    m.add_argument("name", choices=GEOMETRIES)
    m.add_argument("resolution", help="panel count (integer) or mesh size (< 1)")
    m.add_argument("out")
    m.set_defaults(func=_cmd_mesh)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
