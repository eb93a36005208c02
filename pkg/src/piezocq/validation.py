"""Oracle suite and refinement-ladder convergence studies."""

from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.special as sc
from numpy.polynomial import Polynomial

from . import bem, besselref, oracles
from .coupler import (
    assemble_frequency_system, discretize, interior_conservation_run, norm_operators,
    norm_timeseries, solve_scenario, Problem,
)
from .cq import CqScheme, convolve_transfer
from .incident import IncidentWave
from .material import PiezoMaterial, benchmark_material
from .mesh import boundary_of
from .scenarios import ConfigError, build_scenario, builtin_geometry, make_problem


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: measured {self.measured:.3e} (tol {self.tolerance:.1e}) {self.detail}".rstrip()


def _timed(fn, *args, **kw) -> Check:
    t0 = time.perf_counter()
    c = fn(*args, **kw)
    c.seconds = time.perf_counter() - t0
    return c


# --------------------------------------------------------------------------
# individual checks


def kernel_grid(n_mag: int = 20, n_ang: int = 10):
    """200 (s, r) pairs with Re s > 0 and |s r| between 1e-3 and 100."""
    mag = np.geomspace(1e-3, 100.0, n_mag)
    ang = np.linspace(-1.5, 1.5, n_ang)
    z = (mag[:, None] * np.exp(1j * ang[None])).ravel()
    r = np.geomspace(0.01, 3.0, len(z))
    return z / r, r


def check_kernel(tol: float = 1e-12, dps: int = 20) -> Check:
    s, r = kernel_grid()
    ref = np.array([besselref.kernel_reference(a, b, dps) for a, b in zip(s, r)])
    got = np.array([complex(bem.helmholtz_kernel(a, b)) for a, b in zip(s, r)])
    err = float(np.max(np.abs(got - ref) / np.abs(ref)))
    return Check("kernel vs extended-precision K0", err <= tol, err, tol, f"({len(s)} points)")


def circle_ritz_values(n_panels: int, s, bem_order: int = 2, nmax: int = 5, perturb_v: float = 0.0):
    """Ritz values of V(s) on the span of the projected Fourier modes
    cos(n theta), sin(n theta), n = 0..nmax, on the inscribed circle polygon."""
    mesh = builtin_geometry("circle", n_panels)
    bsp = bem.build_boundary_spaces(boundary_of(mesh), bem_order)
    V = bem.assemble_operators(bsp, s, which=("V",)).V
    if perturb_v:
        V = V * (1.0 + perturb_v)  # sensitivity canary
    M = bsp.M_X.toarray()
    out = []
    for n in range(nmax + 1):
        cols = [bsp.x_project(lambda q, n=n: np.cos(n * np.arctan2(q[:, 1], q[:, 0])))]
        if n:
            cols.append(bsp.x_project(lambda q, n=n: np.sin(n * np.arctan2(q[:, 1], q[:, 0]))))
        C = np.column_stack(cols)
        A = C.conj().T @ V @ C
        B = C.conj().T @ M @ C
        out.append(np.linalg.eigvals(np.linalg.solve(B, A)).mean())
    return np.array(out)


def check_circle_eigenvalues(tol: float = 1e-3, levels=(64, 128, 256), freqs=(1.0, 2 + 3j),
                             bem_order: int = 2, perturb_v: float = 0.0) -> Check:
    worst = 0.0
    monotone = True
    for s in freqs:
        exact = oracles.circle_v_eigenvalues(s, 5)
        errs = [
            float(np.max(np.abs(circle_ritz_values(n, s, bem_order, 5, perturb_v) - exact) / np.abs(exact)))
            for n in levels
        ]
        monotone &= all(a > b for a, b in zip(errs, errs[1:]))
        worst = max(worst, errs[-1])
    ok = worst <= tol and monotone
    return Check("circle single-layer eigenvalues n=0..5", ok, worst, tol,
                 f"({levels[-1]} panels, monotone={monotone})")


def cq_test_signal(T: float = 2.0) -> Polynomial:
    """g = t^4 (T - t)^4: causal, smooth, and flat at T so that the contour
    aliasing (which grows like 1/dt for F = s) stays negligible."""
    return Polynomial([0.0, 1.0]) ** 4 * Polynomial([T, -1.0]) ** 4


def cq_rate_errors(F, exact, dts=(0.02, 0.01, 0.005), T: float = 2.0):
    """Max errors of convolve_transfer(F) on the test signal and observed orders."""
    g = cq_test_signal(T)
    errs = []
    for dt in dts:
        sch = CqScheme(dt, int(round(T / dt)))
        t = sch.times
        errs.append(float(np.max(np.abs(convolve_transfer(F, g(t), sch) - exact(t)))))
    errs = np.array(errs)
    return errs, np.log2(errs[:-1] / errs[1:])


def check_cq_rates(target: float = 2.0, slack: float = 0.2) -> Check:
    g = cq_test_signal()
    _, r1 = cq_rate_errors(lambda s: 1.0 / s, g.integ())
    _, r2 = cq_rate_errors(lambda s: s, g.deriv())
    rates = np.concatenate([r1, r2])
    dev = float(np.max(np.abs(rates - target)))
    return Check("CQ temporal order (1/s and s)", dev <= slack, dev, slack,
                 f"(rates {np.round(rates, 3).tolist()})")


def scattered_arrival_times(mesh, wave, receivers, c: float = 1.0, samples: int = 50) -> np.ndarray:
    """Earliest time a scattered signal can reach each receiver: the wave
    front reaches boundary point y, then travels |x - y| / c."""
    a = mesh.vertices[mesh.panels[:, 0]]
    b = mesh.vertices[mesh.panels[:, 1]]
    t = np.linspace(0.0, 1.0, samples)
    y = (a[:, None] + t[None, :, None] * (b - a)[:, None]).reshape(-1, 2)
    hit = wave.arrival_time(y)
    rec = np.atleast_2d(receivers)
    return np.min(hit[None] + np.linalg.norm(rec[:, None] - y[None], axis=-1) / c, axis=1)


def _benchmark_disc(resolution=40, omega="0", e=True):
    m = benchmark_material(rho="5 + 25*exp(-100*r**2)", omega=omega)
    if not e:
        m = m.replace(e_voigt=np.zeros((2, 3)))
    return discretize(builtin_geometry("pentagon", resolution), m, 2, 1)


def check_conservation(tol: float = 1e-10, nsteps: int = 1000) -> Check:
    h = interior_conservation_run(_benchmark_disc(), T=1.0, nsteps=nsteps)
    drift = float(np.max(np.abs(h.energy - h.energy[0])) / h.energy[0])
    return Check("interior energy conservation (e != 0)", drift <= tol, drift, tol, f"({nsteps} steps)")


def check_damping(slack: float = 1e-12, nsteps: int = 1000) -> Check:
    undamped = interior_conservation_run(_benchmark_disc(), T=1.0, nsteps=nsteps)
    damped = interior_conservation_run(_benchmark_disc(omega="1"), T=1.0, nsteps=nsteps, damping=True)
    E = damped.energy
    rise = float(np.max(np.diff(E)) / E[0])
    ok = rise <= slack and E[-1] < undamped.energy[-1]
    return Check("damped energy nonincreasing", ok, max(rise, 0.0), slack,
                 f"(E(T) {E[-1]:.4g} vs undamped {undamped.energy[-1]:.4g})")


def check_degeneration(tol: float = 1e-10) -> Check:
    """e = 0 and zero grounding: the electric potential stays identically zero."""
    disc = _benchmark_disc(resolution=24, e=False)
    wave = IncidentWave("plane_pulse", direction=(1.0, 5.0), origin=(0.0, -0.6))
    pr = Problem(disc, CqScheme(0.02, 60), incident=wave)
    res = solve_scenario(pr)
    nops = norm_operators(disc)
    nrm = norm_timeseries(res, nops)
    ratio = float(nrm["psi_l2"].max() / nrm["u_l2"].max())
    return Check("degeneration e = 0 gives psi = 0", ratio <= tol, ratio, tol)


def disk_material(lam: float = 2.0, mu: float = 1.0, rho: float = 3.0) -> PiezoMaterial:
    return PiezoMaterial(
        c_voigt=[[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]],
        e_voigt=np.zeros((2, 3)), kappa_psi=[1.0, 1.0, 0.0], rho=str(rho),
    )


def disk_errors(n_panels: int, s, receivers=((1.7, 0.3), (-0.5, 2.2))):
    """(scattered field, radial displacement) relative errors of the coupled
    solve on the disk against the separated-variables solution."""
    mat = disk_material()
    disc = discretize(builtin_geometry("circle", n_panels), mat, 2, 1)
    system = assemble_frequency_system(disc, s)
    bq = disc.bquad
    x = bq.flat_points
    r = np.hypot(x[:, 0], x[:, 1])
    nrm = np.repeat(bq.normals, bq.points.shape[1], axis=0)
    b0 = sc.iv(0, s * r)
    b1 = mat.kappa0 * s * sc.iv(1, s * r) * ((x * nrm).sum(1) / r)
    u, _, lam, phi = system.solve(b0, b1)
    A, B, k = oracles.radial_disk(s, 2.0, 1.0, 3.0)
    rec = np.asarray(receivers, dtype=float)
    got = bem.eval_potentials(disc.bspaces, s, lam, phi, rec)
    exact = B * sc.kv(0, s * np.hypot(rec[:, 0], rec[:, 1]))
    X = disc.spaces.coords
    R = np.hypot(X[:, 0], X[:, 1])
    nS = len(X)
    ur = (u[:nS] * X[:, 0] + u[nS:] * X[:, 1]) / np.where(R > 0, R, 1.0)
    ur_exact = A * sc.iv(1, k * R)
    return (float(np.max(np.abs(got - exact)) / np.max(np.abs(exact))),
            float(np.max(np.abs(ur - ur_exact)) / np.max(np.abs(ur_exact))))


def check_disk_coupling(levels=(32, 64), s=1 + 3j) -> Check:
    e = [disk_errors(n, s)[0] for n in levels]
    rate = math.log2(e[0] / e[1])
    return Check("coupled disk vs separated variables", rate >= 1.7, rate, 1.7,
                 f"(observed spatial order; errors {e[0]:.2e}, {e[1]:.2e})")


CHECKS = {
    "kernel": check_kernel,
    "circle": check_circle_eigenvalues,
    "cq": check_cq_rates,
    "conservation": check_conservation,
    "damping": check_damping,
    "degeneration": check_degeneration,
    "disk": check_disk_coupling,
}


def validate(perturb_v: float = 0.0, only=None, printer=print) -> list[Check]:
    """Run the oracle suite. ``perturb_v`` scales the assembled single layer
    operator in the eigenvalue check (a hook for the sensitivity canary)."""
    out = []
    for name, fn in CHECKS.items():
        if only and name not in only:
            continue
        c = _timed(fn, perturb_v=perturb_v) if name == "circle" else _timed(fn)
        if printer:
            printer(c.line() + f" [{c.seconds:.1f}s]")
        out.append(c)
    return out


# --------------------------------------------------------------------------
# convergence ladders


@dataclass
class LadderRow:
    level: int
    dt: float
    panels: int
    error: float
    order: float  # from successive differences, NaN where undefined


def _rel_l2(a, b) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def convergence(cfg: dict) -> list[LadderRow]:
    """Refinement ladder described by the [convergence] section.

    time: dt halves (nsteps doubles) per level at fixed mesh; the error of
    each level is measured against the finest run on the coarse time grid.
    space: the mesh resolution doubles per level at fixed dt; the reference
    is the finest run or, for a sound-soft circle, the Fourier-Bessel oracle.
    Observed orders come from ratios of successive level differences.
    """
    cc = cfg["convergence"]
    kind, levels, reference = cc["kind"], cc["levels"], cc["reference"]
    if kind not in ("time", "space"):
        raise ConfigError("[convergence] kind must be 'time' or 'space'")
    if not isinstance(levels, int) or levels < 3:
        raise ConfigError("[convergence] levels must be an integer >= 3")
    if reference not in ("finest", "oracle"):
        raise ConfigError("[convergence] reference must be 'finest' or 'oracle'")
    base = build_scenario(cfg)
    if not len(base.receivers):
        raise ConfigError("[convergence] needs at least one receiver")
    if reference == "oracle" and not (
        kind == "space" and base.mode == "sound_soft" and cfg["mesh"]["builtin"] == "circle" and not cfg["mesh"]["path"]
    ):
        raise ConfigError("[convergence] the oracle reference needs a sound-soft builtin circle space ladder")

    signals, rows = [], []
    for j in range(levels):
        c = copy.deepcopy(cfg)
        if kind == "time":
            c["time"]["dt"] = base.dt / 2**j
            c["time"]["nsteps"] = base.nsteps * 2**j
        else:
            res = cfg["mesh"]["resolution"]
            c["mesh"]["resolution"] = res * 2**j if isinstance(res, int) else res / 2**j
        scn = build_scenario(c)
        pr = make_problem(scn)
        res_ = solve_scenario(pr)
        sig = res_.scattered
        if kind == "time":
            sig = sig[:: 2**j]  # back on the coarsest grid
        signals.append(sig)
        rows.append(LadderRow(j, scn.dt, len(scn.mesh.panels), math.nan, math.nan))
    if reference == "oracle":
        ref = oracles.sound_soft_circle(base.incident, CqScheme(base.dt, base.nsteps, base.cq_tol), base.receivers)
        ref = base.sign * ref
        compare = signals
    else:
        ref = signals[-1]
        compare = signals[:-1]
    for row, sig in zip(rows, compare):
        row.error = _rel_l2(sig, ref)
    diffs = [np.linalg.norm(a - b) for a, b in zip(signals, signals[1:])]
    for j in range(len(diffs) - 1):
        rows[j + 1].order = math.log2(diffs[j] / diffs[j + 1])
    if reference == "oracle":
        errs = [r.error for r in rows]
        for j in range(1, len(rows)):
            rows[j].order = math.log2(errs[j - 1] / errs[j])
    return rows


def write_ladder(rows: list[LadderRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("level,dt,panels,error,order\n")
        for r in rows:
            fh.write(f"{r.level},{r.dt:.17g},{r.panels},{r.error:.17g},{r.order:.17g}\n")
