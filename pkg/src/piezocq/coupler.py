"""Coupled FEM/BEM frequency systems, the CQ time solve and post-processing.

At each CQ frequency s the unknowns (u, psi_free, lambda, phi) satisfy

  (E1) (s^2 M_rho + s M_omega + K_C) u + K_ef psi - s T phi = -s Q beta0 - K_eD mu
  (E2) -K_ef^T u + K_ff psi                              = -N_f eta  - K_fD mu
  (E3) s T^T u + k0 (-1/2 M_XY^T + Kt) lambda + k0 W phi = -<beta1, zeta>
  (E4) V lambda + (1/2 M_XY - K) phi                     = 0

with the layer operators taken at s / c. The scattered acoustic field is
S lambda - D phi, the total field is incident + scattered.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import bem
from .cq import CqScheme, weighted_dft
from .fem import (
    FemBlocks, FemSpaces, assemble_blocks, build_spaces, trace_coupling,
)
from .incident import Grounding, IncidentWave
from .material import PiezoMaterial, validate_material
from .mesh import TriMesh

log = logging.getLogger(__name__)


class CouplingError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


@dataclass(eq=False)
class Discretization:
    mesh: TriMesh
    material: PiezoMaterial
    spaces: FemSpaces
    blocks: FemBlocks
    bspaces: bem.BoundarySpaces
    T: sp.csr_matrix  # (n_vector, n_y)
    y_load: sp.csr_matrix  # samples at blocks.bquad -> <g, zeta>
    x_load: sp.csr_matrix

    @property
    def bquad(self):
        return self.blocks.bquad

    @property
    def n_u(self) -> int:
        return self.spaces.n_vector

    @property
    def free(self) -> np.ndarray:
        return self.spaces.free

    @property
    def dirichlet(self) -> np.ndarray:
        return self.spaces.dirichlet


def discretize(mesh: TriMesh, material: PiezoMaterial, fem_order: int = 2, bem_order: int = 1) -> Discretization:
    spaces = build_spaces(mesh, fem_order)
    validate_material(material, spaces.coords)
    if material.is_piezoelectric and len(spaces.dirichlet) == 0:
        raise CouplingError("piezoelectric coupling needs a nonempty Dirichlet boundary")
    blocks = assemble_blocks(spaces, material)
    boundary = spaces.boundary
    bsp = bem.build_boundary_spaces(boundary, bem_order)
    T = trace_coupling(spaces, bsp.y_panel_dofs, bem_order, bsp.n_y)
    return Discretization(
        mesh, material, spaces, blocks, bsp, T, bsp.y_load(blocks.bquad), bsp.x_load(blocks.bquad)
    )


# --------------------------------------------------------------------------
# one frequency


@dataclass(eq=False)
class FrequencyBlockSystem:
    """The block system (E1)-(E4) at one frequency, solved by eliminating
    the interior unknowns into a dense boundary Schur complement."""

    s: complex
    disc: Discretization
    ops: bem.LayerOperators

    def __post_init__(self):
        d = self.disc
        if self.ops.V.shape[0] != d.bspaces.n_x or self.T.shape[1] != d.bspaces.n_y:
            raise CouplingError("FEM trace and boundary element spaces do not match")
        s = self.s
        b = d.blocks
        f = d.free
        A = (s * s) * b.M_rho + b.K_C
        if b.has_damping:
            A = A + s * b.M_omega
        Kef = b.K_e[:, f]
        Kff = b.K_kappa[f][:, f]
        self.interior = sp.bmat([[A, Kef], [-Kef.T, Kff]], format="csc")
        try:
            self._lu = spla.splu(self.interior)
        except RuntimeError as exc:
            raise SolverError(f"interior factorization failed at s = {s}: {exc}") from exc
        nU = d.n_u
        rhsT = np.zeros((self.interior.shape[0], d.bspaces.n_y), dtype=complex)
        rhsT[:nU] = self.T.toarray()
        self._Zu = self._lu.solve(rhsT)[:nU]  # S^-1 [T; 0], displacement rows
        k0 = d.material.kappa0
        M = d.bspaces.M_XY.toarray()
        V, K, W = self.ops.V, self.ops.K, self.ops.W
        TtZ = self.T.T @ self._Zu
        top = np.hstack([k0 * (-0.5 * M.T + K.T), k0 * W + (s * s) * TtZ])
        bot = np.hstack([V, 0.5 * M - K])
        self.schur = np.vstack([top, bot])
        try:
            self._schur_lu = sla.lu_factor(self.schur, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SolverError(f"boundary Schur complement failed at s = {s}: {exc}") from exc

    @property
    def T(self):
        return self.disc.T

    def interior_rhs(self, beta0_hat=None, mu_hat=None, eta_hat=None) -> np.ndarray:
        d = self.disc
        b = d.blocks
        f, D = d.free, d.dirichlet
        nU = d.n_u
        r = np.zeros(self.interior.shape[0], dtype=complex)
        if beta0_hat is not None:
            r[:nU] -= self.s * (b.Q_trace @ beta0_hat)
        if mu_hat is not None and len(D):
            r[:nU] -= b.K_e[:, D] @ mu_hat
            r[nU:] -= b.K_kappa[f][:, D] @ mu_hat
        if eta_hat is not None:
            r[nU:] -= (b.N_gamma @ eta_hat)[f]
        return r

    def solve(self, beta0_hat=None, beta1_hat=None, mu_hat=None, eta_hat=None):
        """Returns (u, psi_free, lambda, phi)."""
        d = self.disc
        nU = d.n_u
        nX = d.bspaces.n_x
        z0 = self._lu.solve(self.interior_rhs(beta0_hat, mu_hat, eta_hat))
        rhs = np.zeros(nX + d.bspaces.n_y, dtype=complex)
        b1 = np.zeros(d.bspaces.n_y, dtype=complex) if beta1_hat is None else d.y_load @ beta1_hat
        rhs[: d.bspaces.n_y] = -b1 - self.s * (self.T.T @ z0[:nU])
        sol = sla.lu_solve(self._schur_lu, rhs)
        lam, phi = sol[:nX], sol[nX:]
        u = z0[:nU] + self.s * (self._Zu @ phi)
        # psi from the second block row, given u
        w = np.zeros(self.interior.shape[0], dtype=complex)
        w[:nU] = self.T @ phi
        psi_f = z0[nU:] + self.s * self._lu.solve(w)[nU:]
        return u, psi_f, lam, phi

    def full_matrix(self) -> np.ndarray:
        """Dense (E1)-(E4) matrix in the unknown order (u, psi_f, lambda, phi)."""
        d = self.disc
        s = self.s
        nI = self.interior.shape[0]
        nU = d.n_u
        nX, nY = d.bspaces.n_x, d.bspaces.n_y
        k0 = d.material.kappa0
        M = d.bspaces.M_XY.toarray()
        A = np.zeros((nI + nX + nY,) * 2, dtype=complex)
        A[:nI, :nI] = self.interior.toarray()
        A[:nU, nI + nX :] = -s * self.T.toarray()
        A[nI : nI + nY, :nU] = s * self.T.T.toarray()
        A[nI : nI + nY, nI : nI + nX] = k0 * (-0.5 * M.T + self.ops.K.T)
        A[nI : nI + nY, nI + nX :] = k0 * self.ops.W
        A[nI + nY :, nI : nI + nX] = self.ops.V
        A[nI + nY :, nI + nX :] = 0.5 * M - self.ops.K
        return A


def assemble_frequency_system(disc: Discretization, s: complex, ops: bem.LayerOperators | None = None):
    c = disc.material.c_sound
    if ops is None:
        ops = bem.assemble_operators(disc.bspaces, complex(s) / c)
    return FrequencyBlockSystem(complex(s), disc, ops)


# --------------------------------------------------------------------------
# time domain


@dataclass
class Problem:
    disc: Discretization
    scheme: CqScheme
    incident: IncidentWave = field(default_factory=IncidentWave)
    grounding: Grounding = field(default_factory=Grounding)
    eta: np.ndarray | None = None  # Neumann samples (n_times, n_bquad)
    receivers: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    mode: str = "coupled"  # or "sound_soft"
    flux: str = "derivative"  # beta1 from s * beta0 ("derivative") or sampled ("pointwise")
    sign: float = 1.0  # multiplies (beta0, beta1)
    workers: int = 1


@dataclass(eq=False)
class SimulationResult:
    times: np.ndarray
    u: np.ndarray  # (n_times, n_vector)
    psi: np.ndarray  # (n_times, n_scalar), Dirichlet values included
    lam: np.ndarray
    phi: np.ndarray
    receivers: np.ndarray  # points
    scattered: np.ndarray  # (n_times, n_receivers)
    incident: np.ndarray
    psi_ground: np.ndarray | None = None  # electrostatic grounding field (u = 0)
    frequency_data: dict = field(default_factory=dict, repr=False)

    @property
    def total(self) -> np.ndarray:
        return self.incident + self.scattered


def _parallel_map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def transformed_data(problem: Problem):
    """CQ-transformed boundary data at the retained frequencies."""
    disc, sch = problem.disc, problem.scheme
    t = sch.times
    bq = disc.bquad
    pts = bq.flat_points
    wave = problem.incident
    out = {}
    if not wave.is_zero:
        tau = wave.tau(t, pts)
        if np.max(tau[0]) > 1e-12:
            raise CouplingError("incident wave has reached the boundary at t = 0 (non-causal data)")
        beta0 = problem.sign * wave.profile(tau)
        out["beta0"] = weighted_dft(beta0, sch, "forward", real=True)
        nrm = np.repeat(bq.normals, bq.points.shape[1], axis=0)
        fac = -disc.material.kappa0 * (nrm @ wave.d)
        if problem.flux == "pointwise":
            beta1 = problem.sign * wave.profile_derivative(tau) * fac[None]
            out["beta1"] = weighted_dft(beta1, sch, "forward", real=True)
        elif problem.flux == "derivative":
            # d/dt of the sampled trace, so window jumps enter the flux too
            s = sch.retained_frequencies
            out["beta1"] = out["beta0"] * s[:, None] * fac[None]
        else:
            raise CouplingError(f"unknown flux mode {problem.flux!r}")
    if not problem.grounding.is_zero and len(disc.dirichlet):
        g = problem.grounding
        prof = g.profile(*disc.spaces.coords[disc.dirichlet].T)
        gt = g.time_factor(t)
        if gt[0] != 0:
            raise CouplingError("grounding potential is nonzero at t = 0 (non-causal data)")
        out["mu"] = np.outer(weighted_dft(gt, sch, "forward", real=True), prof)
        out["mu_profile"] = prof
        out["mu_time"] = gt
    if problem.eta is not None:
        out["eta"] = weighted_dft(np.asarray(problem.eta, dtype=float), sch, "forward", real=True)
    return out


def solve_scenario(problem: Problem, keep_frequency_data: bool = False) -> SimulationResult:
    disc, sch = problem.disc, problem.scheme
    data = transformed_data(problem)
    s_all = sch.retained_frequencies
    c = disc.material.c_sound
    nU, nS = disc.n_u, disc.spaces.n_scalar
    nX, nY = disc.bspaces.n_x, disc.bspaces.n_y
    f = disc.free
    rec = np.asarray(problem.receivers, dtype=float).reshape(-1, 2)
    if len(rec) and np.any(disc.mesh.contains(rec)):
        raise CouplingError("receivers must lie outside the solid")

    def get(name, l):
        arr = data.get(name)
        return None if arr is None else arr[l]

    def one(l):
        s = complex(s_all[l])
        try:
            if problem.mode == "sound_soft":
                ops = bem.assemble_operators(disc.bspaces, s / c, which=("V",))
                rhs = np.zeros(nX, dtype=complex)
                b0 = get("beta0", l)
                if b0 is not None:
                    rhs = -(disc.x_load @ b0)
                lam = np.linalg.solve(ops.V, rhs)
                u = np.zeros(nU, dtype=complex)
                psi_f = np.zeros(len(f), dtype=complex)
                phi = np.zeros(nY, dtype=complex)
            else:
                system = assemble_frequency_system(disc, s)
                u, psi_f, lam, phi = system.solve(get("beta0", l), get("beta1", l), get("mu", l), get("eta", l))
        except (np.linalg.LinAlgError, bem.QuadratureError) as exc:
            raise SolverError(f"frequency {l} (s = {s:.6g}) failed: {exc}") from exc
        scat = bem.eval_potentials(disc.bspaces, s / c, lam, phi, rec) if len(rec) else np.zeros(0, complex)
        return u, psi_f, lam, phi, scat

    results = _parallel_map(one, range(len(s_all)), problem.workers)
    U = np.array([r[0] for r in results])
    PF = np.array([r[1] for r in results])
    L = np.array([r[2] for r in results])
    P = np.array([r[3] for r in results])
    R = np.array([r[4] for r in results]).reshape(len(s_all), len(rec))

    inv = lambda a: weighted_dft(a, sch, "inverse", real=True)  # noqa: E731
    times = sch.times
    psi = np.zeros((len(times), nS))
    psi[:, f] = inv(PF)
    psi_ground = None
    if "mu" in data:
        psi[:, disc.dirichlet] = np.outer(data["mu_time"], data["mu_profile"])
        psi_ground = _grounding_field(disc, data["mu_time"], data["mu_profile"])
    inc = np.zeros((len(times), len(rec)))
    if len(rec) and not problem.incident.is_zero:
        inc = problem.sign * problem.incident.value(times, rec)
    freq = {"s": s_all, "lam": L, "phi": P} if keep_frequency_data else {}
    return SimulationResult(
        times=times, u=inv(U), psi=psi, lam=inv(L), phi=inv(P), receivers=rec,
        scattered=inv(R) if len(rec) else np.zeros((len(times), 0)), incident=inc,
        psi_ground=psi_ground, frequency_data=freq,
    )


def _grounding_field(disc: Discretization, gt, profile) -> np.ndarray:
    """Electrostatic potential of the grounding alone (u = 0, eta = 0)."""
    from .fem import ElectricSolver

    solver = ElectricSolver(disc.blocks, disc.spaces)
    base = solver.solve(None, None, profile)
    return np.outer(gt, base)


def receiver_signatures(result: SimulationResult, disc: Discretization, points, incident: IncidentWave,
                        scheme: CqScheme, sign: float = 1.0) -> np.ndarray:
    """Total field at ``points`` from stored frequency-domain densities."""
    fd = result.frequency_data
    if not fd:
        raise ValueError("result was computed without frequency data")
    pts = np.atleast_2d(points)
    c = disc.material.c_sound
    vals = np.array([
        bem.eval_potentials(disc.bspaces, s / c, lam, phi, pts)
        for s, lam, phi in zip(fd["s"], fd["lam"], fd["phi"])
    ])
    scat = weighted_dft(vals, scheme, "inverse", real=True)
    return scat + (0.0 if incident.is_zero else sign * incident.value(scheme.times, pts))


# --------------------------------------------------------------------------
# norms


NORM_COLUMNS = ("psi_l2", "grad_psi_l2", "u_l2", "u_h1", "phi_half", "lambda_mhalf")


@dataclass(eq=False)
class NormOperators:
    M_scalar: sp.csr_matrix
    L_scalar: sp.csr_matrix
    V1: np.ndarray
    W1: np.ndarray
    M_Y: sp.csr_matrix


def norm_operators(disc: Discretization) -> NormOperators:
    ops = bem.assemble_operators(disc.bspaces, 1.0)
    return NormOperators(disc.blocks.M_scalar, disc.blocks.L_scalar, ops.V, ops.W, disc.bspaces.M_Y)


def _quad_rows(A, X):
    return np.maximum(np.einsum("ti,ti->t", X, (A @ X.T).T), 0.0)


def norm_timeseries(result: SimulationResult, nops: NormOperators, induced_psi: bool = True) -> dict:
    """Norm histories. With ``induced_psi`` the electric columns measure the
    potential induced by the solid, psi minus the static grounding field."""
    M, L = nops.M_scalar, nops.L_scalar
    psi = result.psi
    if induced_psi and result.psi_ground is not None:
        psi = psi - result.psi_ground
    nS = M.shape[0]
    ux, uy = result.u[:, :nS], result.u[:, nS:]
    u_l2 = _quad_rows(M, ux) + _quad_rows(M, uy)
    u_grad = _quad_rows(L, ux) + _quad_rows(L, uy)
    out = {
        "t": result.times,
        "psi_l2": np.sqrt(_quad_rows(M, psi)),
        "grad_psi_l2": np.sqrt(_quad_rows(L, psi)),
        "u_l2": np.sqrt(u_l2),
        "u_h1": np.sqrt(u_l2 + u_grad),
        "phi_half": np.sqrt(_quad_rows(nops.W1, result.phi) + _quad_rows(nops.M_Y, result.phi)),
        "lambda_mhalf": np.sqrt(_quad_rows(nops.V1, result.lam)),
    }
    if result.psi_ground is not None:
        out["psi_total_l2"] = np.sqrt(_quad_rows(M, result.psi))
    return out


# --------------------------------------------------------------------------
# interior energy check


@dataclass
class EnergyHistory:
    times: np.ndarray
    energy: np.ndarray


def interior_conservation_run(disc_or_blocks, spaces: FemSpaces | None = None, T: float = 1.0,
                              nsteps: int = 1000, u0=None, v0=None, damping: bool = False,
                              seed: int = 0) -> EnergyHistory:
    """Trapezoidal integration of M u'' + (M_omega u') + K_C u + K_e psi = 0,
    K_kappa psi = K_e^T u (psi = 0 on Gamma_D), no boundary exchange.

    Energy E = 1/2 v M v + 1/2 u K_C u + 1/2 psi K_kappa psi.
    """
    if isinstance(disc_or_blocks, Discretization):
        blocks, spaces = disc_or_blocks.blocks, disc_or_blocks.spaces
    else:
        blocks = disc_or_blocks
    f = spaces.free
    M, KC = blocks.M_rho, blocks.K_C
    Kef = blocks.K_e[:, f]
    Kff = blocks.K_kappa[f][:, f].tocsc()
    Mo = blocks.M_omega if damping else None
    dt = T / nsteps
    if u0 is None or v0 is None:
        rng = np.random.default_rng(seed)
        x, y = spaces.coords[:, 0], spaces.coords[:, 1]
        a = rng.normal(size=(2, 4))

        def smooth(c):
            return c[0] * np.sin(2 * x + 1) + c[1] * np.cos(3 * y) + c[2] * x * y + c[3] * np.cos(x - 2 * y)

        u0 = np.concatenate([smooth(a[0]), smooth(a[1])]) if u0 is None else u0
        b = rng.normal(size=(2, 4))
        v0 = np.concatenate([smooth(b[0]), smooth(b[1])]) if v0 is None else v0
    kff_lu = spla.splu(Kff)

    def energy(u, v):
        psi = kff_lu.solve(Kef.T @ u)
        return 0.5 * v @ (M @ v) + 0.5 * u @ (KC @ u) + 0.5 * psi @ (Kff @ psi)

    c = dt * dt / 4.0
    lhs_u = M + c * KC + (0.5 * dt * Mo if Mo is not None else 0)
    lhs = sp.bmat([[lhs_u, c * Kef], [-Kef.T, Kff]], format="csc")
    lu = spla.splu(lhs)
    nU = M.shape[0]

    def apply_keff(u):
        return KC @ u + Kef @ kff_lu.solve(Kef.T @ u)

    u, v = np.asarray(u0, float).copy(), np.asarray(v0, float).copy()
    E = [energy(u, v)]
    for _ in range(nsteps):
        rhs = M @ v - c * apply_keff(v) - dt * apply_keff(u)
        if Mo is not None:
            rhs = rhs - 0.5 * dt * (Mo @ v)
        full = np.zeros(lhs.shape[0])
        full[:nU] = rhs
        v1 = lu.solve(full)[:nU]
        u = u + 0.5 * dt * (v + v1)
        v = v1
        E.append(energy(u, v))
    return EnergyHistory(dt * np.arange(nsteps + 1), np.array(E))


# --------------------------------------------------------------------------
# snapshots


@dataclass
class SnapshotFrame:
    t: float
    x: np.ndarray
    y: np.ndarray
    acoustic: np.ndarray  # total field outside the solid, NaN inside
    u_magnitude: np.ndarray  # |u| inside the solid, NaN outside


def raster_points(raster) -> tuple[np.ndarray, np.ndarray]:
    xmin, xmax, ymin, ymax, nx, ny = raster
    X, Y = np.meshgrid(np.linspace(xmin, xmax, int(nx)), np.linspace(ymin, ymax, int(ny)))
    return X.ravel(), Y.ravel()


def snapshot_frames(problem: Problem, result: SimulationResult, times, raster) -> list[SnapshotFrame]:
    """Frames at the time steps nearest to ``times``; needs a result computed
    with ``keep_frequency_data=True``."""
    from .fem import PointLocator

    fd = result.frequency_data
    if not fd:
        raise ValueError("snapshots need the frequency-domain densities")
    disc, sch = problem.disc, problem.scheme
    x, y = raster_points(raster)
    pts = np.column_stack([x, y])
    inside = disc.mesh.contains(pts)
    b = disc.spaces.boundary
    d = b.b - b.a
    tproj = np.clip(((pts[:, None, :] - b.a[None]) * d[None]).sum(-1) / (b.lengths ** 2)[None], 0, 1)
    dist = np.linalg.norm(pts[:, None, :] - (b.a[None] + tproj[..., None] * d[None]), axis=-1).min(1)
    outside = ~inside & (dist > 1e-3 * float(b.lengths.min()))
    c = disc.material.c_sound
    hat = np.array([
        bem.eval_potentials(disc.bspaces, s / c, lam, phi, pts[outside])
        for s, lam, phi in zip(fd["s"], fd["lam"], fd["phi"])
    ]).reshape(len(fd["s"]), int(outside.sum()))
    scat = weighted_dft(hat, sch, "inverse", real=True)
    steps = sorted({int(np.clip(round(t / sch.dt), 0, sch.nsteps)) for t in times})
    loc = PointLocator(disc.spaces)
    nS = disc.spaces.n_scalar
    frames = []
    for n in steps:
        ac = np.full(len(pts), np.nan)
        ac[outside] = scat[n]
        if not problem.incident.is_zero:
            ac[outside] += problem.sign * problem.incident.value(sch.times[n], pts[outside])
        ux, uy = loc.evaluate(np.vstack([result.u[n, :nS], result.u[n, nS:]]), pts)
        um = np.hypot(ux, uy)
        um[~inside] = np.nan
        frames.append(SnapshotFrame(float(sch.times[n]), x, y, ac, um))
    return frames
