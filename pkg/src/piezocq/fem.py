"""Lagrange finite elements on triangles: spaces, assembly of the
elastic/electric blocks and the quasi-static electric solve."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .material import PiezoMaterial
from .mesh import Label, TriMesh, boundary_of
from .quadrature import PanelQuadrature, lagrange_1d, triangle_rule

MAX_ORDER = 4


class FemError(ValueError):
    pass


@lru_cache(maxsize=None)
def reference_nodes(k: int) -> np.ndarray:
    """Local node coordinates on the reference triangle (0,0), (1,0), (0,1):
    vertices, then k-1 nodes on each edge v0->v1, v1->v2, v2->v0, then the
    interior lattice points."""
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    nodes = [verts[0], verts[1], verts[2]]
    for a, b in ((0, 1), (1, 2), (2, 0)):
        for m in range(1, k):
            nodes.append(verts[a] + (verts[b] - verts[a]) * (m / k))
    for j in range(1, k):
        for i in range(1, k - j):
            nodes.append(np.array([i / k, j / k]))
    return np.array(nodes)


def _monomials(k, x, y):
    cols = []
    dx = []
    dy = []
    for d in range(k + 1):
        for j in range(d + 1):
            i = d - j
            cols.append(x**i * y**j)
            dx.append(i * x ** max(i - 1, 0) * y**j if i > 0 else np.zeros_like(x))
            dy.append(j * x**i * y ** max(j - 1, 0) if j > 0 else np.zeros_like(x))
    return np.stack(cols, -1), np.stack(dx, -1), np.stack(dy, -1)


@lru_cache(maxsize=None)
def _basis_coefficients(k: int) -> np.ndarray:
    nodes = reference_nodes(k)
    V, _, _ = _monomials(k, nodes[:, 0], nodes[:, 1])
    return np.linalg.inv(V)


def reference_basis(k: int, pts: np.ndarray):
    """Values (nq, nloc) and reference gradients (nq, nloc, 2) at ``pts``."""
    C = _basis_coefficients(k)
    P, Px, Py = _monomials(k, pts[:, 0], pts[:, 1])
    return P @ C, np.stack([Px @ C, Py @ C], axis=-1)


@dataclass(eq=False)
class FemSpaces:
    mesh: TriMesh
    order: int
    cell_dofs: np.ndarray  # (nt, nloc)
    coords: np.ndarray  # (n_scalar, 2)
    panel_dofs: np.ndarray  # (np, k+1) trace dofs from panel start to end
    dirichlet: np.ndarray  # sorted scalar dof indices on Gamma_D

    @property
    def n_scalar(self) -> int:
        return len(self.coords)

    @property
    def n_vector(self) -> int:
        return 2 * self.n_scalar

    @cached_property
    def free(self) -> np.ndarray:
        mask = np.ones(self.n_scalar, dtype=bool)
        mask[self.dirichlet] = False
        return np.flatnonzero(mask)

    @cached_property
    def boundary(self):
        return boundary_of(self.mesh)

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of a scalar function f(x, y)."""
        return np.asarray(f(self.coords[:, 0], self.coords[:, 1]), dtype=float) * np.ones(self.n_scalar)

    def interpolate_vector(self, f) -> np.ndarray:
        fx, fy = f(self.coords[:, 0], self.coords[:, 1])
        one = np.ones(self.n_scalar)
        return np.concatenate([fx * one, fy * one])


def build_spaces(mesh: TriMesh, order: int) -> FemSpaces:
    k = int(order)
    if not 1 <= k <= MAX_ORDER:
        raise FemError(f"unsupported finite element order {order} (1..{MAX_ORDER})")
    tri = mesh.triangles
    nv, nt = mesh.n_vertices, len(tri)
    local_edges = ((0, 1), (1, 2), (2, 0))
    ends = np.stack([tri[:, list(e)] for e in local_edges], axis=1)  # (nt, 3, 2)
    keys = np.sort(ends.reshape(-1, 2), axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(nt, 3)
    ne = len(uniq)
    ni = (k - 1) * (k - 2) // 2
    nloc = (k + 1) * (k + 2) // 2

    cell = np.empty((nt, nloc), dtype=np.int64)
    cell[:, :3] = tri
    col = 3
    for le in range(3):
        forward = ends[:, le, 0] < ends[:, le, 1]
        for m in range(1, k):
            pos = np.where(forward, m - 1, k - 1 - m)
            cell[:, col] = nv + inv[:, le] * (k - 1) + pos
            col += 1
    for m in range(ni):
        cell[:, col] = nv + ne * (k - 1) + np.arange(nt) * ni + m
        col += 1
    n = nv + ne * (k - 1) + nt * ni

    ref = reference_nodes(k)
    p0 = mesh.vertices[tri[:, 0]]
    J = np.stack([mesh.vertices[tri[:, 1]] - p0, mesh.vertices[tri[:, 2]] - p0], axis=-1)  # (nt,2,2)
    phys = p0[:, None, :] + np.einsum("tij,qj->tqi", J, ref)
    coords = np.empty((n, 2))
    coords[cell.ravel()] = phys.reshape(-1, 2)

    edge_index = {tuple(e): i for i, e in enumerate(uniq.tolist())}
    pdofs = np.empty((len(mesh.panels), k + 1), dtype=np.int64)
    for p, (a, b) in enumerate(mesh.panels.tolist()):
        e = edge_index[(min(a, b), max(a, b))]
        inner = nv + e * (k - 1) + np.arange(k - 1)
        if a > b:
            inner = inner[::-1]
        pdofs[p] = np.concatenate([[a], inner, [b]])
    dmask = mesh.panel_labels == Label.DIRICHLET
    dirichlet = np.unique(pdofs[dmask]) if np.any(dmask) else np.zeros(0, dtype=np.int64)
    return FemSpaces(mesh, k, cell, coords, pdofs, dirichlet)


@dataclass(eq=False)
class ElementGeometry:
    """Physical quadrature data for all triangles."""

    points: np.ndarray  # (nt, nq, 2)
    wdet: np.ndarray  # (nt, nq) weight * |det J|
    phi: np.ndarray  # (nq, nloc)
    grad: np.ndarray  # (nt, nq, nloc, 2)


def element_geometry(spaces: FemSpaces, degree: int | None = None) -> ElementGeometry:
    k = spaces.order
    qp, qw = triangle_rule(2 * k + 2 if degree is None else degree)
    phi, dref = reference_basis(k, qp)
    tri = spaces.mesh.triangles
    v = spaces.mesh.vertices
    p0 = v[tri[:, 0]]
    J = np.stack([v[tri[:, 1]] - p0, v[tri[:, 2]] - p0], axis=-1)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    Jinv = np.linalg.inv(J)
    grad = np.einsum("qlj,tji->tqli", dref, Jinv)
    pts = p0[:, None, :] + np.einsum("tij,qj->tqi", J, qp)
    return ElementGeometry(pts, qw[None, :] * np.abs(det)[:, None], phi, grad)


def _assemble(rows, cols, vals, shape):
    return sp.coo_matrix((vals.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def strain_matrix(grad: np.ndarray) -> np.ndarray:
    """Engineering strain of each local vector basis function.

    ``grad`` (..., nloc, 2) -> (..., 3, 2*nloc) with x components first.
    """
    gx, gy = grad[..., 0], grad[..., 1]
    z = np.zeros_like(gx)
    row0 = np.concatenate([gx, z], axis=-1)
    row1 = np.concatenate([z, gy], axis=-1)
    row2 = np.concatenate([gy, gx], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


@dataclass(eq=False)
class FemBlocks:
    M_rho: sp.csr_matrix
    M_omega: sp.csr_matrix
    K_C: sp.csr_matrix
    K_e: sp.csr_matrix  # (n_vector, n_scalar)
    K_kappa: sp.csr_matrix
    M_scalar: sp.csr_matrix  # unweighted, for norms
    L_scalar: sp.csr_matrix  # unweighted Laplacian, for norms
    Q_trace: sp.csr_matrix  # (n_vector, n boundary quad points): <g, w.nu>
    N_gamma: sp.csr_matrix  # (n_scalar, n boundary quad points): <g, phi> on Gamma_N
    bquad: PanelQuadrature
    has_damping: bool

    @property
    def M_vector(self) -> sp.csr_matrix:
        return sp.block_diag([self.M_scalar, self.M_scalar], format="csr")

    @property
    def L_vector(self) -> sp.csr_matrix:
        return sp.block_diag([self.L_scalar, self.L_scalar], format="csr")


def boundary_quadrature(spaces: FemSpaces, extra: int = 0) -> PanelQuadrature:
    return PanelQuadrature(spaces.boundary, spaces.order + 3 + extra)


def assemble_blocks(spaces: FemSpaces, material: PiezoMaterial, bquad: PanelQuadrature | None = None) -> FemBlocks:
    k = spaces.order
    if not 1 <= k <= MAX_ORDER:
        raise FemError(f"quadrature not available for order {k}")
    geo = element_geometry(spaces)
    cell = spaces.cell_dofs
    nt, nloc = cell.shape
    nS = spaces.n_scalar
    x, y = geo.points[..., 0], geo.points[..., 1]
    rho = material.rho(x, y)
    om = material.omega(x, y)

    phi = geo.phi
    def mass_with(coef):
        return np.einsum("tq,qi,qj->tij", geo.wdet * coef, phi, phi)

    ri = np.repeat(cell[:, :, None], nloc, axis=2)
    ci = np.repeat(cell[:, None, :], nloc, axis=1)
    M1 = _assemble(ri, ci, mass_with(np.ones_like(rho)), (nS, nS))
    Mr = _assemble(ri, ci, mass_with(rho), (nS, nS))
    Mo = _assemble(ri, ci, mass_with(om), (nS, nS))
    G = geo.grad
    L1 = _assemble(ri, ci, np.einsum("tq,tqia,tqja->tij", geo.wdet, G, G), (nS, nS))
    Kk = _assemble(
        ri, ci, np.einsum("tq,tqia,ab,tqjb->tij", geo.wdet, G, material.kappa_psi, G), (nS, nS)
    )

    vcell = np.concatenate([cell, cell + nS], axis=1)  # (nt, 2 nloc)
    B = strain_matrix(G)  # (nt, nq, 3, 2 nloc)
    KC_loc = np.einsum("tq,tqai,ab,tqbj->tij", geo.wdet, B, material.c_voigt, B)
    vr = np.repeat(vcell[:, :, None], 2 * nloc, axis=2)
    vc = np.repeat(vcell[:, None, :], 2 * nloc, axis=1)
    KC = _assemble(vr, vc, KC_loc, (2 * nS, 2 * nS))
    Ke_loc = np.einsum("tq,tqai,ka,tqjk->tij", geo.wdet, B, material.e_voigt, G)
    er = np.repeat(vcell[:, :, None], nloc, axis=2)
    ec = np.repeat(cell[:, None, :], 2 * nloc, axis=1)
    Ke = _assemble(er, ec, Ke_loc, (2 * nS, nS))

    Mrho = sp.block_diag([Mr, Mr], format="csr")
    Mom = sp.block_diag([Mo, Mo], format="csr")
    if bquad is None:
        bquad = boundary_quadrature(spaces)
    Q, N = _boundary_load_maps(spaces, bquad)
    return FemBlocks(Mrho, Mom, KC, Ke, Kk, M1, L1, Q, N, bquad, bool(np.any(om != 0)))


def trace_values(spaces: FemSpaces, t: np.ndarray) -> np.ndarray:
    """FEM trace basis on a panel (equispaced nodes) at parameters t."""
    return lagrange_1d(np.linspace(0.0, 1.0, spaces.order + 1), t)


def _boundary_load_maps(spaces: FemSpaces, bq: PanelQuadrature):
    nS = spaces.n_scalar
    npan, ng = bq.weights.shape
    tv = trace_values(spaces, bq.t)  # (ng, k+1)
    col = np.arange(npan * ng).reshape(npan, ng)
    rows, cols, vals = [], [], []
    for c in range(2):
        v = bq.weights[:, :, None] * tv[None] * bq.normals[:, c][:, None, None]  # (np, ng, k+1)
        rows.append(np.broadcast_to(spaces.panel_dofs[:, None, :] + c * nS, v.shape))
        cols.append(np.broadcast_to(col[:, :, None], v.shape))
        vals.append(v)
    Q = _assemble(np.concatenate([r.ravel() for r in rows]), np.concatenate([c.ravel() for c in cols]),
                  np.concatenate([v.ravel() for v in vals]), (2 * nS, npan * ng))
    neu = (bq.labels == Label.NEUMANN).astype(float)
    v = bq.weights[:, :, None] * tv[None] * neu[:, None, None]
    N = _assemble(np.broadcast_to(spaces.panel_dofs[:, None, :], v.shape),
                  np.broadcast_to(col[:, :, None], v.shape), v, (nS, npan * ng))
    N.eliminate_zeros()
    return Q, N


def trace_coupling(spaces: FemSpaces, y_panel_dofs: np.ndarray, y_order: int, n_y: int) -> sp.csr_matrix:
    """T_nu with entries <zeta_j, gamma w_i . nu> for a continuous P_p space
    on the same panels whose panel-local dofs are ``y_panel_dofs``."""
    b = spaces.boundary
    ng = spaces.order + y_order + 2
    bq = PanelQuadrature(b, ng)
    tv = trace_values(spaces, bq.t)  # (ng, k+1)
    yv = lagrange_1d(np.linspace(0.0, 1.0, y_order + 1), bq.t)  # (ng, p+1)
    loc = np.einsum("pg,gi,gj->pij", bq.weights, tv, yv)  # (np, k+1, p+1)
    nS = spaces.n_scalar
    rows, cols, vals = [], [], []
    for c in range(2):
        v = loc * b.normals[:, c][:, None, None]
        rows.append(np.broadcast_to(spaces.panel_dofs[:, :, None] + c * nS, v.shape).ravel())
        cols.append(np.broadcast_to(y_panel_dofs[:, None, :], v.shape).ravel())
        vals.append(v.ravel())
    return _assemble(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (2 * nS, n_y))


def rigid_motion_basis(spaces: FemSpaces) -> list[np.ndarray]:
    x, y = spaces.coords[:, 0], spaces.coords[:, 1]
    one = np.ones(spaces.n_scalar)
    zero = np.zeros(spaces.n_scalar)
    return [np.concatenate([one, zero]), np.concatenate([zero, one]), np.concatenate([-y, x])]


class ElectricSolver:
    """Factorized quasi-static electric problem.

    Solves K_kappa psi = K_e^T u - N eta on the free dofs with psi = mu on
    the Dirichlet dofs (elimination plus lifting).
    """

    def __init__(self, blocks: FemBlocks, spaces: FemSpaces):
        self.blocks = blocks
        self.spaces = spaces
        f, d = spaces.free, spaces.dirichlet
        K = blocks.K_kappa
        self.K_ff = K[f][:, f].tocsc()
        self.K_fD = K[f][:, d].tocsr()
        if len(f) == 0:
            self._lu = None
        else:
            try:
                self._lu = spla.splu(self.K_ff)
            except RuntimeError as exc:
                raise FemError(f"singular electric system: {exc}") from exc
            if len(d) == 0:
                # pure Neumann problem is singular up to constants
                raise FemError("electric problem needs a nonempty Dirichlet boundary")

    def rhs(self, u=None, eta=None, mu=None) -> np.ndarray:
        b = self.blocks
        f = self.spaces.free
        r = np.zeros(len(f), dtype=np.result_type(*(a for a in (u, eta, mu, 0.0) if a is not None)))
        if u is not None:
            r = r + (b.K_e.T @ u)[f]
        if eta is not None:
            r = r - (b.N_gamma @ eta)[f]
        if mu is not None and len(self.spaces.dirichlet):
            r = r - self.K_fD @ mu
        return r

    def solve(self, u=None, eta=None, mu=None) -> np.ndarray:
        sp_ = self.spaces
        r = self.rhs(u, eta, mu)
        psi = np.zeros(sp_.n_scalar, dtype=r.dtype)
        if self._lu is not None:
            psi[sp_.free] = self._lu.solve(r)
        if mu is not None:
            psi[sp_.dirichlet] = mu
        return psi


def solve_electric(blocks: FemBlocks, spaces: FemSpaces, u_dofs=None, eta=None, mu_dofs=None) -> np.ndarray:
    """psi with psi = mu on Gamma_D and the Galerkin electric equation on the
    free test functions. ``eta`` holds Neumann samples at ``blocks.bquad``."""
    return ElectricSolver(blocks, spaces).solve(u_dofs, eta, mu_dofs)


class PointLocator:
    """Evaluate finite element functions at arbitrary points (NaN outside)."""

    def __init__(self, spaces: FemSpaces):
        import matplotlib.tri as mtri

        self.spaces = spaces
        v = spaces.mesh.vertices
        self._tri = mtri.Triangulation(v[:, 0], v[:, 1], spaces.mesh.triangles)
        self._finder = self._tri.get_trifinder()

    def basis_at(self, points):
        """(cell index per point, local basis values); cell -1 means outside."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        cell = np.asarray(self._finder(pts[:, 0], pts[:, 1]), dtype=np.int64)
        inside = cell >= 0
        tri = self.spaces.mesh.triangles[cell[inside]]
        v = self.spaces.mesh.vertices
        p0 = v[tri[:, 0]]
        J = np.stack([v[tri[:, 1]] - p0, v[tri[:, 2]] - p0], axis=-1)
        ref = np.linalg.solve(J, (pts[inside] - p0)[..., None])[..., 0]
        k = self.spaces.order
        vals = np.zeros((len(pts), (k + 1) * (k + 2) // 2))
        if len(ref):
            vals[inside] = reference_basis(k, ref)[0]
        return cell, vals

    def evaluate(self, coeffs, points) -> np.ndarray:
        """Values of scalar fields ``coeffs`` (n_scalar,) or (m, n_scalar)."""
        cell, vals = self.basis_at(points)
        c = np.atleast_2d(coeffs)
        out = np.full((c.shape[0], len(cell)), np.nan)
        inside = cell >= 0
        dofs = self.spaces.cell_dofs[cell[inside]]  # (p, nloc)
        out[:, inside] = np.einsum("pl,mpl->mp", vals[inside], c[:, dofs])
        return out if np.ndim(coeffs) == 2 else out[0]
