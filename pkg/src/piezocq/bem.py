"""Galerkin boundary elements for the Laplace-domain wave equation
``Delta U - s^2 U = 0`` in 2D on straight panels.

Spaces: Y_h continuous P_p (carries phi), X_h discontinuous P_{p-1}
(carries lambda). Operators V (X x X), K (X x Y), Kt = K^T (Y x X) and W
(Y x Y, integrated by parts so only the weakly singular kernel appears).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.special as sc

from .mesh import BoundaryCurve
from .quadrature import gauss01, graded01, lagrange_1d, split_gauss01

TWO_PI = 2.0 * math.pi


class QuadratureError(RuntimeError):
    pass


class KernelError(ValueError):
    pass


# --------------------------------------------------------------------------
# kernel


def _is_real(s) -> bool:
    return np.imag(s) == 0.0


def helmholtz_kernel(s, r):
    """Fundamental solution ``K0(s r) / (2 pi)`` of ``Delta U - s^2 U = 0``."""
    s = complex(s)
    if s.real <= 0:
        raise KernelError("kernel needs Re s > 0")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise KernelError("kernel needs r > 0")
    if s.imag == 0.0:
        return (sc.k0(s.real * r) / TWO_PI).astype(complex)
    z = s * r
    return sc.kve(0, z) * np.exp(-z) / TWO_PI


def _kernels(s, r, need_dl: bool):
    """G(r) and z K1(z) at z = s r (the latter only if ``need_dl``)."""
    real = _is_real(s)
    z = (s.real if real else s) * r
    if real:
        g = sc.k0(z) / TWO_PI
        zk1 = z * sc.k1(z) if need_dl else None
    else:
        # scaled functions: plain kv returns nan for |z| near 1e3
        ez = np.exp(-z)
        g = sc.kve(0, z) * ez / TWO_PI
        zk1 = z * sc.kve(1, z) * ez if need_dl else None
    return g, zk1


# --------------------------------------------------------------------------
# spaces


@dataclass(eq=False)
class BoundarySpaces:
    boundary: BoundaryCurve
    p: int
    y_panel_dofs: np.ndarray  # (np, p+1)
    x_panel_dofs: np.ndarray  # (np, p)
    n_y: int
    n_x: int

    @property
    def y_nodes(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.p + 1)

    @property
    def x_nodes(self) -> np.ndarray:
        return gauss01(self.p)[0]

    def x_basis(self, t):
        return lagrange_1d(self.x_nodes, t)

    def y_basis(self, t, deriv=False):
        return lagrange_1d(self.y_nodes, t, deriv=deriv)

    def _mass(self, left, right, nl, nr, ld, rd):
        g, w = gauss01(self.p + 2)
        bl = left(g)
        br = right(g)
        loc = np.einsum("q,qi,qj->ij", w, bl, br)[None] * self.boundary.lengths[:, None, None]
        rows = np.broadcast_to(ld[:, :, None], loc.shape)
        cols = np.broadcast_to(rd[:, None, :], loc.shape)
        return sp.coo_matrix((loc.ravel(), (rows.ravel(), cols.ravel())), shape=(nl, nr)).tocsr()

    @cached_property
    def M_XY(self) -> sp.csr_matrix:
        return self._mass(self.x_basis, self.y_basis, self.n_x, self.n_y, self.x_panel_dofs, self.y_panel_dofs)

    @cached_property
    def M_X(self) -> sp.csr_matrix:
        return self._mass(self.x_basis, self.x_basis, self.n_x, self.n_x, self.x_panel_dofs, self.x_panel_dofs)

    @cached_property
    def M_Y(self) -> sp.csr_matrix:
        return self._mass(self.y_basis, self.y_basis, self.n_y, self.n_y, self.y_panel_dofs, self.y_panel_dofs)

    def x_load(self, bq) -> sp.csr_matrix:
        """Map from samples at PanelQuadrature ``bq`` to <g, chi_i>."""
        b = self.x_basis(bq.t)
        return self._load(b, bq, self.x_panel_dofs, self.n_x)

    def y_load(self, bq) -> sp.csr_matrix:
        b = self.y_basis(bq.t)
        return self._load(b, bq, self.y_panel_dofs, self.n_y)

    @staticmethod
    def _load(b, bq, dofs, n):
        npan, ng = bq.weights.shape
        v = bq.weights[:, :, None] * b[None]
        col = np.arange(npan * ng).reshape(npan, ng)
        rows = np.broadcast_to(dofs[:, None, :], v.shape)
        cols = np.broadcast_to(col[:, :, None], v.shape)
        return sp.coo_matrix((v.ravel(), (rows.ravel(), cols.ravel())), shape=(n, npan * ng)).tocsr()

    def y_interpolate(self, f) -> np.ndarray:
        """Nodal interpolant in Y_h of f(points (m, 2))."""
        pts = self.boundary.points(self.y_nodes)  # (np, p+1, 2)
        vals = np.zeros(self.n_y, dtype=complex)
        vals[self.y_panel_dofs.ravel()] = np.asarray(f(pts.reshape(-1, 2))).ravel()
        return vals

    def x_project(self, f) -> np.ndarray:
        """L2 projection onto X_h of f(points (m, 2))."""
        g, w = gauss01(self.p + 4)
        pts = self.boundary.points(g)
        vals = np.asarray(f(pts.reshape(-1, 2))).reshape(pts.shape[:2])
        b = self.x_basis(g)
        rhs_loc = np.einsum("q,pq,qi->pi", w, vals, b)
        mloc = np.einsum("q,qi,qj->ij", w, b, b)
        coef = np.linalg.solve(mloc, rhs_loc.T).T
        out = np.zeros(self.n_x, dtype=complex)
        out[self.x_panel_dofs.ravel()] = coef.ravel()
        return out


def build_boundary_spaces(boundary: BoundaryCurve, p: int = 1) -> BoundarySpaces:
    if not 1 <= p <= 4:
        raise ValueError(f"unsupported boundary element order {p} (1..4)")
    npan = boundary.n_panels
    vids = boundary.vertex_ids
    uniq, inv = np.unique(vids[:, 0], return_inverse=True)
    remap = {v: i for i, v in enumerate(uniq.tolist())}
    nbv = len(uniq)
    ydofs = np.empty((npan, p + 1), dtype=np.int64)
    ydofs[:, 0] = inv
    ydofs[:, -1] = [remap[v] for v in vids[:, 1].tolist()]
    for m in range(1, p):
        ydofs[:, m] = nbv + np.arange(npan) * (p - 1) + (m - 1)
    xdofs = np.arange(npan * p, dtype=np.int64).reshape(npan, p)
    return BoundarySpaces(boundary, p, ydofs, xdofs, nbv + npan * (p - 1), npan * p)


# --------------------------------------------------------------------------
# operators


@dataclass(eq=False)
class LayerOperators:
    s: complex
    V: np.ndarray | None
    K: np.ndarray | None
    W: np.ndarray | None

    @property
    def Kt(self) -> np.ndarray:
        return self.K.T


def _segment_distances(a, b):
    """Distances between all pairs of segments (assumed non-crossing)."""

    def pt_seg(p, a_, b_):
        d = b_ - a_
        t = np.clip(((p[:, None, :] - a_[None]) * d[None]).sum(-1) / (d * d).sum(-1)[None], 0, 1)
        q = a_[None] + t[..., None] * d[None]
        return np.linalg.norm(p[:, None, :] - q, axis=-1)

    return np.minimum.reduce([pt_seg(a, a, b), pt_seg(b, a, b), pt_seg(a, a, b).T, pt_seg(b, a, b).T])


@dataclass(eq=False)
class _PairGeometry:
    """Panel-pair classification, independent of the frequency."""

    same: np.ndarray
    adjacent: np.ndarray  # (m, 2) with i < j
    far: np.ndarray  # (m, 2) with i < j
    far_q: np.ndarray  # separation ratio dist / max(L_i, L_j)
    far_dist: np.ndarray


_GEOMETRY_CACHE: dict[int, _PairGeometry] = {}


def _pair_geometry(boundary: BoundaryCurve) -> _PairGeometry:
    key = id(boundary)
    cached = _GEOMETRY_CACHE.get(key)
    if cached is not None and cached[0] is boundary:
        return cached[1]
    npan = boundary.n_panels
    vids = boundary.vertex_ids
    iu, ju = np.triu_indices(npan, k=1)
    share = (
        (vids[iu, 0] == vids[ju, 0]) | (vids[iu, 0] == vids[ju, 1])
        | (vids[iu, 1] == vids[ju, 0]) | (vids[iu, 1] == vids[ju, 1])
    )
    dist = _segment_distances(boundary.a, boundary.b)[iu, ju]
    Lmax = np.maximum(boundary.lengths[iu], boundary.lengths[ju])
    far = ~share
    geo = _PairGeometry(
        same=np.arange(npan),
        adjacent=np.column_stack([iu[share], ju[share]]),
        far=np.column_stack([iu[far], ju[far]]),
        far_q=dist[far] / Lmax[far],
        far_dist=dist[far],
    )
    if len(_GEOMETRY_CACHE) > 16:
        _GEOMETRY_CACHE.clear()
    _GEOMETRY_CACHE[key] = (boundary, geo)
    return geo


MAX_SPLIT = 32


def _far_order(q: np.ndarray, s: complex, L: float, p: int) -> np.ndarray:
    base = np.where(q >= 4, 3, np.where(q >= 2, 4, np.where(q >= 1, 6, 10)))
    base = base + (p - 1)
    return np.minimum(base + int(math.ceil(0.35 * abs(s) * L)), 40)


class _Accumulator:
    def __init__(self, sp_: BoundarySpaces, s: complex, which: set):
        self.sp = sp_
        self.s = s.real if _is_real(s) else s
        self.which = which
        self.need_dl = "K" in which
        b = sp_.boundary
        self.L = b.lengths
        self.nu = b.normals
        dtype = float if _is_real(s) else complex
        self.V = np.zeros((sp_.n_x, sp_.n_x), dtype) if "V" in which else None
        self.K = np.zeros((sp_.n_x, sp_.n_y), dtype) if "K" in which else None
        self.W = np.zeros((sp_.n_y, sp_.n_y), dtype) if "W" in which else None

    def pairs(self, I, J, t, tau, w, r, ymx):
        """Add contributions of panel pairs (I[k], J[k]) with I != J, and of
        the mirrored pairs (J[k], I[k]). ``t`` lives on panel I, ``tau`` on J;
        ``ymx`` = y - x. Arrays are (P, Q)."""
        s = self.s
        sp_ = self.sp
        g, zk1 = _kernels(s, r, self.need_dl)
        LL = (self.L[I] * self.L[J])[:, None]
        wg = w * LL * g
        shape = t.shape
        xb_t = sp_.x_basis(t.ravel()).reshape(*shape, -1)
        xb_u = sp_.x_basis(tau.ravel()).reshape(*shape, -1)
        xI = sp_.x_panel_dofs[I]
        xJ = sp_.x_panel_dofs[J]
        yI = sp_.y_panel_dofs[I]
        yJ = sp_.y_panel_dofs[J]
        if self.V is not None:
            loc = np.einsum("pq,pqi,pqj->pij", wg, xb_t, xb_u)
            np.add.at(self.V, (xI[:, :, None], xJ[:, None, :]), loc)
            np.add.at(self.V, (xJ[:, :, None], xI[:, None, :]), loc.transpose(0, 2, 1))
        if self.K is not None or self.W is not None:
            yb_t = sp_.y_basis(t.ravel()).reshape(*shape, -1)
            yb_u = sp_.y_basis(tau.ravel()).reshape(*shape, -1)
        if self.K is not None:
            r2 = r * r
            # d/dnu_y G for x on I, y on J, and d/dnu_x G for the mirrored pair
            fJ = -(zk1 / TWO_PI) * (ymx * self.nu[J][:, None, :]).sum(-1) / r2
            fI = (zk1 / TWO_PI) * (ymx * self.nu[I][:, None, :]).sum(-1) / r2
            wl = w * LL
            locJ = np.einsum("pq,pqi,pqj->pij", wl * fJ, xb_t, yb_u)
            np.add.at(self.K, (xI[:, :, None], yJ[:, None, :]), locJ)
            locI = np.einsum("pq,pqi,pqj->pij", wl * fI, xb_u, yb_t)
            np.add.at(self.K, (xJ[:, :, None], yI[:, None, :]), locI)
        if self.W is not None:
            dt = sp_.y_basis(t.ravel(), deriv=True).reshape(*shape, -1)
            du = sp_.y_basis(tau.ravel(), deriv=True).reshape(*shape, -1)
            nn = (self.nu[I] * self.nu[J]).sum(-1)[:, None]
            loc = np.einsum("pq,pqi,pqj->pij", wg, dt, du) / LL[:, :, None]
            loc = loc + np.einsum("pq,pqi,pqj->pij", wg * (s * s) * nn, yb_t, yb_u)
            np.add.at(self.W, (yI[:, :, None], yJ[:, None, :]), loc)
            np.add.at(self.W, (yJ[:, :, None], yI[:, None, :]), loc.transpose(0, 2, 1))


@dataclass(frozen=True)
class _SameTables:
    xi: np.ndarray
    w: np.ndarray
    xx: np.ndarray  # (nxi, p, p)
    yy: np.ndarray  # (nxi, p+1, p+1)
    dd: np.ndarray  # (nxi, p+1, p+1)


_SAME_CACHE: dict[int, _SameTables] = {}


def _same_tables(sp_: BoundarySpaces) -> _SameTables:
    """Reduce same-panel double integrals of k(L|t - tau|) a(t) b(tau) to
    one-dimensional integrals in xi = |t - tau| against polynomial weights."""
    p = sp_.p
    if p in _SAME_CACHE:
        return _SAME_CACHE[p]
    xi, w = graded01(8, 17, 0.25)
    g, wg = gauss01(p + 2)
    tau = (1.0 - xi)[:, None] * g[None]  # (nxi, ng)
    wt = (1.0 - xi)[:, None] * wg[None]
    top = tau + xi[:, None]

    def table(fa, fb):
        a_top = fa(top.ravel()).reshape(*top.shape, -1)
        a_low = fa(tau.ravel()).reshape(*tau.shape, -1)
        b_top = fb(top.ravel()).reshape(*top.shape, -1)
        b_low = fb(tau.ravel()).reshape(*tau.shape, -1)
        return np.einsum("xq,xqi,xqj->xij", wt, a_top, b_low) + np.einsum("xq,xqi,xqj->xij", wt, a_low, b_top)

    tabs = _SameTables(
        xi, w,
        table(sp_.x_basis, sp_.x_basis),
        table(sp_.y_basis, sp_.y_basis),
        table(lambda t: sp_.y_basis(t, deriv=True), lambda t: sp_.y_basis(t, deriv=True)),
    )
    _SAME_CACHE[p] = tabs
    return tabs


def assemble_operators(spaces: BoundarySpaces, s, which=("V", "K", "W")) -> LayerOperators:
    """Galerkin matrices of V, K, W at frequency ``s`` (Re s > 0)."""
    s = complex(s)
    if s.real <= 0:
        raise KernelError("boundary operators need Re s > 0")
    which = set(which)
    acc = _Accumulator(spaces, s, which)
    b = spaces.boundary
    geo = _pair_geometry(b)
    L = b.lengths
    Lmax = float(L.max())
    sv = s.real if _is_real(s) else s

    # same panel
    tab = _same_tables(spaces)
    r = L[:, None] * tab.xi[None]
    g, _ = _kernels(s, r, False)
    wg = tab.w[None] * g * (L * L)[:, None]  # (np, nxi)
    xd = spaces.x_panel_dofs
    yd = spaces.y_panel_dofs
    if acc.V is not None:
        loc = np.einsum("px,xij->pij", wg, tab.xx)
        np.add.at(acc.V, (xd[:, :, None], xd[:, None, :]), loc)
    if acc.W is not None:
        loc = np.einsum("px,xij->pij", wg, tab.dd) / (L * L)[:, None, None]
        loc = loc + (sv * sv) * np.einsum("px,xij->pij", wg, tab.yy)
        np.add.at(acc.W, (yd[:, :, None], yd[:, None, :]), loc)

    # adjacent panels: Duffy at the shared vertex
    if len(geo.adjacent):
        _adjacent(acc, geo.adjacent, spaces.p)

    # separated panels
    if len(geo.far):
        I, J = geo.far[:, 0], geo.far[:, 1]
        keep = np.ones(len(I), dtype=bool)
        if s.real * 1.0 > 0:
            # contributions below e^-40 relative are dropped
            keep = s.real * geo.far_dist < 40.0
        q = geo.far_q
        orders = _far_order(q, s, Lmax, spaces.p)
        split = q < 0.4
        for n in np.unique(orders[keep & ~split]):
            sel = keep & ~split & (orders == n)
            _tensor_pairs(acc, I[sel], J[sel], *gauss01(int(n)))
        if np.any(split & keep):
            for k in np.flatnonzero(split & keep):
                m = int(math.ceil(0.8 / max(q[k], 1e-300)))
                if m > MAX_SPLIT:
                    raise QuadratureError(
                        f"panels {I[k]} and {J[k]} are too close for the near-field rule (ratio {q[k]:.2e})"
                    )
                n = int(orders[k])
                _tensor_pairs(acc, I[k : k + 1], J[k : k + 1], *split_gauss01(min(n, 10), m))
    return LayerOperators(s, acc.V, acc.K, acc.W)


def _tensor_pairs(acc: _Accumulator, I, J, g, wg):
    b = acc.sp.boundary
    T, U = np.meshgrid(g, g, indexing="ij")
    T, U = T.ravel(), U.ravel()
    w = np.outer(wg, wg).ravel()
    x = b.a[I][:, None, :] + T[None, :, None] * (b.b - b.a)[I][:, None, :]
    y = b.a[J][:, None, :] + U[None, :, None] * (b.b - b.a)[J][:, None, :]
    ymx = y - x
    r = np.sqrt((ymx * ymx).sum(-1))
    P = len(I)
    acc.pairs(I, J, np.broadcast_to(T, (P, len(T))), np.broadcast_to(U, (P, len(U))),
              np.broadcast_to(w, (P, len(w))), r, ymx)


_ADJ_U = graded01(8, 12, 0.25)


def _adjacent(acc: _Accumulator, pairs, p):
    from .quadrature import _tensor

    b = acc.sp.boundary
    I, J = pairs[:, 0], pairs[:, 1]
    vids = b.vertex_ids
    # shared vertex position within each panel: 0 = start, 1 = end
    i_end = (vids[I, 1] == vids[J, 0]) | (vids[I, 1] == vids[J, 1])
    j_end = (vids[J, 1] == vids[I, 0]) | (vids[J, 1] == vids[I, 1])
    d_i = b.b[I] - b.a[I]
    d_j = b.b[J] - b.a[J]
    e_i = np.where(i_end[:, None], -d_i, d_i)  # from shared vertex along panel I
    e_j = np.where(j_end[:, None], -d_j, d_j)
    u, wu = _ADJ_U
    v, wv = gauss01(8 + p)
    U, Vv, W = _tensor(u, wu, v, wv)
    W = W * U
    # two Duffy triangles: (t', tau') = (u, u v) and (u v, u)
    alpha = np.concatenate([np.ones_like(Vv), Vv])
    beta = np.concatenate([Vv, np.ones_like(Vv)])
    Uc = np.concatenate([U, U])
    Wc = np.concatenate([W, W])
    tp = Uc * alpha
    taup = Uc * beta
    # y - x = u (beta e_j - alpha e_i)
    dirv = beta[None, :, None] * e_j[:, None, :] - alpha[None, :, None] * e_i[:, None, :]
    rho = np.sqrt((dirv * dirv).sum(-1))
    r = Uc[None] * rho
    ymx = Uc[None, :, None] * dirv
    t = np.where(i_end[:, None], 1.0 - tp[None], tp[None])
    tau = np.where(j_end[:, None], 1.0 - taup[None], taup[None])
    P = len(I)
    acc.pairs(I, J, t, tau, np.broadcast_to(Wc, (P, len(Wc))), r, ymx)


# --------------------------------------------------------------------------
# potentials


class PotentialError(ValueError):
    pass


def _graded_around(t0, delta, n: int = 8):
    """Composite Gauss rules on [0, 1] with pieces growing geometrically away
    from ``t0`` starting at width ``delta``; one rule per row for array input.

    Every row gets the same number of breakpoints; those clipped to the ends
    of [0, 1] give zero-width pieces and hence zero weights.
    """
    t0 = np.atleast_1d(np.asarray(t0, dtype=float))
    delta = np.atleast_1d(np.asarray(delta, dtype=float))
    g, wg = gauss01(n)
    levels = max(1, int(np.ceil(np.log2(1.0 / float(delta.min())))) + 1)
    h = delta[:, None] * 2.0 ** np.arange(levels)[None]
    pts = np.concatenate([np.zeros((len(t0), 1)), np.ones((len(t0), 1)), t0[:, None],
                          t0[:, None] - h, t0[:, None] + h], axis=1)
    pts = np.sort(np.clip(pts, 0.0, 1.0), axis=1)
    lo, hi = pts[:, :-1], pts[:, 1:]
    x = (lo[..., None] + (hi - lo)[..., None] * g).reshape(len(t0), -1)
    w = ((hi - lo)[..., None] * wg).reshape(len(t0), -1)
    return x, w


def eval_potentials(spaces: BoundarySpaces, s, lam, phi, points, n_far: int | None = None) -> np.ndarray:
    """Evaluate ``S(s) lam - D(s) phi`` at points off the boundary."""
    s = complex(s)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    b = spaces.boundary
    lam = np.zeros(spaces.n_x) if lam is None else np.asarray(lam)
    phi = np.zeros(spaces.n_y) if phi is None else np.asarray(phi)
    out = np.zeros(len(pts), dtype=complex)
    if not np.any(lam) and not np.any(phi):
        return out
    L = b.lengths
    d = b.b - b.a
    # distance from each point to each panel
    tproj = ((pts[:, None, :] - b.a[None]) * d[None]).sum(-1) / (L * L)[None]
    tcl = np.clip(tproj, 0.0, 1.0)
    foot = b.a[None] + tcl[..., None] * d[None]
    dist = np.linalg.norm(pts[:, None, :] - foot, axis=-1)  # (npts, np)
    if np.any(dist <= 1e-13 * L[None]):
        raise PotentialError("evaluation point lies on the boundary")
    q = dist / L[None]
    if n_far is None:
        n_far = 6 + spaces.p + int(math.ceil(0.35 * abs(s) * float(L.max())))
    g, wg = gauss01(n_far)
    lam_q = (spaces.x_basis(g) @ lam[spaces.x_panel_dofs].T).T  # (np, nq)
    phi_q = (spaces.y_basis(g) @ phi[spaces.y_panel_dofs].T).T
    yq = b.points(g)  # (np, nq, 2)
    far = q >= 2.0
    for start in range(0, len(pts), 256):
        sl = slice(start, start + 256)
        ymx = yq[None] - pts[sl, None, None, :]
        r = np.sqrt((ymx * ymx).sum(-1))
        gk, zk1 = _kernels(s, r, True)
        dl = -(zk1 / TWO_PI) * (ymx * b.normals[None, :, None, :]).sum(-1) / (r * r)
        val = gk * lam_q[None] - dl * phi_q[None]
        val = (val * (wg[None, None] * L[None, :, None])).sum(-1)
        out[sl] = (val * far[sl]).sum(-1)
    ip_all, jp_all = np.nonzero(~far)
    for start in range(0, len(ip_all), 512):
        ip, jp = ip_all[start : start + 512], jp_all[start : start + 512]
        t0 = np.where((tproj[ip, jp] >= 0) & (tproj[ip, jp] <= 1), tproj[ip, jp], tcl[ip, jp])
        x, w = _graded_around(t0, np.maximum(q[ip, jp], 1e-14))
        y = b.a[jp][:, None] + x[..., None] * d[jp][:, None]
        ymx = y - pts[ip][:, None]
        r = np.sqrt((ymx * ymx).sum(-1))
        r = np.where(w > 0, r, 1.0)  # padded nodes carry zero weight
        gk, zk1 = _kernels(s, r, True)
        dl = -(zk1 / TWO_PI) * (ymx * b.normals[jp][:, None]).sum(-1) / (r * r)
        xb = spaces.x_basis(x.ravel()).reshape(x.shape + (-1,))
        yb = spaces.y_basis(x.ravel()).reshape(x.shape + (-1,))
        lv = np.einsum("pqi,pi->pq", xb, lam[spaces.x_panel_dofs[jp]])
        pv = np.einsum("pqi,pi->pq", yb, phi[spaces.y_panel_dofs[jp]])
        np.add.at(out, ip, L[jp] * np.sum(w * (gk * lv - dl * pv), axis=1))
    return out
