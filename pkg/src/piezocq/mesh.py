"""Triangular meshes of the solid, their boundary panels, Gmsh 2.2 I/O and a
small polygon mesher used by the builtin geometries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from matplotlib.path import Path as MplPath
from scipy.spatial import Delaunay


class Label(IntEnum):
    DIRICHLET = 1
    NEUMANN = 2


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    pass


class MeshTopologyError(MeshError):
    pass


class MeshLabelError(MeshError):
    pass


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation of the solid with oriented, labelled boundary.

    ``panels[i] = (a, b)`` is traversed with the solid on its left, so
    ``panel_normals[i]`` (the tangent rotated clockwise) points outward.
    Panels are stored loop by loop; ``loops`` holds index ranges into them.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    panels: np.ndarray
    panel_labels: np.ndarray
    panel_normals: np.ndarray
    loops: tuple = field(default=())

    @classmethod
    def from_arrays(cls, vertices, triangles, edges, edge_labels) -> "TriMesh":
        """Validate and orient raw connectivity.

        ``edges`` lists labelled boundary edges (any vertex order).
        """
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        edge_labels = np.asarray(edge_labels, dtype=np.int64).reshape(-1)
        if vertices.ndim != 2 or vertices.shape[1] != 2:
            raise MeshParseError("vertices must be an (n, 2) array")
        if len(triangles) == 0:
            raise MeshParseError("mesh has no triangles")
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise MeshParseError("triangle references an unknown vertex")

        used = np.unique(triangles)
        if len(used) != len(vertices):
            remap = -np.ones(len(vertices), dtype=np.int64)
            remap[used] = np.arange(len(used))
            vertices = vertices[used]
            triangles = remap[triangles]
            if edges.size:
                if np.any(remap[edges] < 0):
                    raise MeshTopologyError("boundary edge references a vertex outside all triangles")
                edges = remap[edges]

        area = signed_areas(vertices, triangles)
        if np.any(area == 0.0):
            raise MeshTopologyError("degenerate (zero-area) triangle")
        flip = area < 0
        if np.any(flip):
            triangles = triangles.copy()
            triangles[flip] = triangles[flip][:, [0, 2, 1]]

        directed = np.concatenate(
            [triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]]
        )
        keys = np.sort(directed, axis=1)
        uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if np.any(counts > 2):
            raise MeshTopologyError("non-manifold edge shared by more than two triangles")
        edge_count = {tuple(k): c for k, c in zip(uniq.tolist(), counts.tolist())}

        labels = {}
        for (a, b), lab in zip(np.sort(edges, axis=1).tolist(), edge_labels.tolist()):
            c = edge_count.get((a, b))
            if c is None:
                raise MeshTopologyError(f"labelled edge ({a}, {b}) is not a triangle edge")
            if c == 2:
                raise MeshTopologyError(f"labelled boundary edge ({a}, {b}) is shared by two triangles")
            if lab not in (Label.DIRICHLET, Label.NEUMANN):
                raise MeshLabelError(f"unknown boundary label {lab}")
            labels[(a, b)] = lab

        bmask = counts[inverse] == 1
        bdir = directed[bmask]
        blabels = []
        for a, b in np.sort(bdir, axis=1).tolist():
            if (a, b) not in labels:
                raise MeshLabelError(f"boundary edge ({a}, {b}) has no label")
            blabels.append(labels[(a, b)])
        blabels = np.array(blabels, dtype=np.int64)

        panels, plabels, loops = _chain_loops(bdir, blabels)
        t = vertices[panels[:, 1]] - vertices[panels[:, 0]]
        L = np.hypot(t[:, 0], t[:, 1])
        normals = np.column_stack([t[:, 1], -t[:, 0]]) / L[:, None]
        return cls(vertices, triangles, panels, plabels, normals, tuple(loops))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def area(self) -> float:
        return float(signed_areas(self.vertices, self.triangles).sum())

    def h_max(self) -> float:
        v = self.vertices[self.triangles]
        e = np.linalg.norm(v - np.roll(v, 1, axis=1), axis=2)
        return float(e.max())

    def dirichlet_panels(self) -> np.ndarray:
        return np.flatnonzero(self.panel_labels == Label.DIRICHLET)

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Point-in-solid test (even-odd over all boundary loops)."""
        points = np.atleast_2d(points)
        inside = np.zeros(len(points), dtype=bool)
        for lo, hi in self.loops:
            ring = self.vertices[self.panels[lo:hi, 0]]
            inside ^= MplPath(ring).contains_points(points)
        return inside


def _chain_loops(bdir: np.ndarray, blabels: np.ndarray):
    nxt = {}
    for i, (a, b) in enumerate(bdir.tolist()):
        if a in nxt:
            raise MeshTopologyError(f"boundary vertex {a} starts more than one boundary edge")
        nxt[a] = i
    ends = bdir[:, 1].tolist()
    if len(set(ends)) != len(ends) or set(ends) != set(nxt):
        raise MeshTopologyError("boundary does not form closed loops")
    seen = np.zeros(len(bdir), dtype=bool)
    order = []
    loops = []
    for start in range(len(bdir)):
        if seen[start]:
            continue
        lo = len(order)
        i = start
        while not seen[i]:
            seen[i] = True
            order.append(i)
            i = nxt[bdir[i, 1]]
        if i != start:
            raise MeshTopologyError("boundary does not form closed loops")
        loops.append((lo, len(order)))
    order = np.array(order)
    return bdir[order], blabels[order], loops


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Straight boundary panels with cached geometry."""

    a: np.ndarray  # (np, 2) start points
    b: np.ndarray  # (np, 2) end points
    lengths: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray
    vertex_ids: np.ndarray  # (np, 2) mesh vertex indices
    labels: np.ndarray
    loops: tuple

    @property
    def n_panels(self) -> int:
        return len(self.lengths)

    @property
    def perimeter(self) -> float:
        return float(self.lengths.sum())

    def points(self, t: np.ndarray) -> np.ndarray:
        """Physical points at panel parameters ``t``; shape (np, len(t), 2)."""
        t = np.asarray(t, dtype=float)
        return self.a[:, None, :] + t[None, :, None] * (self.b - self.a)[:, None, :]


def boundary_of(mesh: TriMesh) -> BoundaryCurve:
    a = mesh.vertices[mesh.panels[:, 0]]
    b = mesh.vertices[mesh.panels[:, 1]]
    d = b - a
    L = np.hypot(d[:, 0], d[:, 1])
    return BoundaryCurve(
        a=a, b=b, lengths=L, tangents=d / L[:, None], normals=mesh.panel_normals.copy(),
        vertex_ids=mesh.panels.copy(), labels=mesh.panel_labels.copy(), loops=mesh.loops,
    )


# --------------------------------------------------------------------------
# Gmsh MSH 2.2 ASCII subset


def load_mesh(path) -> TriMesh:
    """Read a Gmsh 2.2 ASCII file: type-2 triangles, type-1 lines whose
    physical tag (first tag) is 1 (Dirichlet) or 2 (Neumann)."""
    path = Path(path)
    try:
        lines = path.read_text().split("\n")
    except OSError as exc:
        raise MeshParseError(str(exc)) from exc
    sections = {}
    i = 0
    try:
        while i < len(lines):
            tok = lines[i].strip()
            if tok.startswith("$") and not tok.startswith("$End"):
                name = tok[1:]
                j = i + 1
                while lines[j].strip() != f"$End{name}":
                    j += 1
                sections[name] = [ln for ln in lines[i + 1 : j] if ln.strip()]
                i = j
            i += 1
    except IndexError as exc:
        raise MeshParseError("unterminated section") from exc
    if "MeshFormat" in sections:
        version = sections["MeshFormat"][0].split()[0]
        if not version.startswith("2"):
            raise MeshParseError(f"unsupported MSH version {version}")
    if "Nodes" not in sections or "Elements" not in sections:
        raise MeshParseError("missing $Nodes or $Elements")
    try:
        node_lines = sections["Nodes"]
        n = int(node_lines[0])
        ids = np.empty(n, dtype=np.int64)
        xy = np.empty((n, 2))
        for k, ln in enumerate(node_lines[1 : n + 1]):
            parts = ln.split()
            ids[k] = int(parts[0])
            xy[k] = float(parts[1]), float(parts[2])
        if k != n - 1:
            raise MeshParseError("node count mismatch")
        index = {nid: k for k, nid in enumerate(ids.tolist())}
        el_lines = sections["Elements"]
        m = int(el_lines[0])
        tris, edges, labels = [], [], []
        for ln in el_lines[1 : m + 1]:
            parts = [int(p) for p in ln.split()]
            etype, ntags = parts[1], parts[2]
            tags = parts[3 : 3 + ntags]
            nodes = [index[p] for p in parts[3 + ntags :]]
            if etype == 2:
                tris.append(nodes[:3])
            elif etype == 1:
                edges.append(nodes[:2])
                labels.append(tags[0] if tags else 0)
        if len(el_lines) - 1 != m:
            raise MeshParseError("element count mismatch")
    except (ValueError, KeyError, IndexError) as exc:
        raise MeshParseError(f"malformed mesh file: {exc}") from exc
    return TriMesh.from_arrays(xy, tris, edges, labels)


def save_mesh(mesh: TriMesh, path) -> None:
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    out += [f"{i + 1} {x!r} {y!r} 0" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    out += ["$EndNodes", "$Elements", str(len(mesh.panels) + len(mesh.triangles))]
    k = 1
    for (a, b), lab in zip(mesh.panels.tolist(), mesh.panel_labels.tolist()):
        out.append(f"{k} 1 2 {lab} {lab} {a + 1} {b + 1}")
        k += 1
    for tri in mesh.triangles.tolist():
        out.append(f"{k} 2 2 10 10 {tri[0] + 1} {tri[1] + 1} {tri[2] + 1}")
        k += 1
    out += ["$EndElements", ""]
    Path(path).write_text("\n".join(out))


# --------------------------------------------------------------------------
# polygon mesher


def polygon_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segment_distance(points, a, b):
    d = b - a
    L2 = np.sum(d * d, axis=1)
    t = ((points[:, None, :] - a[None]) * d[None]).sum(-1) / L2[None]
    t = np.clip(t, 0.0, 1.0)
    proj = a[None] + t[..., None] * d[None]
    return np.linalg.norm(points[:, None, :] - proj, axis=2).min(axis=1)


def mesh_polygon(loops, h: float, labels=None) -> TriMesh:
    """Triangulate a polygonal domain with target edge length ``h``.

    ``loops`` is a list of (m, 2) vertex rings; the ring with largest area is
    the outer boundary, the rest are holes. ``labels`` optionally gives one
    label per polygon edge for each ring (default: all Dirichlet). Boundary
    edges are split uniformly; the interior is filled with a hexagonal lattice
    kept away from the boundary so every boundary segment is a Delaunay edge.
    """
    rings = [np.asarray(r, dtype=float) for r in loops]
    if labels is None:
        labels = [[Label.DIRICHLET] * len(r) for r in rings]
    labels = [list(lab) for lab in labels]
    areas = [polygon_area(r) for r in rings]
    outer = int(np.argmax(np.abs(areas)))
    for k, r in enumerate(rings):
        want_ccw = k == outer
        if (areas[k] > 0) != want_ccw:
            rings[k] = r[::-1].copy()
            # edge i of the reversed ring is edge (m - 2 - i) mod m of the original
            m = len(r)
            labels[k] = [labels[k][(m - 2 - i) % m] for i in range(m)]

    bpts, seg_a, seg_b, seg_lab, bedges = [], [], [], [], []
    offset = 0
    for r, lab in zip(rings, labels):
        ring_pts = []
        ring_lab = []
        m = len(r)
        for i in range(m):
            p, q = r[i], r[(i + 1) % m]
            nseg = max(1, int(math.ceil(np.linalg.norm(q - p) / h - 1e-9)))
            for j in range(nseg):
                ring_pts.append(p + (q - p) * (j / nseg))
                ring_lab.append(lab[i])
            seg_a.append(p)
            seg_b.append(q)
        nr = len(ring_pts)
        bpts.extend(ring_pts)
        for j in range(nr):
            bedges.append((offset + j, offset + (j + 1) % nr))
        seg_lab.extend(ring_lab)
        offset += nr
    bpts = np.array(bpts)
    seg_a = np.array(seg_a)
    seg_b = np.array(seg_b)

    lo = bpts.min(axis=0)
    hi = bpts.max(axis=0)
    dy = h * math.sqrt(3.0) / 2.0
    ys = np.arange(lo[1] + 0.5 * dy, hi[1], dy)
    cand = []
    for row, y in enumerate(ys):
        shift = 0.5 * h if row % 2 else 0.0
        xs = np.arange(lo[0] + shift + 0.25 * h, hi[0], h)
        cand.append(np.column_stack([xs, np.full_like(xs, y)]))
    cand = np.concatenate(cand) if cand else np.zeros((0, 2))
    if len(cand):
        inside = _inside(rings, cand)
        cand = cand[inside]
    if len(cand):
        dist = _segment_distance(cand, seg_a, seg_b)
        cand = cand[dist > 0.6 * h]
    pts = np.concatenate([bpts, cand])

    tri = Delaunay(pts).simplices
    cen = pts[tri].mean(axis=1)
    tri = tri[_inside(rings, cen)]
    area = signed_areas(pts, tri)
    tri = tri[np.abs(area) > 1e-14 * h * h]

    bedges = np.array(bedges)
    have = {tuple(e) for e in np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1).tolist()}
    missing = [e for e in np.sort(bedges, axis=1).tolist() if tuple(e) not in have]
    if missing:
        raise MeshTopologyError(f"{len(missing)} boundary segments were not recovered by the triangulation")
    return TriMesh.from_arrays(pts, tri, bedges, np.array(seg_lab, dtype=np.int64))


def _inside(rings, points):
    inside = MplPath(rings[0]).contains_points(points)
    for r in rings[1:]:
        inside &= ~MplPath(r).contains_points(points)
    return inside


def interior_angle_sums(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray]:
    """Sum of triangle angles at each vertex, plus a mask of interior vertices."""
    v = mesh.vertices
    sums = np.zeros(mesh.n_vertices)
    for k in range(3):
        i, j, l = mesh.triangles[:, k], mesh.triangles[:, (k + 1) % 3], mesh.triangles[:, (k + 2) % 3]
        e1 = v[j] - v[i]
        e2 = v[l] - v[i]
        ang = np.arctan2(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0], (e1 * e2).sum(1))
        np.add.at(sums, i, ang)
    interior = np.ones(mesh.n_vertices, dtype=bool)
    interior[mesh.panels.ravel()] = False
    return sums, interior
