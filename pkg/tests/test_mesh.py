import math

import numpy as np
import pytest

from piezocq.mesh import (
    Label, MeshLabelError, MeshParseError, MeshTopologyError, TriMesh, boundary_of,
    interior_angle_sums, load_mesh, mesh_polygon, save_mesh, signed_areas,
)
from piezocq.scenarios import builtin_geometry, pentagon_ring, square_ring


def _write(tmp_path, text):
    p = tmp_path / "m.msh"
    p.write_text(text)
    return p


SQUARE_MSH = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 1 2 1 1 1 2
2 1 2 1 1 2 3
3 1 2 1 1 3 4
4 1 2 1 1 4 1
5 2 2 10 10 1 2 3
6 2 2 10 10 1 3 4
$EndElements
"""


def test_load_unit_square(tmp_path):
    m = load_mesh(_write(tmp_path, SQUARE_MSH))
    assert m.n_vertices == 4
    assert len(m.triangles) == 2
    assert len(m.panels) == 4
    assert boundary_of(m).perimeter == pytest.approx(4.0, abs=1e-14)
    assert np.all(m.panel_labels == Label.DIRICHLET)


def test_shared_boundary_edge_is_topology_error(tmp_path):
    # edge 1-3 is the diagonal shared by both triangles
    text = SQUARE_MSH.replace("6\n1 1 2 1 1 1 2", "7\n0 1 2 1 1 1 3\n1 1 2 1 1 1 2")
    with pytest.raises(MeshTopologyError):
        load_mesh(_write(tmp_path, text))


def test_malformed_and_unlabelled_files(tmp_path):
    with pytest.raises(MeshParseError):
        load_mesh(_write(tmp_path, "$Nodes\n2\n1 0 0 0\n"))
    with pytest.raises(MeshParseError):
        load_mesh(tmp_path / "missing.msh")
    text = SQUARE_MSH.replace("6\n1 1 2 1 1 1 2\n", "5\n")
    with pytest.raises(MeshLabelError):
        load_mesh(_write(tmp_path, text))
    with pytest.raises(MeshLabelError):
        load_mesh(_write(tmp_path, SQUARE_MSH.replace("1 1 2 1 1 1 2", "1 1 2 7 7 1 2")))


def test_clockwise_triangles_are_reoriented():
    m = TriMesh.from_arrays([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]], [[0, 1], [1, 2], [2, 0]], [1, 2, 1])
    assert signed_areas(m.vertices, m.triangles)[0] > 0


def test_pentagon_panel_count_at_fine_resolution():
    m = builtin_geometry("pentagon", 0.014)
    assert abs(len(m.panels) - 232) <= 23


def test_pentagon_loop_length_and_corners():
    m = builtin_geometry("pentagon", 40)
    b = boundary_of(m)
    ring = pentagon_ring()
    side = np.linalg.norm(ring[1] - ring[0])
    assert len(m.loops) == 1
    assert b.perimeter == pytest.approx(5 * side, abs=1e-12)
    for c in ring:
        assert np.min(np.linalg.norm(m.vertices - c, axis=1)) < 1e-14


def test_square_with_hole_has_two_loops_and_outward_normals():
    hole = 0.4 * square_ring()
    m = mesh_polygon([square_ring(), hole], 0.1)
    assert len(m.loops) == 2
    signed = []
    for lo, hi in m.loops:
        ring = m.vertices[m.panels[lo:hi, 0]]
        x, y = ring[:, 0], ring[:, 1]
        signed.append(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))
    assert sorted(np.sign(signed)) == [-1.0, 1.0]
    # a step along the normal leaves the solid
    mid = 0.5 * (m.vertices[m.panels[:, 0]] + m.vertices[m.panels[:, 1]])
    assert not np.any(m.contains(mid + 1e-6 * m.panel_normals))
    assert np.all(m.contains(mid - 1e-6 * m.panel_normals))


@pytest.mark.parametrize("name", ["pentagon", "trapping", "square", "circle"])
def test_mesh_invariants(name):
    m = builtin_geometry(name, 32)
    b = boundary_of(m)
    assert np.all(signed_areas(m.vertices, m.triangles) > 0)
    assert np.allclose(np.linalg.norm(b.normals, axis=1), 1.0, atol=1e-14)
    assert np.max(np.abs((b.normals * b.tangents).sum(1))) < 1e-14
    # closed loops: each panel ends where the next starts
    for lo, hi in m.loops:
        p = m.panels[lo:hi]
        assert np.array_equal(p[:, 1], np.roll(p[:, 0], -1))
    sums, interior = interior_angle_sums(m)
    assert np.max(np.abs(sums[interior] - 2 * math.pi)) < 1e-10


def test_round_trip_is_bit_exact(tmp_path):
    m = builtin_geometry("trapping", 48)
    save_mesh(m, tmp_path / "t.msh")
    r = load_mesh(tmp_path / "t.msh")
    assert np.array_equal(m.vertices, r.vertices)
    assert np.array_equal(m.triangles, r.triangles)
    assert np.array_equal(m.panels, r.panels)
    assert np.array_equal(m.panel_labels, r.panel_labels)


def test_circle_perimeter_is_inscribed_polygon():
    for n in (16, 64, 256):
        b = boundary_of(builtin_geometry("circle", n))
        assert b.perimeter == pytest.approx(2 * n * math.sin(math.pi / n), rel=1e-13)
        assert abs(b.perimeter - 2 * math.pi) < 25.0 / n**2


def test_square_area():
    assert builtin_geometry("square", 8).area == pytest.approx(1.0, abs=1e-12)
