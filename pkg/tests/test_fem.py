import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from piezocq.fem import (
    ElectricSolver, FemError, PointLocator, assemble_blocks, build_spaces, rigid_motion_basis, solve_electric,
    trace_coupling,
)
from piezocq.material import PiezoMaterial, benchmark_material
from piezocq.mesh import Label, TriMesh
from piezocq.scenarios import builtin_geometry


def _square_mixed():
    """Two-triangle square with the top edge Neumann."""
    v = [[0, 0], [1, 0], [1, 1], [0, 1]]
    return TriMesh.from_arrays(v, [[0, 1, 2], [0, 2, 3]], [[0, 1], [1, 2], [2, 3], [3, 0]], [1, 1, 2, 1])


def test_dof_counts(unit_square):
    assert build_spaces(unit_square, 1).n_scalar == 4
    assert build_spaces(unit_square, 2).n_scalar == 9
    assert build_spaces(unit_square, 3).n_scalar == 16


def test_pentagon_dirichlet_set_is_whole_boundary():
    m = builtin_geometry("pentagon", 30)
    for k in (1, 2, 3):
        s = build_spaces(m, k)
        assert np.array_equal(s.dirichlet, np.unique(s.panel_dofs))
        assert len(s.dirichlet) == k * len(m.panels)


def test_mass_sums_to_twice_density_times_area():
    m = builtin_geometry("trapping", 30)
    mat = benchmark_material(rho="2.5")
    for k in (1, 2):
        B = assemble_blocks(build_spaces(m, k), mat)
        assert B.M_rho.sum() == pytest.approx(2 * 2.5 * m.area, rel=1e-12)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_rigid_motions_in_kernel(k, bench_mat):
    s = build_spaces(builtin_geometry("pentagon", 20), k)
    B = assemble_blocks(s, bench_mat)
    scale = abs(B.K_C).max()
    basis = rigid_motion_basis(s)
    for r in basis:
        assert np.linalg.norm(B.K_C @ r) <= 1e-10 * scale * np.linalg.norm(r)
    G = np.array([[a @ b for b in basis] for a in basis])
    assert np.linalg.matrix_rank(G) == 3 and len(basis) == 3


def test_zero_piezo_tensor_gives_zero_coupling(isotropic, unit_square):
    B = assemble_blocks(build_spaces(unit_square, 2), isotropic)
    assert B.K_e.nnz == 0 or np.all(B.K_e.data == 0.0)


def test_electric_zero_data(rng):
    m = builtin_geometry("square", 6)
    mat = benchmark_material().replace(e_voigt=np.zeros((2, 3)))
    s = build_spaces(m, 2)
    psi = solve_electric(assemble_blocks(s, mat), s, rng.normal(size=s.n_vector))
    assert np.all(psi == 0.0)


def test_electric_reproduces_affine_potential():
    m = builtin_geometry("pentagon", 16)
    mat = PiezoMaterial(np.eye(3), np.zeros((2, 3)), [1.0, 1.0, 0.0])
    f = lambda x, y: 0.3 - 1.2 * x + 2.5 * y  # noqa: E731
    for k in (1, 2, 3):
        s = build_spaces(m, k)
        B = assemble_blocks(s, mat)
        mu = f(*s.coords[s.dirichlet].T)
        psi = solve_electric(B, s, mu_dofs=mu)
        assert np.max(np.abs(psi - f(*s.coords.T))) < 1e-12


def test_electric_matches_dense_solve(rng, bench_mat):
    s = build_spaces(_square_mixed(), 3)
    B = assemble_blocks(s, bench_mat)
    u = rng.normal(size=s.n_vector)
    eta = rng.normal(size=B.bquad.n_points)
    mu = rng.normal(size=len(s.dirichlet))
    psi = solve_electric(B, s, u, eta, mu)
    # dense oracle: full system with Dirichlet rows replaced by identity
    K = B.K_kappa.toarray()
    rhs = B.K_e.T.toarray() @ u - B.N_gamma.toarray() @ eta
    A = K.copy()
    A[s.dirichlet] = 0.0
    A[s.dirichlet, s.dirichlet] = 1.0
    rhs[s.dirichlet] = mu
    ref = np.linalg.solve(A, rhs)
    assert np.max(np.abs(psi - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_electric_needs_dirichlet(bench_mat):
    m = builtin_geometry("square", 4, labels=[[Label.NEUMANN] * 4])
    s = build_spaces(m, 1)
    with pytest.raises(FemError):
        ElectricSolver(assemble_blocks(s, bench_mat), s)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-3, 3), seed=st.integers(0, 2**16))
def test_electric_superposition(a, seed):
    r = np.random.default_rng(seed)
    s = build_spaces(_square_mixed(), 2)
    B = assemble_blocks(s, benchmark_material())
    solver = ElectricSolver(B, s)
    d1 = [r.normal(size=n) for n in (s.n_vector, B.bquad.n_points, len(s.dirichlet))]
    d2 = [r.normal(size=n) for n in (s.n_vector, B.bquad.n_points, len(s.dirichlet))]
    lhs = solver.solve(*[x + a * y for x, y in zip(d1, d2)])
    rhs = solver.solve(*d1) + a * solver.solve(*d2)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_coupling_transpose_identity(rng, bench_mat):
    s = build_spaces(builtin_geometry("pentagon", 12), 2)
    Ke = assemble_blocks(s, bench_mat).K_e
    a = rng.normal(size=s.n_scalar)
    b = rng.normal(size=s.n_vector)
    assert b @ (Ke @ a) == pytest.approx(a @ (Ke.T @ b), rel=1e-13)


def test_normal_trace_of_constant_field_vanishes():
    m = builtin_geometry("trapping", 40)
    s = build_spaces(m, 2)
    T = trace_coupling(s, *_y_dofs(s, 1))
    c = np.concatenate([np.full(s.n_scalar, 0.7), np.full(s.n_scalar, -1.3)])
    assert abs(c @ (T @ np.ones(T.shape[1]))) < 1e-12


def _y_dofs(s, p):
    from piezocq.bem import build_boundary_spaces

    b = build_boundary_spaces(s.boundary, p)
    return b.y_panel_dofs, p, b.n_y


def test_point_locator_reproduces_cubic():
    s = build_spaces(builtin_geometry("pentagon", 12), 3)
    f = lambda x, y: 1 + x - 2 * y + x * y * y - 0.5 * x**3  # noqa: E731
    pts = np.array([[0.0, 0.0], [0.1, -0.2], [0.3, 0.1], [2.0, 2.0]])
    vals = PointLocator(s).evaluate(s.interpolate(f), pts)
    assert np.allclose(vals[:3], f(*pts[:3].T), atol=1e-13)
    assert np.isnan(vals[3])


def test_blocks_are_symmetric(bench_mat):
    B = assemble_blocks(build_spaces(builtin_geometry("square", 6), 2), bench_mat)
    for M in (B.M_rho, B.K_C, B.K_kappa):
        assert sp.linalg.norm(M - M.T) <= 1e-13 * sp.linalg.norm(M)
