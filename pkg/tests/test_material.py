import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from piezocq.material import (
    CoefficientField, MaterialError, PiezoMaterial, electric_displacement, benchmark_material, strain_to_voigt,
    stress_voigt, validate_material, voigt_to_tensor,
)

finite = st.floats(-10, 10, allow_nan=False)
vec3 = arrays(float, 3, elements=finite)
vec2 = arrays(float, 2, elements=finite)


def test_benchmark_stiffness_eigenvalues(bench_mat):
    d = validate_material(bench_mat)
    assert np.allclose(np.sort(d.c_eigenvalues), [0.9, 1.518, 2.718], atol=1e-12)


def test_kappa_from_voigt(bench_mat):
    assert np.array_equal(bench_mat.kappa_psi, [[4.0, 1.0], [1.0, 4.0]])
    assert np.allclose(validate_material(bench_mat).kappa_eigenvalues, [3.0, 5.0], atol=1e-13)


def test_indefinite_stiffness_rejected():
    m = benchmark_material().replace(c_voigt=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(MaterialError, match="positive definite"):
        validate_material(m)


def test_density_and_damping_checks():
    pts = np.array([[0.0, 0.0], [0.5, 0.5]])
    with pytest.raises(MaterialError, match="density"):
        validate_material(benchmark_material(rho="x - 0.1"), pts)
    with pytest.raises(MaterialError, match="damping"):
        validate_material(benchmark_material(omega="-1"), pts)
    d = validate_material(benchmark_material(rho="5 + 25*exp(-100*r**2)"), pts)
    assert d.rho_max == pytest.approx(30.0)


def test_coefficient_expression_is_sandboxed():
    with pytest.raises(MaterialError):
        CoefficientField("x.__class__")
    with pytest.raises(MaterialError):
        CoefficientField("open('f')")
    with pytest.raises(MaterialError):
        CoefficientField("1 +")
    assert CoefficientField("2")(np.zeros(3), np.zeros(3)).shape == (3,)


def test_stress_examples(bench_mat):
    assert np.array_equal(stress_voigt(bench_mat, np.zeros(3), np.zeros(2)), np.zeros(3))
    assert np.allclose(stress_voigt(bench_mat, [1, 1, 0], [0, 0]), [2.718, 2.718, 0.0], atol=1e-15)
    s = stress_voigt(bench_mat, np.zeros(3), [1, 0])
    assert np.array_equal(s, [1.0, 5.0, 5.0])
    assert np.array_equal(voigt_to_tensor(s), [[1.0, 5.0], [5.0, 5.0]])


def test_electric_displacement_examples(bench_mat):
    assert np.array_equal(electric_displacement(bench_mat, np.zeros(3), np.zeros(2)), [0.0, 0.0])
    assert np.array_equal(electric_displacement(bench_mat, np.zeros(3), [1, 0]), [-4.0, -1.0])
    assert np.array_equal(electric_displacement(bench_mat, [1, 0, 0], [0, 0]), [1.0, 5.0])


@settings(max_examples=50, deadline=None)
@given(eps=vec3, d=vec2)
def test_coupling_adjointness(eps, d):
    e = benchmark_material().e_voigt
    lhs = (e.T @ d) @ eps
    rhs = d @ (e @ eps)
    assert abs(lhs - rhs) <= 1e-14 * max(1.0, np.abs(e).max() * np.abs(d).max() * np.abs(eps).max() * 6)


@settings(max_examples=50, deadline=None)
@given(e1=vec3, e2=vec3, g1=vec2, g2=vec2, a=finite)
def test_constitutive_maps_are_linear(e1, e2, g1, g2, a):
    m = benchmark_material()
    for f in (stress_voigt, electric_displacement):
        lhs = f(m, e1 + a * e2, g1 + a * g2)
        rhs = f(m, e1, g1) + a * f(m, e2, g2)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-11)


@settings(max_examples=50, deadline=None)
@given(a=arrays(float, 3, elements=finite))
def test_compliance_inverts_stiffness(a):
    m = benchmark_material()
    A = voigt_to_tensor(a)  # random symmetric matrix
    # strain whose stress is A: C (C^-1 A) = A
    eps = m.c_inverse @ np.array([A[0, 0], A[1, 1], A[0, 1]])
    back = voigt_to_tensor(m.c_voigt @ eps)
    assert np.allclose(back, A, rtol=1e-12, atol=1e-12)
    assert np.allclose(strain_to_voigt(voigt_to_tensor([1.0, 2.0, 3.0])), [1.0, 2.0, 6.0])


def test_sound_speed():
    m = PiezoMaterial(np.eye(3), np.zeros((2, 3)), [1, 1, 0], kappa0=4.0, kappa1=1.0)
    assert m.c_sound == 2.0
    assert not m.is_piezoelectric
