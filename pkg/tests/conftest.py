import numpy as np
import pytest

from piezocq.material import PiezoMaterial, benchmark_material
from piezocq.mesh import TriMesh


@pytest.fixture
def unit_square() -> TriMesh:
    """Unit square split into two triangles, all boundary Dirichlet."""
    v = [[0, 0], [1, 0], [1, 1], [0, 1]]
    tri = [[0, 1, 2], [0, 2, 3]]
    edges = [[0, 1], [1, 2], [2, 3], [3, 0]]
    return TriMesh.from_arrays(v, tri, edges, [1, 1, 1, 1])


@pytest.fixture
def bench_mat() -> PiezoMaterial:
    return benchmark_material()


@pytest.fixture
def isotropic() -> PiezoMaterial:
    return PiezoMaterial(
        c_voigt=[[4.0, 2.0, 0.0], [2.0, 4.0, 0.0], [0.0, 0.0, 1.0]],
        e_voigt=np.zeros((2, 3)), kappa_psi=[1.0, 1.0, 0.0], rho="3",
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
