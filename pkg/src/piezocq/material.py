"""Piezoelectric material coefficients in 2D Voigt form.

Strain vectors are (e11, e22, 2*e12). Stress and electric displacement are

    sigma = C eps + e^T grad(psi)
    D     = e eps - kappa grad(psi)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

_EXPR_NAMES = {
    "abs": np.abs, "sqrt": np.sqrt, "exp": np.exp, "log": np.log,
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "tanh": np.tanh,
    "minimum": np.minimum, "maximum": np.maximum, "where": np.where,
    "pi": math.pi, "e": math.e,
}


class MaterialError(ValueError):
    pass


class CoefficientField:
    """Scalar coefficient given by a closed-form expression in x, y and r."""

    def __init__(self, expr):
        self.expr = str(expr)
        try:
            self._code = compile(self.expr, "<coefficient>", "eval")
        except SyntaxError as exc:
            raise MaterialError(f"bad coefficient expression {self.expr!r}: {exc}") from exc
        bad = [n for n in self._code.co_names if n not in _EXPR_NAMES and n not in ("x", "y", "r")]
        if bad:
            raise MaterialError(f"unknown names {bad} in coefficient expression {self.expr!r}")

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ns = dict(_EXPR_NAMES, x=x, y=y, r=np.hypot(x, y))
        val = eval(self._code, {"__builtins__": {}}, ns)
        return np.broadcast_to(np.asarray(val, dtype=float), np.broadcast(x, y).shape).copy()

    def __repr__(self):
        return f"CoefficientField({self.expr!r})"


def kappa_from_voigt(v) -> np.ndarray:
    a, b, c = (float(t) for t in v)
    return np.array([[a, c], [c, b]])


def c_from_upper(vals) -> np.ndarray:
    c11, c12, c13, c22, c23, c33 = (float(t) for t in vals)
    return np.array([[c11, c12, c13], [c12, c22, c23], [c13, c23, c33]])


@dataclass(frozen=True)
class PiezoMaterial:
    c_voigt: np.ndarray
    e_voigt: np.ndarray
    kappa_psi: np.ndarray
    rho: CoefficientField = field(default_factory=lambda: CoefficientField("1"))
    omega: CoefficientField = field(default_factory=lambda: CoefficientField("0"))
    kappa0: float = 1.0
    kappa1: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "c_voigt", np.asarray(self.c_voigt, dtype=float).reshape(3, 3))
        object.__setattr__(self, "e_voigt", np.asarray(self.e_voigt, dtype=float).reshape(2, 3))
        kp = np.asarray(self.kappa_psi, dtype=float)
        if kp.shape == (3,):
            kp = kappa_from_voigt(kp)
        object.__setattr__(self, "kappa_psi", kp.reshape(2, 2))
        for name in ("rho", "omega"):
            val = getattr(self, name)
            if not isinstance(val, CoefficientField):
                object.__setattr__(self, name, CoefficientField(val))

    @property
    def c_sound(self) -> float:
        return math.sqrt(self.kappa0 / self.kappa1)

    @property
    def c_inverse(self) -> np.ndarray:
        return np.linalg.inv(self.c_voigt)

    @property
    def is_piezoelectric(self) -> bool:
        return bool(np.any(self.e_voigt != 0.0))

    def replace(self, **kw) -> "PiezoMaterial":
        args = dict(
            c_voigt=self.c_voigt, e_voigt=self.e_voigt, kappa_psi=self.kappa_psi,
            rho=self.rho, omega=self.omega, kappa0=self.kappa0, kappa1=self.kappa1,
        )
        args.update(kw)
        return PiezoMaterial(**args)


def benchmark_material(rho="1", omega="0") -> PiezoMaterial:
    """The anisotropic coefficients used by the builtin experiments."""
    return PiezoMaterial(
        c_voigt=[[2.118, 0.6, 0.0], [0.6, 2.118, 0.0], [0.0, 0.0, 0.9]],
        e_voigt=[[1.0, 5.0, 5.0], [5.0, 1.0, 5.0]],
        kappa_psi=[4.0, 4.0, 1.0],
        rho=rho,
        omega=omega,
    )


@dataclass
class MaterialDiagnostics:
    c_eigenvalues: np.ndarray
    kappa_eigenvalues: np.ndarray
    rho_min: float
    rho_max: float
    omega_min: float
    omega_max: float


def validate_material(m: PiezoMaterial, sample_points=None, tol: float = 1e-13) -> MaterialDiagnostics:
    """Check coercivity of C and kappa and positivity of rho, omega >= 0."""
    for name, mat in (("c_voigt", m.c_voigt), ("kappa_psi", m.kappa_psi)):
        if not np.allclose(mat, mat.T, rtol=0, atol=tol * max(1.0, np.abs(mat).max())):
            raise MaterialError(f"{name} is not symmetric")
    ce = np.linalg.eigvalsh(m.c_voigt)
    ke = np.linalg.eigvalsh(m.kappa_psi)
    if ce[0] <= 0:
        raise MaterialError(f"c_voigt is not positive definite (smallest eigenvalue {ce[0]:g})")
    if ke[0] <= 0:
        raise MaterialError(f"kappa_psi is not positive definite (smallest eigenvalue {ke[0]:g})")
    if m.kappa0 <= 0 or m.kappa1 <= 0:
        raise MaterialError("kappa0 and kappa1 must be positive")
    if sample_points is None:
        sample_points = np.zeros((1, 2))
    pts = np.atleast_2d(sample_points)
    rho = m.rho(pts[:, 0], pts[:, 1])
    om = m.omega(pts[:, 0], pts[:, 1])
    if not np.all(np.isfinite(rho)) or rho.min() <= 0:
        raise MaterialError(f"density must be positive (min {rho.min():g})")
    if not np.all(np.isfinite(om)) or om.min() < 0:
        raise MaterialError(f"damping must be nonnegative (min {om.min():g})")
    return MaterialDiagnostics(ce, ke, float(rho.min()), float(rho.max()), float(om.min()), float(om.max()))


def stress_voigt(m: PiezoMaterial, eps_voigt, grad_psi) -> np.ndarray:
    return m.c_voigt @ np.asarray(eps_voigt, dtype=float) + m.e_voigt.T @ np.asarray(grad_psi, dtype=float)


def electric_displacement(m: PiezoMaterial, eps_voigt, grad_psi) -> np.ndarray:
    return m.e_voigt @ np.asarray(eps_voigt, dtype=float) - m.kappa_psi @ np.asarray(grad_psi, dtype=float)


def voigt_to_tensor(v) -> np.ndarray:
    """Stress-like Voigt vector (s11, s22, s12) to a symmetric 2x2 matrix."""
    v = np.asarray(v, dtype=float)
    return np.array([[v[0], v[2]], [v[2], v[1]]])


def strain_to_voigt(A) -> np.ndarray:
    """Symmetric strain tensor to engineering Voigt form (a11, a22, 2 a12)."""
    A = np.asarray(A, dtype=float)
    return np.array([A[0, 0], A[1, 1], A[0, 1] + A[1, 0]])
