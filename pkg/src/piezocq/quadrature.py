"""Quadrature rules: Gauss-Legendre on [0, 1], geometrically graded and
composite rules for log-singular panel integrals, collapsed triangle rules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Collapsed (Stroud conical) rule on the reference triangle.

    Returns points (n, 2) and weights summing to 1/2, exact for total degree
    ``degree``.
    """
    n = degree // 2 + 2
    u, wu = gauss01(n)
    v, wv = gauss01(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    x = U * (1.0 - V)
    y = V
    w = np.outer(wu, wv) * (1.0 - V)
    return np.column_stack([x.ravel(), y.ravel()]), w.ravel()


def _tensor(a, wa, b, wb):
    A, B = np.meshgrid(a, b, indexing="ij")
    return A.ravel(), B.ravel(), np.outer(wa, wb).ravel()


@lru_cache(maxsize=None)
def graded01(n: int, levels: int = 14, sigma: float = 0.15) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule on [0, 1] geometrically refined towards 0.

    Integrates functions with a logarithmic or power-type endpoint singularity
    at 0 to near machine precision without splitting the integrand.
    """
    g, wg = gauss01(n)
    edges = np.concatenate([[0.0], sigma ** np.arange(levels, -1, -1)])
    x = []
    w = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x.append(lo + (hi - lo) * g)
        w.append((hi - lo) * wg)
    return np.concatenate(x), np.concatenate(w)


def split_gauss01(n: int, pieces: int) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss rule with ``pieces`` equal subintervals."""
    g, wg = gauss01(n)
    off = np.arange(pieces)[:, None] / pieces
    return (off + g[None] / pieces).ravel(), np.tile(wg / pieces, pieces)


def lagrange_1d(nodes: np.ndarray, x: np.ndarray, deriv: bool = False) -> np.ndarray:
    """Values (or derivatives) of the 1D Lagrange basis on ``nodes`` at ``x``.

    Output shape is ``(len(x), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    m = len(nodes)
    if m == 1:
        return np.zeros((len(x), 1)) if deriv else np.ones((len(x), 1))
    V = np.vander(nodes, m, increasing=True)
    C = np.linalg.inv(V)  # column j holds coefficients of basis j
    if deriv:
        P = np.zeros((len(x), m))
        for p in range(1, m):
            P[:, p] = p * x ** (p - 1)
    else:
        P = np.vander(x, m, increasing=True)
    return P @ C


class PanelQuadrature:
    """Gauss points on every boundary panel.

    ``points`` has shape (np, n, 2); ``weights`` (np, n) include the panel
    length, so ``sum(weights * f(points))`` integrates ``f`` over the curve.
    """

    def __init__(self, boundary, n: int):
        self.n = n
        self.t, w = gauss01(n)
        self.points = boundary.points(self.t)
        self.weights = boundary.lengths[:, None] * w[None, :]
        self.normals = boundary.normals
        self.labels = boundary.labels

    @property
    def flat_points(self) -> np.ndarray:
        return self.points.reshape(-1, 2)

    @property
    def n_points(self) -> int:
        return self.points.shape[0] * self.points.shape[1]
