"""Closed-form and separated-variables reference solutions.

These use scipy.special directly and share no code with the boundary
element assembly, so they can check it independently.
"""

from __future__ import annotations

import numpy as np
import scipy.special as sc

from .cq import CqScheme, weighted_dft
from .incident import IncidentWave


def circle_v_eigenvalues(s, nmax: int) -> np.ndarray:
    """Eigenvalues I_n(s) K_n(s) of the single layer operator on the unit circle."""
    n = np.arange(nmax + 1)
    return sc.iv(n, s) * sc.kv(n, s)


def circle_k_eigenvalues(s, nmax: int) -> np.ndarray:
    """Eigenvalues of the double layer operator on the unit circle,
    (s/2)(I_n' K_n + I_n K_n')."""
    n = np.arange(nmax + 1)
    return 0.5 * s * (sc.ivp(n, s) * sc.kv(n, s) + sc.iv(n, s) * sc.kvp(n, s))


def circle_w_eigenvalues(s, nmax: int) -> np.ndarray:
    """Eigenvalues -s^2 I_n' K_n' of the hypersingular operator on the unit circle."""
    n = np.arange(nmax + 1)
    return -s * s * sc.ivp(n, s) * sc.kvp(n, s)


def single_layer_mode(s, n: int, rho: float, theta) -> np.ndarray:
    """S(s) applied to exp(i n theta) on the unit circle, evaluated at radius rho > 1."""
    return sc.iv(n, s) * sc.kv(n, s * rho) * np.exp(1j * n * np.asarray(theta))


def _kn_ratio(n, s, rho):
    """K_n(s rho) / K_n(s) without overflow."""
    return sc.kve(n, s * rho) / sc.kve(n, s) * np.exp(-s * (rho - 1.0))


def sound_soft_circle(wave: IncidentWave, scheme: CqScheme, receivers, n_angles: int = 256) -> np.ndarray:
    """Scattered field of a sound-soft unit circle at ``receivers`` under the
    CQ discretization of ``scheme``.

    At every CQ frequency the sampled incident trace on the exact circle is
    expanded in Fourier modes b_n and the scattered field is
    -sum_n b_n K_n(s rho) / K_n(s) exp(i n theta). Only the spatial
    discretization differs from the boundary element solve.
    """
    rec = np.atleast_2d(receivers)
    th = 2 * np.pi * np.arange(n_angles) / n_angles
    pts = np.column_stack([np.cos(th), np.sin(th)])
    trace = wave.value(scheme.times, pts)  # (nt, M)
    that = weighted_dft(trace, scheme, "forward", real=True)  # (nf, M)
    b = np.fft.fft(that, axis=1) / n_angles  # mode coefficients
    modes = np.fft.fftfreq(n_angles, 1.0 / n_angles).astype(int)
    rho = np.hypot(rec[:, 0], rec[:, 1])
    ang = np.arctan2(rec[:, 1], rec[:, 0])
    out = np.zeros((len(scheme.retained_frequencies), len(rec)), dtype=complex)
    for l, s in enumerate(scheme.retained_frequencies):
        ratio = _kn_ratio(np.abs(modes)[:, None], s, rho[None])  # (M, nrec)
        phase = np.exp(1j * modes[:, None] * ang[None])
        out[l] = -(b[l][:, None] * ratio * phase).sum(0)
    return weighted_dft(out, scheme, "inverse", real=True)


def radial_disk(s, lam: float, mu: float, rho: float, kappa0: float = 1.0):
    """Isotropic disk of radius 1 in fluid, driven by the regular field I_0(s r).

    The solid carries u = A I_1(k r) e_r with k = s / c_p, the fluid the
    scattered field B K_0(s r); normal stress equals minus the pressure
    s (U + I_0) and the normal velocity equals -kappa0 d_r (U + I_0).
    Returns (A, B, k).
    """
    k = s / np.sqrt((lam + 2 * mu) / rho)
    dI1 = 0.5 * (sc.iv(0, k) + sc.iv(2, k))
    M = np.array([
        [(lam + 2 * mu) * k * dI1 + lam * sc.iv(1, k), s * sc.kv(0, s)],
        [s * sc.iv(1, k), -kappa0 * s * sc.kv(1, s)],
    ])
    rhs = np.array([-s * sc.iv(0, s), -kappa0 * s * sc.iv(1, s)])
    A, B = np.linalg.solve(M, rhs)
    return A, B, k


def delay_precursor(profile, scheme: CqScheme, delay: float, margin_steps: int = 5) -> float:
    """Largest |CQ[exp(-s delay)] g| before ``delay - margin`` relative to its peak.

    This is the causality leak of the multistep scheme itself, for a signal
    g with g = 0 on t <= 0 (``profile`` maps times to samples).
    """
    from .cq import convolve_transfer

    t = scheme.times
    y = convolve_transfer(lambda s: np.exp(-s * delay), profile(t), scheme)
    early = np.abs(y[t < delay - margin_steps * scheme.dt])
    return float(early.max() / np.abs(y).max()) if len(early) else 0.0
