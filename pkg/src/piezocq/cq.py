"""BDF2 convolution quadrature, all steps at once.

A causal convolution ``F(d/dt) g`` sampled at t_n = n dt, n = 0..N, is
computed by scaling the samples with lambda^n, taking a DFT, multiplying by
F(s_l) at the frequencies s_l = delta(lambda exp(-2 pi i l / (N+1))) / dt and
transforming back.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


def bdf2_symbol(zeta):
    """Generating polynomial of BDF2: 3/2 - 2 zeta + zeta^2 / 2."""
    zeta = np.asarray(zeta)
    return 1.5 - 2.0 * zeta + 0.5 * zeta * zeta


class CqError(ValueError):
    pass


@dataclass(frozen=True)
class CqScheme:
    dt: float
    nsteps: int  # N; samples are t_0 .. t_N
    tol: float = 1e-12
    radius: float | None = None  # overrides tol when given

    def __post_init__(self):
        if not self.dt > 0:
            raise CqError("time step must be positive")
        if int(self.nsteps) < 0:
            raise CqError("step count must be nonnegative")
        if self.radius is not None and not 0 < self.radius < 1:
            raise CqError("contour radius must lie in (0, 1)")
        if self.radius is None and not 0 < self.tol < 1:
            raise CqError("cq tolerance must lie in (0, 1)")

    @property
    def n_samples(self) -> int:
        return int(self.nsteps) + 1

    @cached_property
    def lam(self) -> float:
        if self.radius is not None:
            return float(self.radius)
        return float(self.tol ** (1.0 / (2.0 * self.n_samples)))

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_samples)

    @property
    def n_retained(self) -> int:
        """Frequencies needed for real data (the rest are conjugates)."""
        return self.n_samples // 2 + 1

    @cached_property
    def frequencies(self) -> np.ndarray:
        n = self.n_samples
        zeta = self.lam * np.exp(-2j * np.pi * np.arange(n) / n)
        s = bdf2_symbol(zeta) / self.dt
        if n <= 2**20 and len(np.unique(np.round(s, 12))) != n and n > 1:
            raise CqError("coincident CQ frequencies")
        return s

    @property
    def retained_frequencies(self) -> np.ndarray:
        return self.frequencies[: self.n_retained]

    @cached_property
    def _scale(self) -> np.ndarray:
        return self.lam ** np.arange(self.n_samples)


def cq_frequencies(scheme: CqScheme) -> np.ndarray:
    return scheme.frequencies


def weighted_dft(samples, scheme: CqScheme, direction: str = "forward", real: bool = False):
    """Scaled DFT pair along axis 0.

    ``forward``: hat_l = sum_n lambda^n g_n exp(-2 pi i l n / (N+1)); with
    ``real=True`` only the first ``n_retained`` rows are returned.
    ``inverse``: the exact inverse; with ``real=True`` the input holds the
    retained rows only and the output is real.
    """
    x = np.asarray(samples)
    n = scheme.n_samples
    scale = scheme._scale.reshape((-1,) + (1,) * (x.ndim - 1))
    if direction == "forward":
        if x.shape[0] != n:
            raise CqError(f"expected {n} samples, got {x.shape[0]}")
        if real:
            return np.fft.rfft(scale * x, axis=0)
        return np.fft.fft(scale * x, axis=0)
    if direction == "inverse":
        if real:
            if x.shape[0] != scheme.n_retained:
                raise CqError(f"expected {scheme.n_retained} retained frequencies, got {x.shape[0]}")
            return np.fft.irfft(x, n=n, axis=0) / scale
        if x.shape[0] != n:
            raise CqError(f"expected {n} frequencies, got {x.shape[0]}")
        return np.fft.ifft(x, axis=0) / scale
    raise CqError(f"unknown direction {direction!r}")


def convolve_transfer(F, g, scheme: CqScheme) -> np.ndarray:
    """CQ approximation of (F(d/dt) g)(t_n).

    ``F`` maps an array of complex frequencies to transfer values. Real
    input is processed with the conjugate-pair economy.
    """
    g = np.asarray(g)
    real = not np.iscomplexobj(g)
    hat = weighted_dft(g, scheme, "forward", real=real)
    s = scheme.retained_frequencies if real else scheme.frequencies
    fs = np.asarray(F(s))
    hat = hat * fs.reshape((-1,) + (1,) * (hat.ndim - 1))
    return weighted_dft(hat, scheme, "inverse", real=real)
