"""Incident plane waves, smoothed step functions and grounding potentials."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .material import CoefficientField


def smooth_heaviside(t):
    """Polynomial ramp from 0 (t <= 0) to 1 (t >= 1).

    On [0, 1] it is t^5 times the degree-5 Taylor polynomial of t^-5 about
    t = 1, so it meets 1 with five vanishing derivatives.
    """
    t = np.asarray(t, dtype=float)
    s = t - 1.0
    poly = t**5 * (1 - 5 * s + 15 * s**2 - 35 * s**3 + 70 * s**4 - 126 * s**5)
    return np.where(t <= 0.0, 0.0, np.where(t >= 1.0, 1.0, poly))


def smooth_heaviside_derivative(t):
    t = np.asarray(t, dtype=float)
    s = t - 1.0
    poly = 1 - 5 * s + 15 * s**2 - 35 * s**3 + 70 * s**4 - 126 * s**5
    dpoly = -5 + 30 * s - 105 * s**2 + 280 * s**3 - 630 * s**4
    return np.where((t > 0.0) & (t < 1.0), 5 * t**4 * poly + t**5 * dpoly, 0.0)


KINDS = ("plane_pulse", "causal_sine", "bump", "none")


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave v(t, x) = f(t - (x - origin) . d).

    plane_pulse: f = A chi_[0, window](tau) sin(omega tau)
    causal_sine: f = A H(tau) sin(omega tau), H the smooth ramp
    bump:        f = A sin^2(pi tau / window) on [0, window]
    """

    kind: str = "none"
    amplitude: float = 3.0
    direction: tuple = (1.0, 0.0)
    omega: float = 88.0
    window: float = 0.3
    origin: tuple = (0.0, 0.0)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown incident kind {self.kind!r}")
        d = np.asarray(self.direction, dtype=float)
        nd = float(np.hypot(*d))
        if nd == 0:
            raise ValueError("incident direction must be nonzero")
        object.__setattr__(self, "direction", tuple((d / nd).tolist()))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @property
    def d(self) -> np.ndarray:
        return np.asarray(self.direction)

    def tau(self, t, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.asarray(t)[..., None] - ((pts - np.asarray(self.origin)) @ self.d)

    def profile(self, tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        A, w, om = self.amplitude, self.window, self.omega
        if self.kind == "plane_pulse":
            return np.where((tau >= 0) & (tau <= w), A * np.sin(om * tau), 0.0)
        if self.kind == "causal_sine":
            return A * smooth_heaviside(tau) * np.sin(om * tau)
        if self.kind == "bump":
            return np.where((tau >= 0) & (tau <= w), A * np.sin(math.pi * tau / w) ** 2, 0.0)
        return np.zeros_like(tau)

    def profile_derivative(self, tau) -> np.ndarray:
        """Pointwise derivative of the profile (jumps are not included)."""
        tau = np.asarray(tau, dtype=float)
        A, w, om = self.amplitude, self.window, self.omega
        if self.kind == "plane_pulse":
            return np.where((tau >= 0) & (tau <= w), A * om * np.cos(om * tau), 0.0)
        if self.kind == "causal_sine":
            return A * (smooth_heaviside_derivative(tau) * np.sin(om * tau)
                        + om * smooth_heaviside(tau) * np.cos(om * tau))
        if self.kind == "bump":
            inside = (tau >= 0) & (tau <= w)
            return np.where(inside, A * (math.pi / w) * np.sin(2 * math.pi * tau / w), 0.0)
        return np.zeros_like(tau)

    def value(self, t, points) -> np.ndarray:
        """v(t, x); ``t`` broadcasts against the leading axis of the output."""
        return self.profile(self.tau(t, points))

    def gradient(self, t, points) -> np.ndarray:
        return -self.profile_derivative(self.tau(t, points))[..., None] * self.d

    def arrival_time(self, points) -> np.ndarray:
        """Time at which the wave front reaches each point."""
        pts = np.atleast_2d(points)
        return (pts - np.asarray(self.origin)) @ self.d

    @property
    def is_zero(self) -> bool:
        return self.kind == "none" or self.amplitude == 0.0


def plane_pulse(t, point, wave: IncidentWave | None = None):
    wave = wave or IncidentWave(kind="plane_pulse", direction=(1.0, 5.0))
    return wave.value(t, np.atleast_2d(point))[..., 0]


@dataclass
class BoundaryData:
    beta0: np.ndarray  # (n_times, n_points)
    beta1: np.ndarray


def boundary_data(wave: IncidentWave, bquad, kappa0: float, times) -> BoundaryData:
    """Trace and flux kappa0 grad(v).nu of the incident wave at the boundary
    quadrature nodes for every time in ``times``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    pts = bquad.flat_points
    nrm = np.repeat(bquad.normals, bquad.points.shape[1], axis=0)
    if wave.is_zero:
        z = np.zeros((len(times), len(pts)))
        return BoundaryData(z, z.copy())
    tau = wave.tau(times, pts)
    beta0 = wave.profile(tau)
    beta1 = -kappa0 * wave.profile_derivative(tau) * (nrm @ wave.d)[None]
    return BoundaryData(beta0, beta1)


GROUNDING_KINDS = ("step", "sine", "none")


@dataclass(frozen=True)
class Grounding:
    """Dirichlet potential mu(x, t) = g(t) * profile(x, y).

    step: g = A H(t); sine: g = A H(t) sin(omega t).
    """

    kind: str = "none"
    amplitude: float = 10.0
    omega: float = 4.0 * math.pi
    profile: CoefficientField = field(default_factory=lambda: CoefficientField("1"))

    def __post_init__(self):
        if self.kind not in GROUNDING_KINDS:
            raise ValueError(f"unknown grounding kind {self.kind!r}")
        if not isinstance(self.profile, CoefficientField):
            object.__setattr__(self, "profile", CoefficientField(self.profile))

    def time_factor(self, t) -> np.ndarray:
        return grounding_potential(self.kind, t, self.amplitude, self.omega)

    def values(self, times, points) -> np.ndarray:
        """mu at ``points`` for every time, shape (n_times, n_points)."""
        pts = np.atleast_2d(points)
        return np.outer(self.time_factor(np.atleast_1d(times)), self.profile(pts[:, 0], pts[:, 1]))

    @property
    def is_zero(self) -> bool:
        return self.kind == "none" or self.amplitude == 0.0


def grounding_potential(kind: str, t, amplitude: float | None = None, omega: float = 4.0 * math.pi):
    t = np.asarray(t, dtype=float)
    if kind == "step":
        return (10.0 if amplitude is None else amplitude) * smooth_heaviside(t)
    if kind == "sine":
        return (6.0 if amplitude is None else amplitude) * smooth_heaviside(t) * np.sin(omega * t)
    if kind == "none":
        return np.zeros_like(t)
    raise ValueError(f"unknown grounding kind {kind!r}")
