"""Time-dependent laser fields.

`field(t)` is the physical field epsilon(t) including the carrier;
`field.envelope(t)` is the slowly varying amplitude used by the RWA
dressed-state propagation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid


class LaserField:
    def __call__(self, t):
        raise NotImplementedError

    def envelope(self, t):
        raise NotImplementedError


@dataclass(frozen=True)
class CWField(LaserField):
    omega: float
    amplitude: float

    def __call__(self, t):
        return self.amplitude * np.cos(self.omega * np.asarray(t, dtype=float))

    def envelope(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.amplitude)


@dataclass(frozen=True)
class GaussianPulse(LaserField):
    """E0 exp(-2 ln2 (t - tc)^2 / fwhm^2) cos(omega t).

    `fwhm` is the full width at half maximum of the intensity profile.
    """

    omega: float
    amplitude: float
    t_center: float
    fwhm: float

    def envelope(self, t):
        x = np.asarray(t, dtype=float) - self.t_center
        return self.amplitude * np.exp(-2.0 * math.log(2.0) * x * x / self.fwhm**2)

    def __call__(self, t):
        return self.envelope(t) * np.cos(self.omega * np.asarray(t, dtype=float))


class TabulatedField(LaserField):
    """Linear interpolation of samples (t_n, eps_n); zero outside the table."""

    def __init__(self, times, values):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValueError("tabulated field needs matching 1D arrays of length >= 2")
        if np.any(np.diff(t) <= 0):
            raise ValueError("tabulated field times must be strictly increasing")
        self.times = t
        self.values = v

    def __call__(self, t):
        return np.interp(t, self.times, self.values, left=0.0, right=0.0)

    envelope = __call__

    def fluence(self):
        return float(trapezoid(self.values**2, self.times))

    def save(self, path):
        np.savetxt(path, np.column_stack([self.times, self.values]), fmt="%.17g", header="t_au eps_au")

    @classmethod
    def load(cls, path):
        data = np.loadtxt(path, ndmin=2)
        return cls(data[:, 0], data[:, 1])

    def __repr__(self):
        return f"TabulatedField(n={self.times.size}, t=[{self.times[0]}, {self.times[-1]}])"


@dataclass(frozen=True)
class ZeroField(LaserField):
    omega: float = 0.0

    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    envelope = __call__
