"""Stationary coupled-channel scattering on a finite-difference grid.

The oracle for curve-crossing formulas. The 3-point discretized equations
(E - W) psi + psi''/(2m) = 0 are closed with exact discrete transparent
boundary conditions for each channel (outgoing or evanescent), and an
incoming unit wave is injected through the boundary of the entry channel.
Because the boundary treatment is exact for flat, uncoupled asymptotes,
transmission and reflection probabilities satisfy sum(T) + sum(R) = 1 to
rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve


@dataclass
class ScatteringResult:
    energy: float
    transmitted: np.ndarray  # per channel, exiting on the side opposite the entry
    reflected: np.ndarray  # per channel, exiting on the entry side

    @property
    def total(self):
        return float(self.transmitted.sum() + self.reflected.sum())


def _boundary_factor(e_kin, mass, dx):
    """(lambda, open?, sin(k dx)) for psi_outside = lambda psi_edge (discrete dispersion)."""
    c = 1.0 - mass * dx * dx * e_kin
    if e_kin > 0:
        if c < -1.0:
            raise ValueError("grid too coarse for the kinetic energy at the boundary")
        kd = math.acos(c)
        return complex(math.cos(kd), math.sin(kd)), True, math.sin(kd)
    kd = math.acosh(c)
    return complex(math.exp(-kd), 0.0), False, 0.0


def stationary_scattering(x, w, mass, energy, entry_channel=0, entry_side="left") -> ScatteringResult:
    """Scattering probabilities at one energy for the potential matrix w (shape (nc, nc, n)).

    The entry channel must be open and uncoupled at the entry edge.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if entry_side == "right":
        res = stationary_scattering(-x[::-1], w[:, :, ::-1], mass, energy, entry_channel, "left")
        return res
    nc, _, n = w.shape
    dx = x[1] - x[0]
    kin = 1.0 / (2.0 * mass * dx * dx)
    lam_l, open_l, sin_l = zip(*(_boundary_factor(energy - w[c, c, 0], mass, dx) for c in range(nc)))
    lam_r, open_r, sin_r = zip(*(_boundary_factor(energy - w[c, c, -1], mass, dx) for c in range(nc)))
    if not open_l[entry_channel]:
        raise ValueError(f"entry channel {entry_channel} is closed at energy {energy}")

    # unknown index: c * n + i ; rows are (E - W - T) psi = rhs
    main = np.empty(nc * n, dtype=complex)
    for c in range(nc):
        d = energy - w[c, c] - 2.0 * kin
        d = d.astype(complex)
        d[0] += kin * lam_l[c]
        d[-1] += kin * lam_r[c]
        main[c * n:(c + 1) * n] = d
    off = np.full(n - 1, kin)
    blocks = [[None] * nc for _ in range(nc)]
    for a in range(nc):
        for b in range(nc):
            if a == b:
                blocks[a][b] = sp.diags([off, main[a * n:(a + 1) * n], off], [-1, 0, 1], format="csc")
            else:
                blocks[a][b] = sp.diags(-w[a, b], 0, format="csc")
    mat = sp.bmat(blocks, format="csc")
    rhs = np.zeros(nc * n, dtype=complex)
    # incoming unit-amplitude wave on the entry channel at the left edge
    rhs[entry_channel * n] = kin * 2j * sin_l[entry_channel]
    psi = spsolve(mat, rhs).reshape(nc, n)

    j_in = sin_l[entry_channel]
    trans = np.array([abs(psi[c, -1]) ** 2 * sin_r[c] / j_in if open_r[c] else 0.0 for c in range(nc)])
    refl = np.zeros(nc)
    for c in range(nc):
        if open_l[c]:
            b = psi[c, 0] - (1.0 if c == entry_channel else 0.0)
            refl[c] = abs(b) ** 2 * sin_l[c] / j_in
    return ScatteringResult(float(energy), trans, refl)


def transmission_curve(x, w, mass, energies, entry_channel=0, exit_channel=1):
    """Transmission probability into `exit_channel` over an energy list."""
    return np.array([stationary_scattering(x, w, mass, e, entry_channel).transmitted[exit_channel] for e in energies])
