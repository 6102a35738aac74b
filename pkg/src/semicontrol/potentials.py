"""Diatomic curve sets, transition dipoles and the RWA dressed-state picture.

A :class:`CurveSet` bundles diabatic potential curves V_i(R), the transition
dipoles mu_ij(R) coupling them, the reduced mass and channel labels. Dressing
with a single laser frequency (rotating-wave approximation, one photon)
turns the driven problem into a static curve-crossing problem::

    W_ii(R) = V_i(R) - n_i * omega
    W_ij(R) = mu_ij(R) * E0 / 2        (|n_i - n_j| = 1, else 0)

All quantities are atomic units.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline


# --------------------------------------------------------------------------
# curve primitives
# --------------------------------------------------------------------------


class Curve:
    """Scalar function of R with analytic first and second derivatives."""

    def __call__(self, r):
        raise NotImplementedError

    def derivative(self, r, order=1):
        raise NotImplementedError


@dataclass(frozen=True)
class Morse(Curve):
    """D (1 - exp(-a (R - Re)))^2 + offset; minimum at `offset`, asymptote offset + D."""

    depth: float
    alpha: float
    re: float
    offset: float = 0.0

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError(f"Morse well depth must be positive, got {self.depth}")
        if self.alpha <= 0:
            raise ValueError(f"Morse range parameter must be positive, got {self.alpha}")

    def __call__(self, r):
        e = np.exp(-self.alpha * (np.asarray(r, dtype=float) - self.re))
        return self.depth * (1.0 - e) ** 2 + self.offset

    def derivative(self, r, order=1):
        a, d = self.alpha, self.depth
        e = np.exp(-a * (np.asarray(r, dtype=float) - self.re))
        if order == 1:
            return 2.0 * d * a * (1.0 - e) * e
        if order == 2:
            return 2.0 * d * a * a * (2.0 * e * e - e)
        raise ValueError("order must be 1 or 2")

    @property
    def frequency_factor(self):
        return self.alpha * np.sqrt(2.0 * self.depth)

    def levels(self, mass, vmax):
        """Closed-form Morse vibrational energies E_0..E_vmax (absolute)."""
        omega = self.alpha * np.sqrt(2.0 * self.depth / mass)
        v = np.arange(vmax + 1) + 0.5
        return self.offset + omega * v - (omega * v) ** 2 / (4.0 * self.depth)


@dataclass(frozen=True)
class Exponential(Curve):
    """A exp(-b R) + C. Repulsive for A, b > 0; a rising wall for b < 0."""

    amplitude: float
    rate: float
    constant: float = 0.0

    def __call__(self, r):
        return self.amplitude * np.exp(-self.rate * np.asarray(r, dtype=float)) + self.constant

    def derivative(self, r, order=1):
        e = self.amplitude * np.exp(-self.rate * np.asarray(r, dtype=float))
        if order == 1:
            return -self.rate * e
        if order == 2:
            return self.rate**2 * e
        raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class Harmonic(Curve):
    """0.5 k (R - R0)^2 + offset."""

    k: float
    r0: float = 0.0
    offset: float = 0.0

    def __call__(self, r):
        return 0.5 * self.k * (np.asarray(r, dtype=float) - self.r0) ** 2 + self.offset

    def derivative(self, r, order=1):
        r = np.asarray(r, dtype=float)
        if order == 1:
            return self.k * (r - self.r0)
        if order == 2:
            return np.full_like(r, self.k)
        raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class Linear(Curve):
    """E0 + F (R - R0)."""

    slope: float
    r0: float = 0.0
    e0: float = 0.0

    def __call__(self, r):
        return self.e0 + self.slope * (np.asarray(r, dtype=float) - self.r0)

    def derivative(self, r, order=1):
        r = np.asarray(r, dtype=float)
        if order == 1:
            return np.full_like(r, self.slope)
        if order == 2:
            return np.zeros_like(r)
        raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class TanhRamp(Curve):
    """E0 + F L tanh((R - R0)/L): slope F at R0, flat asymptotes E0 +- F L."""

    slope: float
    length: float
    r0: float = 0.0
    e0: float = 0.0

    def __call__(self, r):
        x = (np.asarray(r, dtype=float) - self.r0) / self.length
        return self.e0 + self.slope * self.length * np.tanh(x)

    def derivative(self, r, order=1):
        x = (np.asarray(r, dtype=float) - self.r0) / self.length
        sech2 = 1.0 / np.cosh(x) ** 2
        if order == 1:
            return self.slope * sech2
        if order == 2:
            return -2.0 * self.slope / self.length * sech2 * np.tanh(x)
        raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class Shifted(Curve):
    """curve(R) + shift."""

    curve: Curve
    shift: float

    def __call__(self, r):
        return self.curve(r) + self.shift

    def derivative(self, r, order=1):
        return self.curve.derivative(r, order)


@dataclass(frozen=True)
class GaussianDipole(Curve):
    """mu0 exp(-(R - R_mu)^2 / (2 sigma^2))."""

    mu0: float
    center: float
    width: float

    def __call__(self, r):
        x = np.asarray(r, dtype=float) - self.center
        return self.mu0 * np.exp(-0.5 * x * x / self.width**2)

    def derivative(self, r, order=1):
        x = np.asarray(r, dtype=float) - self.center
        s2 = self.width**2
        g = self.mu0 * np.exp(-0.5 * x * x / s2)
        if order == 1:
            return -x / s2 * g
        if order == 2:
            return (x * x / s2 - 1.0) / s2 * g
        raise ValueError("order must be 1 or 2")


@dataclass(frozen=True)
class LinearDipole(Curve):
    """mu0 + mu1 R (mu1 = 0 gives a constant dipole)."""

    mu0: float = 0.0
    mu1: float = 0.0

    def __call__(self, r):
        return self.mu0 + self.mu1 * np.asarray(r, dtype=float)

    def derivative(self, r, order=1):
        r = np.asarray(r, dtype=float)
        if order == 1:
            return np.full_like(r, self.mu1)
        if order == 2:
            return np.zeros_like(r)
        raise ValueError("order must be 1 or 2")


class Tabulated(Curve):
    """Cubic-spline interpolant of a tabulated curve."""

    def __init__(self, r, v):
        r = np.asarray(r, dtype=float)
        v = np.asarray(v, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 4:
            raise ValueError("tabulated curve needs matching 1D arrays of at least 4 points")
        if np.any(np.diff(r) <= 0):
            raise ValueError("tabulated R values must be strictly increasing")
        self.r = r
        self.v = v
        self._spline = CubicSpline(r, v)

    @classmethod
    def from_file(cls, path):
        """Two whitespace-separated columns: R (bohr), V (hartree)."""
        data = np.loadtxt(path, ndmin=2)
        if data.shape[1] < 2:
            raise ValueError(f"{path}: expected two columns")
        return cls(data[:, 0], data[:, 1])

    def __call__(self, r):
        return self._spline(np.asarray(r, dtype=float))

    def derivative(self, r, order=1):
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        return self._spline(np.asarray(r, dtype=float), order)

    def __repr__(self):
        return f"Tabulated(n={self.r.size}, r=[{self.r[0]}, {self.r[-1]}])"


# --------------------------------------------------------------------------
# curve sets and dressing
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CurveSet:
    """Diabatic curves, transition dipoles and mass for one diatomic system."""

    curves: tuple
    dipoles: dict
    mass: float
    labels: tuple = ()
    ground_index: int = 0
    domain: tuple = (0.5, 30.0)

    def __post_init__(self):
        object.__setattr__(self, "curves", tuple(self.curves))
        if not self.curves:
            raise ValueError("a curve set needs at least one curve")
        if self.mass <= 0:
            raise ValueError(f"reduced mass must be positive, got {self.mass}")
        if not 0 <= self.ground_index < len(self.curves):
            raise ValueError(f"ground_index {self.ground_index} does not address a curve")
        labels = tuple(self.labels) or tuple(f"state{i}" for i in range(len(self.curves)))
        if len(labels) != len(self.curves):
            raise ValueError("one label per curve required")
        object.__setattr__(self, "labels", labels)
        dip = {}
        for (i, j), mu in dict(self.dipoles).items():
            if i == j:
                raise ValueError("permanent dipoles (i == j) are not supported")
            if not (0 <= i < len(self.curves) and 0 <= j < len(self.curves)):
                raise ValueError(f"dipole pair {(i, j)} out of range")
            dip[(min(i, j), max(i, j))] = mu
        object.__setattr__(self, "dipoles", dip)
        lo, hi = self.domain
        if not hi > lo:
            raise ValueError("domain must satisfy R_max > R_min")

    @property
    def n_states(self):
        return len(self.curves)

    def dipole(self, i, j):
        """mu_ij as a callable (zero function if absent)."""
        return self.dipoles.get((min(i, j), max(i, j)), _ZERO)

    def potential_matrix(self, r):
        """Diagonal diabatic potentials, shape (n, n, len(r))."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        n = self.n_states
        out = np.zeros((n, n, r.size))
        for i, c in enumerate(self.curves):
            out[i, i] = c(r)
        return out

    def dipole_matrix(self, r):
        """Symmetric transition-dipole matrix, zero diagonal, shape (n, n, len(r))."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        n = self.n_states
        out = np.zeros((n, n, r.size))
        for (i, j), mu in self.dipoles.items():
            out[i, j] = out[j, i] = mu(r)
        return out


class _Zero(Curve):
    def __call__(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def derivative(self, r, order=1):
        return np.zeros_like(np.asarray(r, dtype=float))


_ZERO = _Zero()


@dataclass(frozen=True)
class DressedSet:
    """Static diabatic matrix of a CurveSet dressed by one CW frequency (RWA)."""

    curves: CurveSet
    omega: float
    amplitude: float
    dressing: tuple

    def photon_coupled(self, i, j):
        return abs(self.dressing[i] - self.dressing[j]) == 1

    def diagonal(self, r, order=0):
        """W_ii (order 0) or its R-derivatives, shape (n, len(r))."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty((self.curves.n_states, r.size))
        for i, c in enumerate(self.curves.curves):
            if order == 0:
                out[i] = c(r) - self.dressing[i] * self.omega
            else:
                out[i] = c.derivative(r, order)
        return out

    def coupling_operator(self, r, order=0):
        """mu_ij/2 for photon-coupled pairs; multiply by a field amplitude to get W_ij."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        n = self.curves.n_states
        out = np.zeros((n, n, r.size))
        for (i, j), mu in self.curves.dipoles.items():
            if self.photon_coupled(i, j):
                val = mu(r) if order == 0 else mu.derivative(r, order)
                out[i, j] = out[j, i] = 0.5 * val
        return out

    def matrix(self, r, amplitude=None, order=0):
        """W(R) (or its derivative), shape (n, n, len(r)); amplitude defaults to E0."""
        amp = self.amplitude if amplitude is None else amplitude
        r = np.atleast_1d(np.asarray(r, dtype=float))
        w = amp * self.coupling_operator(r, order)
        d = self.diagonal(r, order)
        idx = np.arange(self.curves.n_states)
        w[idx, idx] += d
        return w

    def diabats(self):
        """The diagonal W_ii as curve objects."""
        return tuple(c if n == 0 else Shifted(c, -n * self.omega) for c, n in zip(self.curves.curves, self.dressing))

    def with_amplitude(self, amplitude):
        return DressedSet(self.curves, self.omega, amplitude, self.dressing)

    def with_omega(self, omega):
        return DressedSet(self.curves, omega, self.amplitude, self.dressing)


def dress(curves: CurveSet, omega: float, amplitude: float, dressing: Sequence[int] | None = None) -> DressedSet:
    """Shift each curve by n_i photons and couple photon-adjacent curves by mu E0 / 2.

    The default dressing leaves the ground curve unshifted and lowers every
    other curve by one photon.
    """
    if omega <= 0:
        raise ValueError(f"omega must be positive, got {omega}")
    if amplitude < 0:
        raise ValueError(f"field amplitude must be non-negative, got {amplitude}")
    if dressing is None:
        dressing = [0 if i == curves.ground_index else 1 for i in range(curves.n_states)]
    dressing = tuple(int(n) for n in dressing)
    if len(dressing) != curves.n_states:
        raise ValueError(f"dressing has {len(dressing)} entries for {curves.n_states} curves")
    return DressedSet(curves, float(omega), float(amplitude), dressing)


# --------------------------------------------------------------------------
# adiabatic representation
# --------------------------------------------------------------------------


def _fix_signs(vecs):
    # largest-magnitude component of each column made positive
    idx = np.argmax(np.abs(vecs), axis=-2)
    comp = np.take_along_axis(vecs, idx[..., None, :], axis=-2)
    return vecs * np.where(comp < 0, -1.0, 1.0)


def adiabatize(w: DressedSet, r, amplitude=None):
    """Adiabatic energies (ascending) and orthogonal transformation at R.

    Scalar R returns shapes (n,) and (n, n); array R returns (m, n) and
    (m, n, n). Columns of the transformation are the adiabatic states.
    """
    scalar = np.ndim(r) == 0
    mats = np.moveaxis(w.matrix(r, amplitude), -1, 0)
    vals, vecs = np.linalg.eigh(mats)
    vecs = _fix_signs(vecs)
    if scalar:
        return vals[0], vecs[0]
    return vals, vecs


def adiabatic_derivatives(w: DressedSet, r, amplitude=None):
    """Adiabatic energies with first and second R-derivatives, each shape (m, n).

    Hellmann-Feynman for the gradient and second-order perturbation theory for
    the curvature. Degenerate points give infinite curvature, which only
    happens for vanishing coupling exactly at a crossing.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    vals, vecs = adiabatize(w, r, amplitude)
    d1 = np.moveaxis(w.matrix(r, amplitude, order=1), -1, 0)
    d2 = np.moveaxis(w.matrix(r, amplitude, order=2), -1, 0)
    g1 = np.einsum("mki,mkl,mlj->mij", vecs, d1, vecs)
    g2 = np.einsum("mki,mkl,mlj->mij", vecs, d2, vecs)
    grad = np.einsum("mii->mi", g1)
    gap = vals[:, :, None] - vals[:, None, :]
    n = vals.shape[1]
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(off, g1**2 / np.where(off, gap, 1.0), 0.0)
    curv = np.einsum("mii->mi", g2) + 2.0 * terms.sum(axis=2)
    return vals, grad, curv


# --------------------------------------------------------------------------
# crossings
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossingPoint:
    r_x: float
    pair: tuple
    e_x: float
    slopes: tuple
    coupling: float

    @property
    def delta_slope(self):
        return abs(self.slopes[0] - self.slopes[1])


def find_crossings(w: DressedSet, domain=None, tol=1e-10, pairs=None, n_scan=4001) -> list[CrossingPoint]:
    """Locate diabatic crossings W_ii = W_jj by scanning for sign changes and bisecting.

    By default only photon-coupled pairs are examined.
    """
    lo, hi = domain if domain is not None else w.curves.domain
    cdom = w.curves.domain
    if lo < cdom[0] - 1e-12 or hi > cdom[1] + 1e-12:
        raise ValueError(f"scan domain {(lo, hi)} outside curve domain {cdom}")
    n = w.curves.n_states
    if pairs is None:
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if w.photon_coupled(i, j)]
    grid = np.linspace(lo, hi, n_scan)
    diag = w.diagonal(grid)
    curves = w.curves.curves
    found = []

    def delta(i, j, x):
        return float(curves[i](x) - w.dressing[i] * w.omega - (curves[j](x) - w.dressing[j] * w.omega))

    for i, j in pairs:
        d = diag[i] - diag[j]
        s = np.sign(d)
        for k in np.nonzero(s[:-1] * s[1:] <= 0)[0]:
            if s[k] == 0 and k > 0:
                continue  # exact zero already counted as the right end of the previous bracket
            a, b = grid[k], grid[k + 1]
            fa = d[k]
            if fa == 0.0:
                x = a
            else:
                for _ in range(200):
                    x = 0.5 * (a + b)
                    fx = delta(i, j, x)
                    if abs(fx) < tol or b - a < 1e-15:
                        break
                    if np.sign(fx) == np.sign(fa):
                        a, fa = x, fx
                    else:
                        b = x
            h = 1e-5
            fi = float((curves[i](x + h) - curves[i](x - h)) / (2 * h))
            fj = float((curves[j](x + h) - curves[j](x - h)) / (2 * h))
            if fi == fj:
                continue
            e_x = float(curves[i](x)) - w.dressing[i] * w.omega
            v12 = float(w.matrix(x)[i, j, 0])
            found.append(CrossingPoint(float(x), (i, j), e_x, (fi, fj), v12))
    found.sort(key=lambda c: (c.pair, c.r_x))
    return found
