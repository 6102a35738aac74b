"""Exact multi-surface wavepacket propagation on a uniform 1D grid.

This is the reference engine the semiclassical code is validated against:
Strang split-operator stepping with an exactly exponentiated local potential
matrix, Fourier-grid bound states, absorbing boundaries, probability flux
and overlap diagnostics.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.linalg import eigh

from .fields import LaserField
from .potentials import Curve, CurveSet, DressedSet


class PropagationError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# grid and wavefunction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    r_min: float
    r_max: float
    n: int
    mass: float

    def __post_init__(self):
        if self.n < 64 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two >= 64, got {self.n}")
        if not self.r_max > self.r_min:
            raise ValueError("grid needs r_max > r_min")
        if self.mass <= 0:
            raise ValueError("mass must be positive")

    @property
    def dx(self):
        return (self.r_max - self.r_min) / self.n

    @property
    def x(self):
        return self.r_min + self.dx * np.arange(self.n)

    @property
    def k(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.n, self.dx)

    def index(self, r):
        """Nearest grid index to r (raises outside the grid)."""
        if not self.r_min <= r <= self.r_max:
            raise ValueError(f"R = {r} outside grid [{self.r_min}, {self.r_max}]")
        return int(round((r - self.r_min) / self.dx))


class Wavefunction:
    """Complex amplitudes psi_i(R) for each surface on a shared grid."""

    def __init__(self, grid: Grid, psi, t=0.0):
        psi = np.array(psi, dtype=complex, copy=True)
        if psi.ndim == 1:
            psi = psi[None, :]
        if psi.shape[1] != grid.n:
            raise ValueError(f"amplitude length {psi.shape[1]} != grid size {grid.n}")
        self.grid = grid
        self.psi = psi
        self.t = float(t)

    @property
    def n_surfaces(self):
        return self.psi.shape[0]

    def populations(self):
        return np.sum(np.abs(self.psi) ** 2, axis=1) * self.grid.dx

    def norm(self):
        return float(self.populations().sum())

    def normalized(self):
        return Wavefunction(self.grid, self.psi / math.sqrt(self.norm()), self.t)

    def copy(self):
        return Wavefunction(self.grid, self.psi, self.t)

    @classmethod
    def gaussian(cls, grid, center, width, momentum=0.0, surface=0, n_surfaces=1, t=0.0):
        """Normalized Gaussian exp(-(R - R0)^2/(4 width^2) + i p R); `width` is the std of |psi|^2."""
        x = grid.x
        g = np.exp(-((x - center) ** 2) / (4.0 * width**2) + 1j * momentum * (x - center))
        g /= math.sqrt(np.sum(np.abs(g) ** 2) * grid.dx)
        psi = np.zeros((n_surfaces, grid.n), dtype=complex)
        psi[surface] = g
        return cls(grid, psi, t)

    @classmethod
    def on_surface(cls, grid, amplitude, surface, n_surfaces, t=0.0):
        psi = np.zeros((n_surfaces, grid.n), dtype=complex)
        psi[surface] = amplitude
        return cls(grid, psi, t)


def overlap(a: Wavefunction, b: Wavefunction) -> complex:
    """<a|b> summed over surfaces, plain Riemann sum with weight dR."""
    if a.grid != b.grid:
        raise ValueError("wavefunctions live on different grids")
    if a.psi.shape != b.psi.shape:
        raise ValueError("wavefunctions have different surface counts")
    return complex(np.vdot(a.psi, b.psi) * a.grid.dx)


def expectation(psi: Wavefunction, operator) -> complex:
    """<psi|O|psi> for a multiplicative operator given on the grid (shape (n,) or (ns, n))."""
    op = np.broadcast_to(np.asarray(operator), psi.psi.shape)
    return complex(np.sum(np.conj(psi.psi) * op * psi.psi) * psi.grid.dx)


# --------------------------------------------------------------------------
# Hamiltonians
# --------------------------------------------------------------------------


class GridHamiltonian:
    """W(R, t) = base(R) + drive(t) * coupling(R) on a grid; kinetic energy separate.

    `base` and `coupling` have shape (ns, ns, n) and are real symmetric at
    every grid point. `drive` is a scalar function of time or None.
    """

    def __init__(self, grid: Grid, base, coupling=None, drive=None, labels=None):
        base = np.asarray(base, dtype=float)
        if base.ndim == 1:
            base = base[None, None, :]
        if coupling is not None:
            coupling = np.asarray(coupling, dtype=float).reshape(base.shape)
            if drive is None:
                base, coupling = base + coupling, None
        self.grid = grid
        self.base = base
        self.coupling = coupling
        self.drive = drive if coupling is not None else None
        self.labels = labels or tuple(f"state{i}" for i in range(base.shape[0]))

    @property
    def n_surfaces(self):
        return self.base.shape[0]

    @property
    def static(self):
        return self.coupling is None

    def matrix(self, t):
        if self.static:
            return self.base
        return self.base + float(self.drive(t)) * self.coupling

    @classmethod
    def rwa(cls, dressed: DressedSet, grid: Grid, envelope=None):
        """Dressed-frame matrix; the coupling follows `envelope(t)` or stays at E0."""
        x = grid.x
        base = dressed.matrix(x, amplitude=0.0)
        coup = dressed.coupling_operator(x)
        if envelope is None:
            return cls(grid, base + dressed.amplitude * coup, labels=dressed.curves.labels)
        return cls(grid, base, coup, envelope, labels=dressed.curves.labels)

    @classmethod
    def explicit(cls, curves: CurveSet, grid: Grid, field: LaserField | None):
        """Lab-frame matrix diag(V_i) - mu_ij eps(t)."""
        x = grid.x
        base = curves.potential_matrix(x)
        if field is None:
            return cls(grid, base, labels=curves.labels)
        return cls(grid, base, -curves.dipole_matrix(x), field, labels=curves.labels)

    @classmethod
    def single(cls, grid: Grid, potential: Curve, dipole: Curve | None = None, field=None):
        """One surface with a control term -mu(R) eps(t)."""
        x = grid.x
        base = potential(x)[None, None, :]
        if dipole is None or field is None:
            return cls(grid, base)
        return cls(grid, base, -dipole(x)[None, None, :], field)


def potential_propagator(w, tau):
    """exp(-i W tau) pointwise for W of shape (ns, ns, n); analytic for ns <= 2."""
    ns = w.shape[0]
    if ns == 1:
        return np.exp(-1j * tau * w)
    if ns == 2:
        a, b, c = w[0, 0], w[1, 1], w[0, 1]
        mean = 0.5 * (a + b)
        d = 0.5 * (a - b)
        r = np.sqrt(d * d + c * c)
        cs = np.cos(r * tau)
        sn = np.where(r > 0, np.sin(r * tau) / np.where(r > 0, r, 1.0), tau)
        ph = np.exp(-1j * mean * tau)
        u = np.empty((2, 2, w.shape[2]), dtype=complex)
        u[0, 0] = ph * (cs - 1j * sn * d)
        u[1, 1] = ph * (cs + 1j * sn * d)
        u[0, 1] = u[1, 0] = ph * (-1j * sn * c)
        return u
    vals, vecs = np.linalg.eigh(np.moveaxis(w, -1, 0))
    u = np.einsum("nij,nj,nkj->nik", vecs, np.exp(-1j * tau * vals), vecs)
    return np.moveaxis(u, 0, -1)


def _apply(u, psi):
    if u.shape[0] == 1:
        return u[0, 0] * psi
    return np.einsum("ijn,jn->in", u, psi)


def absorber(grid: Grid, start: float, strength: float = 0.05, order: int = 3):
    """Absorbing mask eta ((R - start)/(R_max - start))^order for R > start.

    The optical potential is -i times this mask.
    """
    if not grid.r_min < start < grid.r_max:
        raise ValueError(f"absorber start {start} not inside grid")
    x = grid.x
    s = np.clip((x - start) / (grid.r_max - start), 0.0, None)
    return strength * s**order


def split_step(psi: Wavefunction, w, dt, gamma=None):
    """One Strang step exp(-iW dt/2) exp(-iT dt) exp(-iW dt/2) (returns a new wavefunction)."""
    grid = psi.grid
    kin = np.exp(-0.5j * dt * grid.k**2 / grid.mass)
    uv = potential_propagator(np.asarray(w), 0.5 * dt)
    out = _apply(uv, psi.psi)
    if gamma is not None:
        out = out * np.exp(-0.5 * dt * gamma)
    out = np.fft.ifft(kin * np.fft.fft(out, axis=1), axis=1)
    if gamma is not None:
        out = out * np.exp(-0.5 * dt * gamma)
    out = _apply(uv, out)
    return Wavefunction(grid, out, psi.t + dt)


def kinetic_energy(psi: Wavefunction) -> float:
    g = psi.grid
    f = np.fft.fft(psi.psi, axis=1)
    return float(np.sum(np.abs(f) ** 2 * (0.5 * g.k**2 / g.mass)) * g.dx / g.n)


def energy(psi: Wavefunction, w) -> float:
    """<psi|T + W|psi> with W of shape (ns, ns, n)."""
    pot = np.einsum("in,ijn,jn->", np.conj(psi.psi), np.asarray(w), psi.psi).real * psi.grid.dx
    return kinetic_energy(psi) + float(pot)


# --------------------------------------------------------------------------
# observers and time series
# --------------------------------------------------------------------------


class TimeSeries:
    """Columns sampled along a propagation; column 't' holds times (a.u.)."""

    def __init__(self, names):
        self.names = ["t"] + list(names)
        self._rows = []

    def append(self, row):
        self._rows.append(tuple(row))

    def __getitem__(self, name):
        i = self.names.index(name)
        return np.array([r[i] for r in self._rows])

    def __len__(self):
        return len(self._rows)

    def to_csv(self, path, time_scale=1.0, time_name="t"):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([time_name] + self.names[1:])
            for r in self._rows:
                w.writerow([_fmt(r[0] * time_scale)] + [_fmt(v) for v in r[1:]])


def _fmt(v):
    return f"{float(v):.10e}"


class Observer:
    names: tuple = ()

    def __call__(self, psi: Wavefunction, w) -> Sequence[float]:
        raise NotImplementedError


class NormObserver(Observer):
    def __init__(self, labels):
        self.names = ("norm",) + tuple(f"pop_{l}" for l in labels)

    def __call__(self, psi, w):
        p = psi.populations()
        return (float(p.sum()),) + tuple(float(v) for v in p)


class EnergyObserver(Observer):
    names = ("energy",)

    def __call__(self, psi, w):
        return (energy(psi, w),)


class OverlapObserver(Observer):
    """|<target|psi(t)>|^2."""

    def __init__(self, target: Wavefunction, name="overlap"):
        self.target = target
        self.names = (name,)

    def __call__(self, psi, w):
        return (abs(overlap(self.target, psi)) ** 2,)


class FluxObserver(Observer):
    """Instantaneous current j_i(R_d) and norm left of R_d."""

    def __init__(self, grid: Grid, r_d: float, channels: Sequence[int], labels: Sequence[str]):
        grid.index(r_d)
        self.grid = grid
        self.r_d = r_d
        self.channels = tuple(channels)
        self.names = tuple(f"j_{labels[c]}" for c in self.channels) + ("inside",)
        # cell i covers [x_i - dx/2, x_i + dx/2]; the cell holding r_d counts fractionally
        self._inside = np.clip((r_d - grid.x) / grid.dx + 0.5, 0.0, 1.0)

    def __call__(self, psi, w):
        js = tuple(current_at(psi, self.r_d, c) for c in self.channels)
        inside = float(np.sum(np.abs(psi.psi) ** 2 * self._inside) * self.grid.dx)
        return js + (inside,)


class SnapshotObserver(Observer):
    """Stores full copies of psi at each sample (use a coarse stride)."""

    names = ()

    def __init__(self):
        self.snapshots = []

    def __call__(self, psi, w):
        self.snapshots.append(psi.copy())
        return ()


def write_snapshot(psi: Wavefunction, path_prefix, labels=None):
    """One 3-column text file (R, Re psi_i, Im psi_i) per surface."""
    labels = labels or [f"state{i}" for i in range(psi.n_surfaces)]
    paths = []
    for i, lab in enumerate(labels):
        p = f"{path_prefix}_{lab}.txt"
        np.savetxt(p, np.column_stack([psi.grid.x, psi.psi[i].real, psi.psi[i].imag]), fmt="%.10e",
                   header=f"t_au={psi.t:.6f} R_bohr Re Im")
        paths.append(p)
    return paths


# --------------------------------------------------------------------------
# propagation driver
# --------------------------------------------------------------------------


@dataclass
class PropagationResult:
    series: TimeSeries
    final: Wavefunction
    absorbed: float


def build_hamiltonian(system, grid: Grid, field: LaserField | None = None) -> GridHamiltonian:
    if isinstance(system, GridHamiltonian):
        return system
    if isinstance(system, DressedSet):
        return GridHamiltonian.rwa(system, grid, None if field is None else field.envelope)
    if isinstance(system, CurveSet):
        return GridHamiltonian.explicit(system, grid, field)
    raise TypeError(f"cannot build a grid Hamiltonian from {type(system).__name__}")


def propagate(psi0: Wavefunction, system, field: LaserField | None, t_final: float, dt: float,
              observers: Iterable[Observer] = (), stride: int = 1, gamma=None) -> PropagationResult:
    """Propagate psi0 to t_final and sample observers every `stride` steps.

    `system` is a CurveSet (lab frame with explicit field), a DressedSet (RWA
    frame; the field's envelope modulates the coupling) or a GridHamiltonian.
    `gamma` is an absorber mask from :func:`absorber`.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = psi0.grid
    ham = build_hamiltonian(system, grid, field)
    if ham.n_surfaces != psi0.n_surfaces:
        raise ValueError("wavefunction and Hamiltonian surface counts differ")
    for part in (ham.base, ham.coupling):
        if part is not None and not np.all(np.isfinite(part)):
            i, j, n = np.argwhere(~np.isfinite(part))[0]
            raise PropagationError(f"non-finite potential matrix element ({i}, {j}) at grid index {n}")
    observers = list(observers)
    series = TimeSeries([n for o in observers for n in o.names])
    nsteps = int(round((t_final - psi0.t) / dt))
    kin = np.exp(-0.5j * dt * grid.k**2 / grid.mass)
    damp = None if gamma is None else np.exp(-0.5 * dt * np.asarray(gamma))
    psi = psi0.psi.copy()
    t0 = psi0.t
    absorbed = 0.0
    uv_static = potential_propagator(ham.matrix(t0), 0.5 * dt) if ham.static else None
    drive_last = None

    def sample(step, t):
        wf = Wavefunction(grid, psi, t)
        w = ham.matrix(t)
        row = [t]
        for o in observers:
            row.extend(o(wf, w))
        series.append(row)

    sample(0, t0)
    for step in range(1, nsteps + 1):
        t = t0 + (step - 1) * dt
        if uv_static is not None:
            uv = uv_static
        else:
            d = float(ham.drive(t + 0.5 * dt))
            if d != drive_last:
                # constant or piecewise-constant drives reuse the last propagator
                uv = potential_propagator(ham.base + d * ham.coupling, 0.5 * dt)
                drive_last = d
        psi = _apply(uv, psi)
        if damp is not None:
            before = np.sum(np.abs(psi) ** 2)
            psi = psi * damp
            absorbed += (before - np.sum(np.abs(psi) ** 2)) * grid.dx
        psi = np.fft.ifft(kin * np.fft.fft(psi, axis=1), axis=1)
        if damp is not None:
            before = np.sum(np.abs(psi) ** 2)
            psi = psi * damp
            absorbed += (before - np.sum(np.abs(psi) ** 2)) * grid.dx
        psi = _apply(uv, psi)
        if step % stride == 0 or step == nsteps:
            if not np.all(np.isfinite(psi)):
                bad = np.argwhere(~np.isfinite(psi))[0]
                raise PropagationError(
                    f"non-finite amplitude at step {step} (t = {t + dt:.6g} au), "
                    f"surface {bad[0]}, grid index {bad[1]}"
                )
            sample(step, t0 + step * dt)
    final = Wavefunction(grid, psi, t0 + nsteps * dt)
    return PropagationResult(series, final, float(absorbed))


# --------------------------------------------------------------------------
# bound states
# --------------------------------------------------------------------------


def fourier_kinetic_matrix(grid: Grid):
    """Dense kinetic matrix consistent with the FFT kinetic propagator."""
    n = grid.n
    t2 = 0.5 * grid.k**2 / grid.mass
    f = np.fft.fft(np.eye(n), axis=0)
    return np.fft.ifft(t2[:, None] * f, axis=0).real


def fgh_eigenstates(grid: Grid, potential, count: int, threshold=None):
    """Lowest `count` Fourier-grid eigenpairs (E_v, phi_v), ascending.

    Eigenfunctions are real, normalized with weight dR, and positive at their
    leftmost antinode. Raises if a requested level lies at or above the
    dissociation threshold (default: V at the right grid edge).
    """
    x = grid.x
    v = potential(x) if callable(potential) else np.asarray(potential, dtype=float)
    h = fourier_kinetic_matrix(grid)
    h[np.diag_indices_from(h)] += v
    vals, vecs = eigh(h, subset_by_index=(0, count - 1))
    thr = v[-1] if threshold is None else threshold
    if vals[-1] >= thr:
        nb = int(np.sum(vals < thr))
        raise ValueError(f"requested {count} bound states but only {nb} lie below the threshold {thr:.6g}")
    out = []
    for e, c in zip(vals, vecs.T):
        phi = c / math.sqrt(grid.dx)
        out.append((float(e), _sign_fix(phi)))
    return out


def _sign_fix(phi):
    a = np.abs(phi)
    cut = 0.01 * a.max()
    peaks = np.nonzero((a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:]) & (a[1:-1] > cut))[0] + 1
    i = peaks[0] if peaks.size else int(np.argmax(a))
    return phi if phi[i] > 0 else -phi


# --------------------------------------------------------------------------
# flux
# --------------------------------------------------------------------------


def current_density(amp, dx, mass):
    """(1/m) Im[psi* dpsi/dR] with a 4th-order centered stencil (zero at the 2 edge points)."""
    d = np.zeros_like(amp)
    d[2:-2] = (-amp[4:] + 8 * amp[3:-1] - 8 * amp[1:-3] + amp[:-4]) / (12.0 * dx)
    return np.imag(np.conj(amp) * d) / mass


def current_at(psi: Wavefunction, r_d: float, channel: int) -> float:
    g = psi.grid
    pos = (r_d - g.r_min) / g.dx
    i = int(math.floor(pos))
    if i < 2 or i + 3 > g.n - 2:
        raise ValueError(f"dividing point {r_d} too close to the grid edge")
    amp = psi.psi[channel, i - 2:i + 4]
    j = current_density(amp, g.dx, g.mass)[2:4]
    f = pos - i
    return float((1 - f) * j[0] + f * j[1])


@dataclass
class FluxRecord:
    r_d: float
    channel: int
    t: np.ndarray
    j: np.ndarray
    J: np.ndarray

    @classmethod
    def from_current(cls, r_d, channel, t, j):
        t = np.asarray(t, dtype=float)
        j = np.asarray(j, dtype=float)
        return cls(r_d, channel, t, j, cumulative_trapezoid(j, t, initial=0.0))


def flux_probe(snapshots: Sequence[Wavefunction], r_d: float, channel: int) -> FluxRecord:
    """Instantaneous and time-integrated flux through R_d on one surface."""
    if not snapshots:
        raise ValueError("no wavefunctions given")
    g = snapshots[0].grid
    if not g.r_min < r_d < g.r_max:
        raise ValueError(f"dividing point {r_d} outside grid")
    t = [s.t for s in snapshots]
    j = [current_at(s, r_d, channel) for s in snapshots]
    return FluxRecord.from_current(r_d, channel, t, j)
