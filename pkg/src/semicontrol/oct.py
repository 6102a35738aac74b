"""Zhu-Botina-Rabitz optimal control on a single surface.

The control Hamiltonian is H = T + V(R) - mu(R) eps(t). One sweep
(`zbr_iterate`) propagates the Lagrange state chi backward from the target
under the input field, then propagates phi forward from the initial state
while setting the field from the current pair of states,

    eps(t) = -(1/alpha) Im[ <phi|chi> <chi|mu|phi> ],

and using that value for phi's next field interval. With chi(T) = phi_T
the functional J = |<phi_T|phi(T)>|^2 - alpha * integral(eps^2) obeys
J_new - J_old = alpha * integral((eps_new - eps_old)^2) >= 0 up to
time-discretization error.

The field lives on a uniform grid t_n = n * dt_field; within a sweep it is
piecewise constant, eps_n acting on [t_n, t_n+1).

Two interchangeable backends provide the states:
  QuantumBackend        split-operator wavefunctions on a grid.
  SemiclassicalBackend  Herman-Kluk ensembles; overlaps cost N_phi * N_chi
                        coherent-state pairs per field point.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import hk
from .fields import TabulatedField
from .quantum_grid import Grid, potential_propagator


@dataclass
class ControlProblem:
    potential: object  # Curve
    dipole: object  # Curve
    mass: float
    initial: hk.GaussianState
    target: hk.GaussianState
    horizon: float
    alpha: float
    backend: str = "quantum"
    field_dt: float = 0.25
    grid: Grid | None = None
    prop_dt: float | None = None  # propagator step; defaults to field_dt
    hk_params: hk.HKParams = field(default_factory=hk.HKParams)
    hk_domain: tuple = (-np.inf, np.inf)

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        if self.backend not in ("quantum", "semiclassical"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.backend == "quantum" and self.grid is None:
            raise ValueError("the quantum backend needs a grid")
        n = max(1, int(round(self.horizon / self.field_dt)))
        self.n_field = n
        self.dt_field = self.horizon / n

    @property
    def times(self):
        return np.arange(self.n_field) * self.dt_field

    @property
    def substeps(self):
        h = self.dt_field if self.prop_dt is None else self.prop_dt
        return max(1, int(math.ceil(self.dt_field / h - 1e-9)))

    def make_backend(self):
        return QuantumBackend(self) if self.backend == "quantum" else SemiclassicalBackend(self)


class CostCounter(hk.CostCounter):
    pass


# --------------------------------------------------------------------------
# backends
# --------------------------------------------------------------------------


class QuantumBackend:
    name = "quantum"

    def __init__(self, problem: ControlProblem):
        self.problem = problem
        g = problem.grid
        self.grid = g
        self.x = g.x
        self.v = problem.potential(self.x)
        self.mu = problem.dipole(self.x)
        self.h = problem.dt_field / problem.substeps
        self._kin = {}
        self.counter = hk.CostCounter()

    def _normalized(self, state):
        psi = state(self.x).astype(complex)
        return psi / math.sqrt(np.sum(np.abs(psi) ** 2) * self.grid.dx)

    def initial(self):
        return self._normalized(self.problem.initial)

    def target(self):
        return self._normalized(self.problem.target)

    def copy(self, psi):
        return psi.copy()

    def advance(self, psi, eps, direction=1):
        """Propagate over one field interval under constant eps (direction -1: backward)."""
        h = direction * self.h
        kin = self._kin.get(h)
        if kin is None:
            kin = self._kin[h] = np.exp(-0.5j * h * self.grid.k**2 / self.grid.mass)
        u = np.exp(-0.5j * h * (self.v - self.mu * eps))
        for _ in range(self.problem.substeps):
            psi = u * np.fft.ifft(kin * np.fft.fft(psi * u))
        return psi

    def overlaps(self, phi, chi):
        dx = self.grid.dx
        return complex(np.vdot(phi, chi) * dx), complex(np.vdot(chi, self.mu * phi) * dx)

    def target_overlap(self, phi, target):
        return complex(np.vdot(target, phi) * self.grid.dx)


class SemiclassicalBackend:
    name = "semiclassical"

    def __init__(self, problem: ControlProblem):
        self.problem = problem
        self.counter = hk.CostCounter()
        self.h = problem.dt_field / problem.substeps

    def _sample(self, state, seed_offset):
        pr = self.problem.hk_params
        params = hk.HKParams(gamma=pr.gamma if pr.gamma is not None else self.problem.initial.gamma,
                             n_traj=pr.n_traj, seed=pr.seed + seed_offset, sampling=pr.sampling,
                             box_sigmas=pr.box_sigmas, husimi_power=pr.husimi_power)
        return hk.sample_initial(state, params, self.problem.mass)

    def initial(self):
        return self._sample(self.problem.initial, 0)

    def target(self):
        ens = self._sample(self.problem.target, 1)
        ens.t = self.problem.horizon
        return ens

    def copy(self, ens):
        return ens.copy()

    def advance(self, ens, eps, direction=1):
        p = self.problem
        pes = hk.SurfacePES(p.potential, p.dipole, float(eps), p.hk_domain)
        t0 = ens.t
        h = direction * self.h
        ens._force_cache = None  # cached forces belong to the previous field value
        for k in range(1, p.substeps + 1):
            hk.step_ensemble(ens, pes, h, t_end=t0 + k * h)
        return ens

    def overlaps(self, phi, chi):
        return hk.semiclassical_overlaps(phi, chi, self.problem.dipole, self.counter)

    def target_overlap(self, phi, target_state: hk.GaussianState):
        self.counter.add(len(phi))
        return hk.project(phi, target_state)


def _target_for_projection(backend, problem):
    return backend.target() if backend.name == "quantum" else problem.target


# --------------------------------------------------------------------------
# iterations
# --------------------------------------------------------------------------


def field_value(overlap_pc, overlap_mu, alpha):
    """-(1/alpha) Im[<phi|chi><chi|mu|phi>]."""
    return -(overlap_pc * overlap_mu).imag / alpha


@dataclass
class OCTIterate:
    times: np.ndarray
    field: np.ndarray  # eps_n on [t_n, t_n+1)
    fidelity: float
    fluence: float
    alpha: float
    pair_cost: int
    overlap_curve: np.ndarray = None  # |<phi_T|phi(t_n)>|^2 at t_0..t_N
    phi_states: list = None
    chi_states: list = None

    @property
    def J(self):
        return self.fidelity - self.alpha * self.fluence

    def as_field(self) -> TabulatedField:
        dt = self.times[1] - self.times[0] if self.times.size > 1 else 1.0
        return PiecewiseField(self.times, self.field, dt)


class PiecewiseField(TabulatedField):
    """Field samples eps_n held constant on [t_n, t_n + dt)."""

    def __init__(self, times, values, dt):
        super().__init__(np.append(times, times[-1] + dt), np.append(values, values[-1]))
        self.dt = float(dt)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        n = np.floor((t - self.times[0]) / self.dt + 1e-9).astype(int)
        inside = (n >= 0) & (n < self.values.size - 1)
        out = np.where(inside, self.values[np.clip(n, 0, self.values.size - 2)], 0.0)
        return out if out.ndim else float(out)

    envelope = __call__

    def fluence(self):
        return float(np.sum(self.values[:-1] ** 2) * self.dt)


def fluence(values, dt):
    return float(np.sum(np.asarray(values) ** 2) * dt)


def forward(problem: ControlProblem, eps, backend=None, record=False):
    """Propagate the initial state under a given field; returns (fidelity, overlap curve, backend)."""
    b = backend or problem.make_backend()
    phi = b.initial()
    tgt = _target_for_projection(b, problem)
    curve = []
    for n in range(problem.n_field):
        if record:
            curve.append(abs(b.target_overlap(phi, tgt)) ** 2)
        phi = b.advance(phi, eps[n])
    fid = abs(b.target_overlap(phi, tgt)) ** 2
    curve.append(fid)
    return fid, np.array(curve), b


def zbr_iterate(problem: ControlProblem, eps_in, backend=None, keep_states=False) -> OCTIterate:
    """One ZBR sweep starting from the tabulated field eps_in (length n_field)."""
    eps_in = np.asarray(eps_in, dtype=float)
    if eps_in.shape != (problem.n_field,):
        raise ValueError(f"field must have {problem.n_field} samples, got {eps_in.shape}")
    b = backend or problem.make_backend()
    n_f = problem.n_field
    # backward sweep: chi(T) = phi_T under eps_in
    chi = b.target()
    chis = [None] * (n_f + 1)
    chis[n_f] = b.copy(chi)
    for n in range(n_f - 1, -1, -1):
        chi = b.advance(chi, eps_in[n], direction=-1)
        chis[n] = b.copy(chi)
    # forward sweep with immediate feedback
    phi = b.initial()
    tgt = _target_for_projection(b, problem)
    eps = np.empty(n_f)
    curve = np.empty(n_f + 1)
    phis = [] if keep_states else None
    for n in range(n_f):
        curve[n] = abs(b.target_overlap(phi, tgt)) ** 2
        if keep_states:
            phis.append(b.copy(phi))
        a, m = b.overlaps(phi, chis[n])
        e = field_value(a, m, problem.alpha)
        if not math.isfinite(e):
            raise FloatingPointError(f"non-finite field value at t = {problem.times[n]:.6g}")
        eps[n] = e
        phi = b.advance(phi, e)
    fid = abs(b.target_overlap(phi, tgt)) ** 2
    curve[n_f] = fid
    if keep_states:
        phis.append(b.copy(phi))
    return OCTIterate(problem.times, eps, fid, fluence(eps, problem.dt_field), problem.alpha, b.counter.pairs,
                      curve, phis, chis if keep_states else None)


def replay_field(problem: ControlProblem, it: OCTIterate, backend=None):
    """Recompute the field from stored phi(t_n), chi(t_n)."""
    if it.phi_states is None:
        raise ValueError("iterate was produced without keep_states=True")
    b = backend or problem.make_backend()
    return np.array([field_value(*b.overlaps(it.phi_states[n], it.chi_states[n]), problem.alpha)
                     for n in range(problem.n_field)])


def evaluate(problem: ControlProblem, eps, backend=None):
    """OCTIterate for a fixed field (no update)."""
    eps = np.asarray(eps, dtype=float)
    fid, curve, b = forward(problem, eps, backend, record=True)
    return OCTIterate(problem.times, eps.copy(), fid, fluence(eps, problem.dt_field), problem.alpha,
                      b.counter.pairs, curve)


@dataclass
class OCTHistory:
    iterates: list
    flags: list  # (iteration, drop) where J decreased beyond tolerance

    @property
    def J(self):
        return np.array([it.J for it in self.iterates])

    @property
    def monotone(self):
        return not self.flags

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["iter", "J", "fidelity", "fluence", "pair_cost"])
            for k, it in enumerate(self.iterates):
                wr.writerow([k, f"{it.J:.12e}", f"{it.fidelity:.12e}", f"{it.fluence:.12e}", it.pair_cost])


def guess_field(problem: ControlProblem, amplitude, omega=None):
    """Weak CW guess at the fundamental vibrational gap (or a given omega)."""
    if omega is None:
        omega = vibrational_gap(problem)
    return amplitude * np.cos(omega * (problem.times + 0.5 * problem.dt_field))


def vibrational_gap(problem: ControlProblem):
    from .quantum_grid import fgh_eigenstates

    g = problem.grid
    if g is None:
        lo = problem.initial.center - 12 * problem.initial.width
        hi = problem.target.center + 12 * problem.target.width
        g = Grid(max(lo, 0.05), hi, 256, problem.mass)
    (e0, _), (e1, _) = fgh_eigenstates(g, problem.potential, 2, threshold=np.inf)
    return e1 - e0


def run_oct(problem: ControlProblem, eps_guess, max_iters=10, tol=0.0, mono_tol=1e-9):
    """Iterate ZBR sweeps; history[0] evaluates the guess field."""
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    hist = [evaluate(problem, eps_guess)]
    flags = []
    eps = np.asarray(eps_guess, dtype=float)
    for k in range(1, max_iters + 1):
        it = zbr_iterate(problem, eps)
        drop = hist[-1].J - it.J
        if drop > mono_tol:
            flags.append((k, drop))
            warnings.warn(f"ZBR functional decreased by {drop:.3e} at iteration {k}; "
                          "refine the field grid or propagator step", RuntimeWarning, stacklevel=2)
        hist.append(it)
        eps = it.field
        if abs(it.J - hist[-2].J) < tol:
            break
    return OCTHistory(hist, flags)


def save_field(path, times, values):
    np.savetxt(path, np.column_stack([times, values]), fmt="%.17g", header="t_au eps_au")


def load_field(path):
    data = np.loadtxt(path, ndmin=2)
    return data[:, 0], data[:, 1]
