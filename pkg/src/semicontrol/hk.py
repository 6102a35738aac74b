"""Herman-Kluk initial value representation on a single surface.

Frozen Gaussians g(x; q, p) = (gamma/pi)^(1/4) exp(-gamma/2 (x-q)^2 + i p (x-q))
are launched from sampled phase-space points, carried along classical
trajectories together with the action and the monodromy matrix, and summed
back into a wavefunction::

    psi(x, t) = sum_j w_j R_j(t) exp(i S_j(t)) g(x; q_j(t), p_j(t))

The factor 1/(2 pi) of the coherent-state resolution of identity and the
initial overlaps <g_j|psi0> are folded into the weights w_j at sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .potentials import LinearDipole


class PrefactorBranchError(RuntimeError):
    """The prefactor phase jumped by pi/2 or more in one step: dt too large."""


@dataclass(frozen=True)
class GaussianState:
    """Normalized Gaussian wavepacket; `width` is the standard deviation of |psi|^2."""

    center: float
    width: float
    momentum: float = 0.0

    @property
    def gamma(self):
        return 1.0 / (2.0 * self.width**2)

    def __call__(self, x):
        return coherent_state(np.asarray(x, dtype=float), self.center, self.momentum, self.gamma)


@dataclass(frozen=True)
class HKParams:
    gamma: float | None = None  # None: matched to the initial packet, 1/(2 width^2)
    n_traj: int = 1000
    seed: int = 0
    sampling: str = "importance"
    box_sigmas: float = 5.0
    husimi_power: float = 0.5  # importance density ~ |<g|psi0>|^(2 kappa)

    def __post_init__(self):
        if self.gamma is not None and self.gamma <= 0:
            raise ValueError("coherent-state width parameter gamma must be positive")
        if self.n_traj < 1:
            raise ValueError("n_traj must be at least 1")
        if not 0 < self.husimi_power <= 1:
            raise ValueError("husimi_power must lie in (0, 1]")
        if self.sampling not in ("importance", "box"):
            raise ValueError(f"unknown sampling '{self.sampling}' (importance | box)")


def coherent_state(x, q, p, gamma):
    return (gamma / math.pi) ** 0.25 * np.exp(-0.5 * gamma * (x - q) ** 2 + 1j * p * (x - q))


def gaussian_overlap(q1, p1, g1, q2, p2, g2):
    """<g(q1, p1; g1) | g(q2, p2; g2)> in closed form (broadcasts)."""
    s = g1 + g2
    dq = q2 - q1
    dp = p2 - p1
    c = (g1 * q1 + g2 * q2) / s
    pref = (g1 * g2) ** 0.25 * np.sqrt(2.0 / s)
    expo = -g1 * g2 * dq * dq / (2.0 * s) - dp * dp / (2.0 * s) + 1j * (dp * c - p2 * q2 + p1 * q1)
    return pref * np.exp(expo)


class CostCounter:
    """Counts pairwise coherent-state integral evaluations."""

    def __init__(self):
        self.pairs = 0

    def add(self, n):
        self.pairs += int(n)


# --------------------------------------------------------------------------
# trajectory ensemble
# --------------------------------------------------------------------------


class Ensemble:
    """Vectorized set of HK trajectories sharing one time.

    Arrays: q, p, action, monodromy blocks mqq, mqp, mpq, mpp, prefactor
    (complex, phase-continuous) and complex weight. `escaped` marks
    trajectories that left the potential domain and now move freely.
    """

    def __init__(self, q, p, weight, gamma, mass, t=0.0):
        q = np.asarray(q, dtype=float).copy()
        n = q.size
        self.q = q
        self.p = np.asarray(p, dtype=float).copy()
        self.weight = np.asarray(weight, dtype=complex).copy()
        self.gamma = float(gamma)
        self.mass = float(mass)
        self.t = float(t)
        self.action = np.zeros(n)
        self.mqq = np.ones(n)
        self.mqp = np.zeros(n)
        self.mpq = np.zeros(n)
        self.mpp = np.ones(n)
        self.prefactor = np.ones(n, dtype=complex)
        self.escaped = np.zeros(n, dtype=bool)
        self._force_cache = None

    def __len__(self):
        return self.q.size

    def copy(self):
        e = type(self).__new__(type(self))
        e.__dict__.update({k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()})
        e._force_cache = None
        return e

    _arrays = ("q", "p", "weight", "action", "mqq", "mqp", "mpq", "mpp", "prefactor", "escaped")

    def subset(self, mask):
        e = self.copy()
        for k in self._arrays:
            setattr(e, k, getattr(self, k)[mask].copy())
        return e

    @property
    def det_monodromy(self):
        return self.mqq * self.mpp - self.mqp * self.mpq

    @property
    def amplitudes(self):
        """Complex coefficients w_j R_j exp(i S_j) multiplying each coherent state."""
        return self.weight * self.prefactor * np.exp(1j * self.action)

    def energy(self, pes, t=None):
        v, _, _ = pes(self.q, self.t if t is None else t)
        return 0.5 * self.p**2 / self.mass + v


def sample_initial(psi0: GaussianState, params: HKParams, mass: float) -> Ensemble:
    """Phase-space initial conditions for a Gaussian packet.

    importance: (q, p) drawn from a Gaussian density rho ~ |<g_qp|psi0>|^(2 kappa),
    weights <g|psi0> / (2pi rho N). kappa = 1 is the Husimi density itself,
    whose norm estimator has unbounded variance; the default kappa = 1/2
    keeps it finite. box: a regular n x n lattice covering
    `box_sigmas` Husimi standard deviations, weights <g|psi0> dq dp / 2pi.
    """
    gamma = psi0.gamma if params.gamma is None else params.gamma
    g0 = psi0.gamma
    var_q = (gamma + g0) / (2.0 * gamma * g0)
    var_p = (gamma + g0) / 2.0
    if params.sampling == "importance":
        kappa = params.husimi_power
        rng = np.random.default_rng(params.seed)
        z = rng.standard_normal((2, params.n_traj))
        sq = math.sqrt(var_q / kappa)
        sp = math.sqrt(var_p / kappa)
        q = psi0.center + sq * z[0]
        p = psi0.momentum + sp * z[1]
        ov = gaussian_overlap(q, p, gamma, psi0.center, psi0.momentum, g0)
        rho = np.exp(-0.5 * (z[0] ** 2 + z[1] ** 2)) / (2.0 * math.pi * sq * sp)
        w = ov / (2.0 * math.pi * rho * params.n_traj)
    else:
        side = max(1, int(round(math.sqrt(params.n_traj))))
        if side == 1:
            q = np.array([psi0.center])
            p = np.array([psi0.momentum])
            dqdp = 2.0 * math.pi
        else:
            h = params.box_sigmas
            uq = np.linspace(-h, h, side) * math.sqrt(var_q)
            up = np.linspace(-h, h, side) * math.sqrt(var_p)
            dqdp = (uq[1] - uq[0]) * (up[1] - up[0])
            qq, pp = np.meshgrid(psi0.center + uq, psi0.momentum + up, indexing="ij")
            q, p = qq.ravel(), pp.ravel()
        ov = gaussian_overlap(q, p, gamma, psi0.center, psi0.momentum, g0)
        w = ov * dqdp / (2.0 * math.pi)
    return Ensemble(q, p, w, gamma, mass)


# --------------------------------------------------------------------------
# potentials seen by trajectories
# --------------------------------------------------------------------------


class SurfacePES:
    """V(q) - mu(q) eps(t) with frozen free motion outside [r_min, r_max].

    Called as pes(q, t) -> (V, dV/dq, d2V/dq2). `field` may be a callable,
    a constant, or None.
    """

    def __init__(self, curve, dipole=None, field=None, domain=(-np.inf, np.inf)):
        self.curve = curve
        self.dipole = dipole
        self.field = field
        self.domain = domain

    def eps(self, t):
        if self.dipole is None or self.field is None:
            return 0.0
        return float(self.field(t)) if callable(self.field) else float(self.field)

    def __call__(self, q, t):
        lo, hi = self.domain
        qc = np.clip(q, lo, hi)
        inside = qc == q
        v = self.curve(qc)
        d1 = self.curve.derivative(qc, 1)
        d2 = self.curve.derivative(qc, 2)
        e = self.eps(t)
        if e != 0.0:
            v = v - e * self.dipole(qc)
            d1 = d1 - e * self.dipole.derivative(qc, 1)
            d2 = d2 - e * self.dipole.derivative(qc, 2)
        if not np.all(inside):
            d1 = np.where(inside, d1, 0.0)
            d2 = np.where(inside, d2, 0.0)
        return v, d1, d2


# --------------------------------------------------------------------------
# stepping
# --------------------------------------------------------------------------


def hk_prefactor_raw(ens: Ensemble):
    """Unbranched square-root argument 1/2 (Mqq + Mpp - i gamma Mqp + i Mpq / gamma)."""
    g = ens.gamma
    return 0.5 * (ens.mqq + ens.mpp - 1j * g * ens.mqp + 1j * ens.mpq / g)


def hk_prefactor(ens: Ensemble, previous=None):
    """Branch-continuous HK prefactor: the square-root sign is chosen nearest to `previous`."""
    r = np.sqrt(hk_prefactor_raw(ens))
    prev = ens.prefactor if previous is None else previous
    flip = np.real(r * np.conj(prev)) < 0
    r = np.where(flip, -r, r)
    jump = np.abs(np.angle(r * np.conj(prev)))
    if np.any(jump >= 0.5 * math.pi):
        raise PrefactorBranchError(
            f"HK prefactor phase jumped by {jump.max():.3f} rad at t = {ens.t:.6g}; reduce dt"
        )
    return r


def step_ensemble(ens: Ensemble, pes: Callable, dt: float, t_end=None):
    """One velocity-Verlet step for (q, p), the action and the monodromy matrix.

    The linearized map uses the same splitting, so det M = 1 to rounding.
    `pes(q, t)` returns (V, V', V''); forces at the step end are cached for
    the next call. Negative dt integrates backward in time.
    """
    m = ens.mass
    t0 = ens.t
    t1 = t0 + dt if t_end is None else t_end
    cache = ens._force_cache
    if cache is not None and cache[0] == t0:
        v0, d0, h0 = cache[1]
    else:
        v0, d0, h0 = pes(ens.q, t0)
    ph = ens.p - 0.5 * dt * d0
    q1 = ens.q + dt * ph / m
    # linearized half kick / drift
    mpq_h = ens.mpq - 0.5 * dt * h0 * ens.mqq
    mpp_h = ens.mpp - 0.5 * dt * h0 * ens.mqp
    mqq1 = ens.mqq + dt * mpq_h / m
    mqp1 = ens.mqp + dt * mpp_h / m
    v1, d1, h1 = pes(q1, t1)
    p1 = ph - 0.5 * dt * d1
    ens.mpq = mpq_h - 0.5 * dt * h1 * mqq1
    ens.mpp = mpp_h - 0.5 * dt * h1 * mqp1
    ens.mqq = mqq1
    ens.mqp = mqp1
    ens.action = ens.action + dt * (0.5 * ph * ph / m - 0.5 * (v0 + v1))
    ens.q = q1
    ens.p = p1
    ens.t = t1
    ens._force_cache = (t1, (v1, d1, h1))
    ens.prefactor = hk_prefactor(ens)
    return ens


def run(ens: Ensemble, pes: Callable, t_final: float, dt: float, callback=None, every=1):
    """Step `ens` to exactly t_final (either direction) with |step| <= dt; callback(ens) every `every` steps."""
    span = t_final - ens.t
    n = int(math.ceil(abs(span) / dt - 1e-9))
    h = span / n if n else dt
    t0 = ens.t
    if callback is not None:
        callback(ens)
    for k in range(1, n + 1):
        step_ensemble(ens, pes, h, t_end=t0 + k * h)
        if callback is not None and (k % every == 0 or k == n):
            callback(ens)
    return ens


def mark_escaped(ens: Ensemble, domain):
    lo, hi = domain
    ens.escaped |= (ens.q < lo) | (ens.q > hi)
    return int(ens.escaped.sum())


# --------------------------------------------------------------------------
# reconstruction and overlaps
# --------------------------------------------------------------------------


def reconstruct(ens: Ensemble, x, chunk=2048, cutoff=6.0):
    """Sum of coherent states on the grid x; Gaussians truncated beyond `cutoff` widths."""
    x = np.asarray(x, dtype=float)
    c = ens.amplitudes
    g = ens.gamma
    norm = (g / math.pi) ** 0.25
    reach = cutoff / math.sqrt(2.0 * g)
    out = np.zeros(x.size, dtype=complex)
    for s in range(0, len(ens), chunk):
        q = ens.q[s:s + chunk, None]
        p = ens.p[s:s + chunk, None]
        d = x[None, :] - q
        blk = np.exp(-0.5 * g * d * d + 1j * p * d)
        blk[np.abs(d) > reach] = 0.0
        out += c[s:s + chunk] @ blk
    return norm * out


def reconstruct_many(ensembles, x):
    """Reconstruct several ensembles required to share one time."""
    times = {round(e.t, 9) for e in ensembles}
    if len(times) > 1:
        raise ValueError(f"trajectory sets are at different times: {sorted(times)}")
    return [reconstruct(e, x) for e in ensembles]


def project(ens: Ensemble, target: GaussianState) -> complex:
    """<target|psi_sc> analytically, O(N)."""
    ov = gaussian_overlap(target.center, target.momentum, target.gamma, ens.q, ens.p, ens.gamma)
    return complex(np.sum(ens.amplitudes * ov))


def semiclassical_overlaps(phi: Ensemble, chi: Ensemble, dipole, counter: CostCounter | None = None, chunk=512):
    """(<phi|chi>, <chi|mu|phi>) by pairwise coherent-state integrals.

    mu is linearized about each pair midpoint, which is exact for linear
    dipoles. Costs N_phi * N_chi pair evaluations (recorded in `counter`).
    """
    if abs(phi.t - chi.t) > 1e-9:
        raise ValueError(f"ensembles at different times ({phi.t} vs {chi.t})")
    if phi.gamma != chi.gamma:
        raise ValueError("ensembles must share the coherent-state width")
    g = phi.gamma
    a = phi.amplitudes
    b = chi.amplitudes
    s_pc = 0j
    s_mu = 0j
    linear = isinstance(dipole, LinearDipole)
    if linear:
        v = 0.5 * dipole.mu1 * (chi.q + 1j * chi.p / g)
        rhs = np.column_stack([b, v * b])
    # exponent of <g(q1,p1)|g(q2,p2)> = f1_i + f2_j + conj(z1_i) z2_j
    z1c = np.conj(math.sqrt(0.5 * g) * phi.q + 1j * phi.p / math.sqrt(2.0 * g))
    z2 = math.sqrt(0.5 * g) * chi.q + 1j * chi.p / math.sqrt(2.0 * g)
    f1 = -0.25 * g * phi.q**2 - phi.p**2 / (4.0 * g) + 0.5j * phi.p * phi.q
    f2 = -0.25 * g * chi.q**2 - chi.p**2 / (4.0 * g) - 0.5j * chi.p * chi.q
    for s in range(0, len(phi), chunk):
        ov = np.multiply.outer(z1c[s:s + chunk], z2)
        ov += f1[s:s + chunk, None]
        ov += f2
        np.exp(ov, out=ov)
        ca = np.conj(a[s:s + chunk])
        if linear:
            # mu_ij = u_i + v_j, so both sums share one matrix product
            u = dipole.mu0 + 0.5 * dipole.mu1 * (phi.q[s:s + chunk] - 1j * phi.p[s:s + chunk] / g)
            ob = ov @ rhs
            s_pc += ca @ ob[:, 0]
            s_mu += (ca * u) @ ob[:, 0] + ca @ ob[:, 1]
            continue
        q1 = phi.q[s:s + chunk, None]
        mid = 0.5 * (q1 + chi.q)
        mu = dipole(mid) + dipole.derivative(mid, 1) * (0.5j * (chi.p - phi.p[s:s + chunk, None]) / g)
        s_pc += ca @ (ov @ b)
        s_mu += ca @ ((ov * mu) @ b)
    if counter is not None:
        counter.add(len(phi) * len(chi))
    # <phi|mu|chi> computed; mu is Hermitian
    return complex(s_pc), complex(np.conj(s_mu))


def write_trajectories(ens: Ensemble, path, append=False):
    """Debug dump: t, q, p, S, Re R, Im R per trajectory."""
    mode = "a" if append else "w"
    with open(path, mode) as fh:
        if not append:
            fh.write("t,q,p,S,ReR,ImR\n")
        for q, p, s, r in zip(ens.q, ens.p, ens.action, ens.prefactor):
            fh.write(f"{ens.t:.10e},{q:.10e},{p:.10e},{s:.10e},{r.real:.10e},{r.imag:.10e}\n")
