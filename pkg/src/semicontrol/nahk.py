"""Multi-surface Herman-Kluk propagation with trajectory branching at crossings.

This is one concrete reading of a multi-state HK scheme. Trajectories run on
the dressed diabatic curves W_ii(R); whenever one passes a diabatic crossing
R_x it splits in two:

  keep branch    stays on its diabat (adiabatic hop), amplitude sqrt(p)
  switch branch  moves to the partner diabat (adiabatic stay), amplitude
                 sqrt(1 - p) exp(i phi_switch)

with p the one-passage probability at the local kinetic energy and the
instantaneous coupling mu(R_x) E(t) / 2. The default switch phase is
-pi/2 + phi_S(p), the Stokes-corrected Landau-Zener value; a fixed number
may be configured instead. At R_x the two diabats are degenerate, so the
switch conserves energy without a momentum kick; the switch branch re-runs
the remainder of the step on its new surface.

Populations are Husimi-weighted branch probabilities, so retained and
pruned probability add up to one to rounding. A switch that is classically
forbidden is folded back into its keep branch; the folded probability is
part of the retained total and is reported separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import hk
from .potentials import DressedSet, find_crossings
from .zn import CrossingParams, one_passage_probability, stokes_phase


class BranchExplosionError(RuntimeError):
    pass


@dataclass(frozen=True)
class BranchParams:
    threshold: float = 1e-3  # |A| below this is pruned
    max_branches: int = 64  # per seed
    p_variant: str = "lz"
    switch_phase: object = "stokes"  # "stokes" or a float in radians
    domain: tuple | None = None

    def __post_init__(self):
        if not 0.0 <= self.threshold < 1.0:
            raise ValueError("threshold must lie in [0, 1)")
        if self.max_branches < 1:
            raise ValueError("max_branches must be >= 1")
        if not (self.switch_phase == "stokes" or isinstance(self.switch_phase, (int, float))):
            raise ValueError("switch_phase must be 'stokes' or a number")


class BranchEnsemble(hk.Ensemble):
    """HK ensemble plus surface index, branch amplitude, seed id and Husimi seed weight."""

    _arrays = hk.Ensemble._arrays + ("surface", "amp", "seed", "husimi", "passages")

    @classmethod
    def from_ensemble(cls, ens: hk.Ensemble, psi0: hk.GaussianState, surface=0):
        b = cls.__new__(cls)
        b.__dict__.update(ens.copy().__dict__)
        n = len(ens)
        b.surface = np.full(n, surface, dtype=int)
        b.amp = np.ones(n, dtype=complex)
        b.seed = np.arange(n)
        ov = hk.gaussian_overlap(ens.q, ens.p, ens.gamma, psi0.center, psi0.momentum, psi0.gamma)
        # |<g|psi0>|^2 / rho is proportional to |<g|psi0>| |w| for every sampling scheme used here
        b.husimi = np.abs(ov) * np.abs(ens.weight)
        b.passages = np.zeros(n, dtype=int)
        b.lineage = [[] for _ in range(n)]
        return b

    def subset(self, mask):
        e = super().subset(mask)
        idx = np.nonzero(mask)[0] if np.asarray(mask).dtype == bool else np.asarray(mask)
        e.lineage = [list(self.lineage[i]) for i in idx]
        return e

    def extend(self, other: "BranchEnsemble"):
        for k in self._arrays:
            setattr(self, k, np.concatenate([getattr(self, k), getattr(other, k)]))
        self.lineage = self.lineage + other.lineage
        self._force_cache = None

    def on_surface(self, s) -> hk.Ensemble:
        """Plain HK ensemble of the branches on surface s with A folded into the weights."""
        sub = self.subset(self.surface == s)
        e = hk.Ensemble.__new__(hk.Ensemble)
        e.__dict__.update({k: v for k, v in sub.__dict__.items() if k in hk.Ensemble._arrays})
        e.weight = sub.weight * sub.amp
        e.gamma, e.mass, e.t, e._force_cache = sub.gamma, sub.mass, sub.t, None
        return e


class DiabatPES:
    """Per-trajectory diabat W_s(q) with free motion outside the domain."""

    def __init__(self, diabats, domain):
        self.diabats = tuple(diabats)
        self.domain = domain
        self.surface = None

    def __call__(self, q, t=None):
        lo, hi = self.domain
        qc = np.clip(q, lo, hi)
        inside = qc == q
        s = self.surface
        first = int(s[0]) if s.size else 0
        if s.size == 0 or np.all(s == first):
            c = self.diabats[first]
            v, d1, d2 = c(qc), c.derivative(qc, 1), c.derivative(qc, 2)
        else:
            v = np.empty_like(qc)
            d1 = np.empty_like(qc)
            d2 = np.empty_like(qc)
            for k, c in enumerate(self.diabats):
                m = s == k
                if np.any(m):
                    v[m], d1[m], d2[m] = c(qc[m]), c.derivative(qc[m], 1), c.derivative(qc[m], 2)
        if not np.all(inside):
            d1 = np.where(inside, d1, 0.0)
            d2 = np.where(inside, d2, 0.0)
        return v, d1, d2


def _substep(ens: BranchEnsemble, pes: DiabatPES, h):
    """Velocity-Verlet step with per-trajectory step lengths h (static potentials only)."""
    m = ens.mass
    pes.surface = ens.surface
    v0, d0, h0 = pes(ens.q)
    ph = ens.p - 0.5 * h * d0
    q1 = ens.q + h * ph / m
    mpq_h = ens.mpq - 0.5 * h * h0 * ens.mqq
    mpp_h = ens.mpp - 0.5 * h * h0 * ens.mqp
    mqq1 = ens.mqq + h * mpq_h / m
    mqp1 = ens.mqp + h * mpp_h / m
    v1, d1, h1 = pes(q1)
    ens.p = ph - 0.5 * h * d1
    ens.mpq = mpq_h - 0.5 * h * h1 * mqq1
    ens.mpp = mpp_h - 0.5 * h * h1 * mqp1
    ens.mqq, ens.mqp = mqq1, mqp1
    ens.action = ens.action + h * (0.5 * ph * ph / m - 0.5 * (v0 + v1))
    ens.q = q1
    ens._force_cache = None
    ens.prefactor = hk.hk_prefactor(ens)


@dataclass
class PassageEvent:
    index: int  # trajectory index in the ensemble
    crossing: int
    fraction: float  # position of the crossing within the step, 0..1
    target: int  # partner surface


def detect_passage(q_old, q_new, surface, crossings):
    """Passages through diabatic crossings between two trajectory positions.

    `crossings` is a sequence of (R_x, (i, j)). Returns PassageEvent list, at
    most one per trajectory (the earliest within the step).
    """
    q_old = np.atleast_1d(q_old)
    q_new = np.atleast_1d(q_new)
    surface = np.atleast_1d(surface)
    best = {}
    for cid, (rx, (i, j)) in enumerate(crossings):
        on = (surface == i) | (surface == j)
        hit = on & ((q_old - rx) * (q_new - rx) < 0)
        for k in np.nonzero(hit)[0]:
            f = (rx - q_old[k]) / (q_new[k] - q_old[k])
            tgt = j if surface[k] == i else i
            if k not in best or f < best[k].fraction:
                best[k] = PassageEvent(int(k), cid, float(f), int(tgt))
    return [best[k] for k in sorted(best)]


@dataclass
class BranchOutcome:
    keep_amp: complex
    switch_amp: complex
    p: float
    forbidden: bool


def branch_amplitudes(p, switch_phase="stokes", forbidden=False):
    """Split amplitude factors for one passage with one-passage probability p."""
    if forbidden:
        return BranchOutcome(1.0 + 0j, 0j, p, True)
    phi = (-0.5 * math.pi + stokes_phase(p)) if switch_phase == "stokes" else float(switch_phase)
    return BranchOutcome(complex(math.sqrt(p)), math.sqrt(max(1.0 - p, 0.0)) * complex(math.cos(phi), math.sin(phi)),
                         p, False)


@dataclass
class PruningReport:
    n_seeds: int
    branches_per_seed: np.ndarray
    pruned_probability: float
    folded_probability: float
    n_pruned: int
    n_folded: int
    n_events: int

    def text(self):
        counts = np.bincount(self.branches_per_seed) if self.branches_per_seed.size else np.zeros(1, int)
        lines = [
            f"seeds: {self.n_seeds}",
            f"passage events: {self.n_events}",
            f"pruned branches: {self.n_pruned}",
            f"pruned probability: {self.pruned_probability:.3e}",
            f"forbidden switches folded: {self.n_folded}",
            f"folded probability: {self.folded_probability:.3e}",
            f"max branches per seed: {int(self.branches_per_seed.max()) if self.branches_per_seed.size else 0}",
            "branch count histogram: " + " ".join(f"{k}:{c}" for k, c in enumerate(counts) if c),
        ]
        return "\n".join(lines) + "\n"


@dataclass
class BranchingResult:
    ensemble: BranchEnsemble
    n_surfaces: int
    report: PruningReport
    husimi_total: float
    populations_series: list = field(default_factory=list)  # (t, P_0, ..., P_n-1, pruned)

    def populations(self):
        e = self.ensemble
        pops = np.array([np.sum(e.husimi[e.surface == s] * np.abs(e.amp[e.surface == s]) ** 2)
                         for s in range(self.n_surfaces)])
        return pops / self.husimi_total

    def per_surface(self):
        return [self.ensemble.on_surface(s) for s in range(self.n_surfaces)]


def _envelope(field):
    if field is None:
        return lambda t: 0.0
    if callable(getattr(field, "envelope", None)):
        return lambda t: float(field.envelope(t))
    if callable(field):
        return lambda t: float(field(t))
    return lambda t: float(field)


def propagate_branching(seeds: BranchEnsemble, w: DressedSet, field, t_final, dt, params=BranchParams(),
                        record_every=0):
    """Branching HK evolution of `seeds` on the dressed diabats of `w`.

    `field` supplies the coupling envelope E(t): a LaserField (its envelope),
    a callable, a constant or None. Returns the final branched ensemble with
    a pruning report. With record_every > 0 the Husimi-weighted populations
    are sampled along the way.
    """
    ens = seeds.copy()
    ens.lineage = [list(x) for x in seeds.lineage]
    env = _envelope(field)
    n_s = w.curves.n_states
    domain = params.domain or w.curves.domain
    pes = DiabatPES(w.diabats(), domain)
    crossings = [(c.r_x, c.pair, c) for c in find_crossings(w, domain=domain)]
    cross_list = [(rx, pair) for rx, pair, _ in crossings]
    mu_half = [float(w.coupling_operator(c.r_x)[c.pair[0], c.pair[1], 0]) for _, _, c in crossings]
    htot = float(np.sum(seeds.husimi))
    n_seeds = int(seeds.seed.max()) + 1 if len(seeds) else 0
    pruned = folded = 0.0
    n_pruned = n_folded = n_events = 0
    series = []

    def record():
        pops = [float(np.sum(ens.husimi[ens.surface == s] * np.abs(ens.amp[ens.surface == s]) ** 2)) / htot
                for s in range(n_s)]
        series.append((ens.t, *pops, pruned / htot))

    span = t_final - ens.t
    n = int(math.ceil(abs(span) / dt - 1e-9))
    h = span / n if n else dt
    t0 = ens.t
    if record_every:
        record()
    for k in range(1, n + 1):
        before = ens.copy()
        before.lineage = ens.lineage
        pes.surface = ens.surface
        hk.step_ensemble(ens, pes, h, t_end=t0 + k * h)
        events = detect_passage(before.q, ens.q, ens.surface, cross_list)
        if events:
            idx = np.array([e.index for e in events])
            new = before.subset(idx)
            frac = np.array([e.fraction for e in events])
            keep_f = np.empty(len(events), dtype=complex)
            sw_f = np.empty(len(events), dtype=complex)
            for m, ev in enumerate(events):
                n_events += 1
                rx, pair, cp = crossings[ev.crossing]
                t_ev = before.t + ev.fraction * h
                p_x = before.p[ev.index] + ev.fraction * (ens.p[ev.index] - before.p[ev.index])
                e_kin = 0.5 * p_x * p_x / ens.mass
                v12 = abs(mu_half[ev.crossing] * env(t_ev))
                if v12 == 0.0 or e_kin <= 0.0:
                    prob = 1.0
                else:
                    cparams = CrossingParams(v12, cp.slopes[0], cp.slopes[1], ens.mass, cp.e_x, rx)
                    prob = one_passage_probability(cparams, cp.e_x + e_kin, params.p_variant)
                out = branch_amplitudes(prob, params.switch_phase)
                keep_f[m], sw_f[m] = out.keep_amp, out.switch_amp
                ens.lineage[ev.index].append((ev.crossing, "keep", t_ev))
                new.lineage[m].append((ev.crossing, "switch", t_ev))
            # switch branches: run to the crossing on the old surface, switch, finish the step
            _substep(new, pes, frac * h)
            old_s = new.surface.copy()
            new.surface[:] = [e.target for e in events]
            pes.surface = old_s
            v_old = pes(new.q)[0]
            pes.surface = new.surface
            v_new = pes(new.q)[0]
            p2 = new.p**2 - 2.0 * ens.mass * (v_new - v_old)
            ok = p2 > 0
            if not np.all(ok):
                # forbidden switch: fold its probability back into the keep branch
                bad = ~ok
                n_folded += int(bad.sum())
                folded += float(np.sum(new.husimi[bad] * np.abs(new.amp[bad] * sw_f[bad]) ** 2))
                keep_f[bad] = 1.0
                sw_f[bad] = 0.0
            new.p = np.where(ok, np.sign(new.p) * np.sqrt(np.where(ok, p2, 0.0)), new.p)
            # saltation: neighbours switch at slightly different times, so the
            # force jump enters the linearized map as a kick proportional to dq
            pes.surface = old_s
            f_old = pes(new.q)[1]
            pes.surface = new.surface
            f_new = pes(new.q)[1]
            kick = np.where(ok, (f_new - f_old) * ens.mass / new.p, 0.0)
            new.mpq = new.mpq - kick * new.mqq
            new.mpp = new.mpp - kick * new.mqp
            _substep(new, pes, (1.0 - frac) * h)
            new.t = ens.t
            ens.amp[idx] = ens.amp[idx] * keep_f
            new.amp = new.amp * sw_f
            new.passages = new.passages + 1
            ens.passages[idx] += 1
            live = ok & (np.abs(new.amp) >= params.threshold) & (new.amp != 0)
            drop = ~live & ok & (new.amp != 0)  # zero-amplitude switches are not branches
            n_pruned += int(drop.sum())
            pruned += float(np.sum(new.husimi[drop] * np.abs(new.amp[drop]) ** 2))
            # pruning of keep branches whose amplitude fell below threshold
            small = np.abs(ens.amp) < params.threshold
            if np.any(small):
                n_pruned += int(small.sum())
                pruned += float(np.sum(ens.husimi[small] * np.abs(ens.amp[small]) ** 2))
                keep_mask = ~small
                lin = [ens.lineage[i] for i in np.nonzero(keep_mask)[0]]
                ens_new = ens.subset(keep_mask)
                ens_new.lineage = lin
                ens = ens_new
            if np.any(live):
                ens.extend(new.subset(live))
            ens._force_cache = None
            counts = np.bincount(ens.seed, minlength=n_seeds)
            if counts.max() > params.max_branches:
                s = int(np.argmax(counts))
                raise BranchExplosionError(
                    f"seed {s} has {counts[s]} live branches (cap {params.max_branches}) at t = {ens.t:.6g}; "
                    "raise the amplitude threshold or the branch cap"
                )
        if record_every and (k % record_every == 0 or k == n):
            record()
    counts = np.bincount(ens.seed, minlength=n_seeds)
    report = PruningReport(n_seeds, counts, pruned / htot, folded / htot, n_pruned, n_folded, n_events)
    return BranchingResult(ens, n_s, report, htot, series)


def reconstruct_per_surface(result: BranchingResult, x):
    """Semiclassical amplitudes psi_s(x), shape (n_surfaces, len(x))."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((result.n_surfaces, x.size), dtype=complex)
    for s, e in enumerate(result.per_surface()):
        if len(e):
            out[s] = hk.reconstruct(e, x)
    return out
