"""Curve-crossing formulas: one-passage probability, upper-well phase, NT transmission.

The nonadiabatic-tunneling (NT) transmission used throughout is

    P(E) = 4 cos^2 psi / (4 cos^2 psi + p^2 / (1 - p))

with p the one-passage probability and psi the phase integral across the
upper adiabatic well. P vanishes exactly where cos psi = 0; those energies
are the complete-reflection energies that block a dissociation channel.

Formula variants for p:
  "lz"  Landau-Zener, exp(-2 pi V12^2 / (v dF)).
  "zn"  Zhu-Nakamura finite-velocity expression in the (a^2, b^2) parameters.
Phase variants for psi:
  "plain"   psi = upper-well action + phi_corr.
  "stokes"  psi additionally shifted by the Stokes phase of p.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar
from scipy.special import loggamma

from .potentials import CrossingPoint, DressedSet, find_crossings


class ForbiddenPassageError(ValueError):
    """Energy at or below the crossing: no classical one-passage probability."""


class TopologyError(ValueError):
    """The upper adiabatic curve does not form a well with two turning points at E."""


P_VARIANTS = ("lz", "zn")
PHASE_VARIANTS = ("plain", "stokes")


@dataclass(frozen=True)
class CrossingParams:
    v12: float
    f1: float
    f2: float
    mass: float
    e_x: float
    r_x: float = float("nan")

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if self.f1 == self.f2:
            raise ValueError("crossing slopes must differ")

    @classmethod
    def from_crossing(cls, cp: CrossingPoint, mass):
        return cls(abs(cp.coupling), cp.slopes[0], cp.slopes[1], float(mass), cp.e_x, cp.r_x)

    @property
    def delta_f(self):
        return abs(self.f1 - self.f2)

    @property
    def sqrt_ff(self):
        return math.sqrt(abs(self.f1 * self.f2))

    @property
    def same_sign(self):
        return self.f1 * self.f2 > 0

    @property
    def a2(self):
        return self.delta_f * self.sqrt_ff / (16.0 * self.mass * self.v12**3)

    def b2(self, energy):
        return (energy - self.e_x) * self.delta_f / (2.0 * self.sqrt_ff * self.v12)

    def velocity(self, energy):
        return math.sqrt(2.0 * (energy - self.e_x) / self.mass)


def one_passage_probability(cp: CrossingParams, energy, variant="lz"):
    """Probability of staying diabatic in one passage through the crossing."""
    if variant not in P_VARIANTS:
        raise ValueError(f"unknown probability variant {variant!r}; choose from {P_VARIANTS}")
    if energy <= cp.e_x:
        raise ForbiddenPassageError(
            f"E = {energy} is not above the crossing energy {cp.e_x}; "
            "the passage is classically forbidden, use nt_transmission for this regime"
        )
    if cp.v12 == 0.0:
        return 1.0
    if variant == "lz":
        v = cp.velocity(energy)
        return math.exp(-2.0 * math.pi * cp.v12**2 / (v * cp.delta_f))
    if cp.sqrt_ff == 0.0:
        raise ValueError("the zn variant needs two sloped diabats")
    a = math.sqrt(cp.a2)
    b2 = cp.b2(energy)
    b = math.sqrt(b2)
    c = 0.4 * cp.a2 + 0.7 if cp.same_sign else 0.72 - 0.62 * a**1.43
    inner = max(1.0 + c / (b2 * b2), 0.0)
    return math.exp(-math.pi / (4.0 * a * b) * math.sqrt(2.0 / (1.0 + math.sqrt(inner))))


def nt_probability(p, psi):
    """4 cos^2 psi / (4 cos^2 psi + p^2 / (1 - p)); 0 when p = 1 or cos psi = 0."""
    c2 = math.cos(psi) ** 2
    if p >= 1.0 or c2 == 0.0:
        return 0.0
    return 4.0 * c2 / (4.0 * c2 + p * p / (1.0 - p))


def stokes_phase(p):
    """Stokes phase for a passage with one-passage probability p; 0 when p -> 0, pi/4 when p -> 1."""
    if p >= 1.0:
        return math.pi / 4.0
    if p <= 0.0:
        return 0.0
    y = -math.log(p) / (2.0 * math.pi)
    return math.pi / 4.0 + y * math.log(y) - y + float(loggamma(1.0 - 1j * y).imag)


# --------------------------------------------------------------------------
# upper adiabatic well
# --------------------------------------------------------------------------


class UpperCurve:
    """Upper adiabatic eigenvalue of the 2x2 block (i, j) of a dressed matrix."""

    def __init__(self, w: DressedSet, pair, domain=None):
        self.w = w
        self.pair = tuple(pair)
        self.domain = tuple(domain) if domain is not None else tuple(w.curves.domain)
        self.mass = w.curves.mass
        self._min = None

    def __call__(self, r):
        i, j = self.pair
        m = self.w.matrix(r)
        a, b, c = m[i, i], m[j, j], m[i, j]
        out = 0.5 * (a + b) + np.sqrt(0.25 * (a - b) ** 2 + c * c)
        return float(out[0]) if np.ndim(r) == 0 else out

    def minimum(self):
        if self._min is None:
            lo, hi = self.domain
            grid = np.linspace(lo, hi, 4001)
            u = self(grid)
            k = int(np.argmin(u))
            if k in (0, grid.size - 1):
                self._min = (float(grid[k]), float(u[k]), False)
            else:
                res = minimize_scalar(self, bounds=(grid[k - 1], grid[k + 1]), method="bounded",
                                      options={"xatol": 1e-12})
                self._min = (float(res.x), float(res.fun), True)
        return self._min

    def turning_points(self, energy, xtol=1e-10):
        r0, u0, interior = self.minimum()
        if not interior or energy <= u0:
            raise TopologyError(f"no upper-curve well at E = {energy} (well bottom {u0:.6g} at R = {r0:.4g})")
        lo, hi = self.domain
        pts = []
        for edge in (lo, hi):
            grid = np.linspace(r0, edge, 2001)
            u = self(grid) - energy
            idx = np.nonzero(u > 0)[0]
            if idx.size == 0:
                raise TopologyError(f"upper curve stays below E = {energy} between R = {r0:.4g} and {edge}")
            k = idx[0]
            a, b = sorted((grid[k - 1], grid[k]))
            pts.append(brentq(lambda x: self(x) - energy, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps))
        return pts[0], pts[1]

    def action(self, energy):
        """Integral of sqrt(2m(E - U)) between the two turning points."""
        t1, t2 = self.turning_points(energy)
        half = 0.5 * (t2 - t1)
        # R = t1 + half (1 - cos th): removes the square-root endpoint behaviour
        def integrand(th):
            r = t1 + half * (1.0 - math.cos(th))
            k2 = 2.0 * self.mass * (energy - self(r))
            return math.sqrt(max(k2, 0.0)) * half * math.sin(th)

        val, _ = quad(integrand, 0.0, math.pi, epsabs=1e-13, epsrel=1e-12, limit=200)
        return val


def upper_phase_integral(w: DressedSet, pair, energy, phi_corr=0.0, domain=None):
    """Upper-well phase psi(E); raises TopologyError without two turning points."""
    return UpperCurve(w, pair, domain).action(energy) + phi_corr


# --------------------------------------------------------------------------
# NT transmission and complete reflection
# --------------------------------------------------------------------------


@dataclass
class NTCrossing:
    """One crossing pair of a dressed set with its formula choices."""

    w: DressedSet
    pair: tuple
    params: CrossingParams
    p_variant: str = "lz"
    phase_variant: str = "plain"
    phi_corr: float = 0.0
    domain: tuple | None = None
    upper: UpperCurve = field(init=False, repr=False)

    def __post_init__(self):
        if self.phase_variant not in PHASE_VARIANTS:
            raise ValueError(f"unknown phase variant {self.phase_variant!r}; choose from {PHASE_VARIANTS}")
        self.upper = UpperCurve(self.w, self.pair, self.domain)

    @classmethod
    def locate(cls, w: DressedSet, pair, **kw):
        """Build from the crossing of `pair` where the upper adiabat forms a well (opposite slopes)."""
        pair = tuple(pair)
        domain = kw.get("domain")
        cands = [c for c in find_crossings(w, domain=domain, pairs=[pair]) if c.slopes[0] * c.slopes[1] < 0]
        if not cands:
            raise TopologyError(f"pair {pair} has no opposite-slope crossing at omega = {w.omega}")
        if len(cands) > 1:
            # the upper well lives at the crossing nearest its minimum
            r0 = UpperCurve(w, pair, domain).minimum()[0]
            cands.sort(key=lambda c: abs(c.r_x - r0))
        return cls(w, pair, CrossingParams.from_crossing(cands[0], w.curves.mass), **kw)

    def p(self, energy):
        return one_passage_probability(self.params, energy, self.p_variant)

    def phase(self, energy):
        psi = self.upper.action(energy) + self.phi_corr
        if self.phase_variant == "stokes":
            psi -= stokes_phase(self.p(energy))
        return psi

    def transmission(self, energy):
        return nt_probability(self.p(energy), self.phase(energy))

    def energy_window(self):
        """Energies where the formulas apply: above the well bottom and the crossing."""
        _, u0, _ = self.upper.minimum()
        return max(u0, self.params.e_x)

    def reflection_energies(self, e_lo, e_hi):
        if not e_hi > e_lo:
            raise ValueError(f"empty energy range [{e_lo}, {e_hi}]")
        e_lo = max(e_lo, self.energy_window() + 1e-12)
        if e_hi <= e_lo:
            return []
        # bracket on a grid, then refine; psi is monotone for the plain phase
        grid = np.linspace(e_lo, e_hi, 65)
        ph = np.array([self.phase(e) for e in grid])
        out = []
        n_lo = math.ceil(ph.min() / math.pi - 0.5)
        n_hi = math.floor(ph.max() / math.pi - 0.5)
        for n in range(n_lo, n_hi + 1):
            target = (n + 0.5) * math.pi
            s = ph - target
            for k in np.nonzero(s[:-1] * s[1:] <= 0)[0]:
                if s[k] == 0.0:
                    out.append(float(grid[k]))
                    continue
                out.append(brentq(lambda e: self.phase(e) - target, grid[k], grid[k + 1], xtol=1e-15, rtol=1e-15))
        return sorted(set(out))


def nt_transmission(cp: CrossingParams, w: DressedSet, pair, energy, p_variant="lz", phase_variant="plain",
                    phi_corr=0.0):
    return NTCrossing(w, tuple(pair), cp, p_variant, phase_variant, phi_corr).transmission(energy)


def complete_reflection_energies(cp: CrossingParams, w: DressedSet, pair, e_range, p_variant="lz",
                                 phase_variant="plain", phi_corr=0.0):
    """All E* in e_range with cos psi(E*) = 0, ascending."""
    return NTCrossing(w, tuple(pair), cp, p_variant, phase_variant, phi_corr).reflection_energies(*e_range)


@dataclass
class TransmissionCurve:
    energies: np.ndarray
    P: np.ndarray
    psi: np.ndarray
    p: np.ndarray

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["E_hartree", "P", "psi", "p"])
            for row in zip(self.energies, self.P, self.psi, self.p):
                wr.writerow([f"{v:.10e}" for v in row])


def transmission_curve(nt: NTCrossing, energies) -> TransmissionCurve:
    e = np.asarray(energies, dtype=float)
    return TransmissionCurve(e, np.array([nt.transmission(x) for x in e]),
                             np.array([nt.phase(x) for x in e]), np.array([nt.p(x) for x in e]))


# --------------------------------------------------------------------------
# simultaneous blocking scan
# --------------------------------------------------------------------------


@dataclass
class ScanRow:
    omega: float
    distances: dict  # channel -> normalized distance (inf when unavailable)
    score: float
    flags: dict  # channel -> reason string for channels lacking NT topology


def blocking_distance(nt: NTCrossing, energy):
    """Distance of E to the nearest complete-reflection energy in units of the local spacing.

    Adjacent roots differ by pi in phase, so the ratio is the phase mismatch over pi.
    """
    x = nt.phase(energy) / math.pi - 0.5
    return abs(x - round(x))


def simultaneous_blocking_scan(curves, level_energy, omegas, channels, amplitude, p_variant="lz",
                               phase_variant="plain", phi_corr=0.0, dressing=None, domain=None):
    """Score each omega by the worst blocked-channel distance of E_v to complete reflection.

    The distance is measured in units of the local spacing between adjacent
    complete-reflection energies, which equals the phase mismatch over pi.
    Rows are returned best-first; channels without NT topology at E_v are
    flagged and score infinity.
    """
    from .potentials import dress

    channels = list(channels)
    if not channels:
        raise ValueError("at least one channel to block is required")
    g = curves.ground_index
    rows = []
    for om in omegas:
        w = dress(curves, float(om), amplitude, dressing)
        dist, flags = {}, {}
        for c in channels:
            try:
                nt = NTCrossing.locate(w, (min(g, c), max(g, c)), p_variant=p_variant,
                                       phase_variant=phase_variant, phi_corr=phi_corr, domain=domain)
                dist[c] = blocking_distance(nt, level_energy)
            except (TopologyError, ForbiddenPassageError) as exc:
                dist[c] = math.inf
                flags[c] = str(exc)
        rows.append(ScanRow(float(om), dist, max(dist.values()), flags))
    rows.sort(key=lambda r: (r.score, r.omega))
    return rows


def write_scan_csv(rows, path, channels, labels=None):
    from .units import hartree_to_ev

    labels = labels or {c: str(c) for c in channels}
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["omega_eV"] + [f"dist_{labels[c]}" for c in channels] + ["score"])
        for r in rows:
            wr.writerow([f"{hartree_to_ev(r.omega):.10f}"] + [f"{r.distances[c]:.10e}" for c in channels]
                        + [f"{r.score:.10e}"])
