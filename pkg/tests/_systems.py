"""Model systems and oracle helpers shared by the test modules."""

import math

import numpy as np
from scipy.optimize import minimize_scalar

from semicontrol import hk, models
from semicontrol import oct as oc
from semicontrol.potentials import CurveSet, GaussianDipole, TanhRamp, dress, find_crossings
from semicontrol.scattering import stationary_scattering
from semicontrol import zn
from semicontrol.quantum_grid import Grid
from semicontrol.units import fs_to_au

# (mass, slope1, slope2, ramp length, V12) for the NT oracle comparisons
NT_SYSTEMS = [
    (918.0, 0.01, -0.01, 4.0, 0.004),
    (1800.0, 0.02, -0.01, 3.0, 0.006),
    (918.0, 0.01, -0.02, 3.0, 0.003),
]


def nt_dressed(mass, f1, f2, length, v12):
    cs = models.build_model_system("nt_model", {"mass_au": mass, "slope1_au": f1, "slope2_au": f2,
                                                "length_au": length, "coupling_au": v12})
    return dress(cs, 0.1, 1.0)


def lz_dressed(de, v12=0.005, f=0.01, mass=918.0, width=4.0, frac=0.9):
    """Two ramps crossing with opposite slopes whose plateaus lie below E_x + de (both channels open)."""
    length = frac * de / f
    cs = CurveSet([TanhRamp(f, length, 5.0, 0.0), TanhRamp(-f, length, 5.0, 0.1)],
                  {(0, 1): GaussianDipole(2 * v12, 5.0, width)}, mass, domain=(-60.0, 70.0))
    return dress(cs, 0.1, 1.0)


def oracle_x(w, n=2**15):
    lo, hi = w.curves.domain
    return np.linspace(lo, hi, n)


def oracle_transmission(w, energy, x=None):
    """Probability of crossing to the far side on the upper diabat (the NT transmission)."""
    x = oracle_x(w) if x is None else x
    return stationary_scattering(x, w.matrix(x), w.curves.mass, energy, 0).transmitted[1]


def oracle_minimum(w, guess, halfwidth):
    x = oracle_x(w)
    wm = w.matrix(x)
    f = lambda e: stationary_scattering(x, wm, w.curves.mass, e, 0).transmitted[1]
    res = minimize_scalar(f, bounds=(guess - halfwidth, guess + halfwidth), method="bounded",
                          options={"xatol": 1e-9})
    return res.x, res.fun


def predicted_reflections(w, phase_variant="stokes"):
    nt = zn.NTCrossing.locate(w, (0, 1), phase_variant=phase_variant)
    lo = nt.energy_window()
    # stay below the lower of the two plateaus so both outer channels remain open
    hi = min(abs(c.slope * c.length) for c in w.curves.curves) * 0.95
    return nt, nt.reflection_energies(lo + 1e-4, hi)


def hd_problem(horizon_fs=10.0, alpha=0.01, backend="quantum", field_dt=0.5, n_traj=200, sampling="box", **kw):
    cs = models.build_model_system("hd_plus")
    morse = cs.curves[0]
    omega = morse.alpha * math.sqrt(2 * morse.depth / cs.mass)
    sig = math.sqrt(1.0 / (2 * cs.mass * omega))
    return oc.ControlProblem(morse, models.control_dipole("hd_plus", {}), cs.mass, hk.GaussianState(morse.re, sig),
                             hk.GaussianState(morse.re + 1.0, sig), fs_to_au(horizon_fs), alpha, backend=backend,
                             field_dt=field_dt, grid=Grid(0.5, 8.5, 256, cs.mass),
                             hk_params=hk.HKParams(n_traj=n_traj, seed=0, sampling=sampling), hk_domain=(0.3, 40.0),
                             **kw)
