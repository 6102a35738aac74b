"""Unit conversions at the API boundary.

Everything inside the package is in atomic units (hartree, bohr, hbar = 1,
m_e = 1). These helpers convert the handful of laboratory units that show up
in configs and reports.
"""

import math

HARTREE_EV = 27.211386245988
FS_AU = 41.341373335  # atomic time units per femtosecond
AMU_AU = 1822.888486209  # electron masses per dalton
BOHR_NM = 0.0529177210903
C_AU = 137.035999084  # speed of light, bohr per atomic time unit
PROTON_MASS = 1836.15267343


def ev_to_hartree(e):
    return e / HARTREE_EV


def hartree_to_ev(e):
    return e * HARTREE_EV


def fs_to_au(t):
    return t * FS_AU


def au_to_fs(t):
    return t / FS_AU


def ps_to_au(t):
    return t * 1000.0 * FS_AU


def au_to_ps(t):
    return t / (1000.0 * FS_AU)


def amu_to_au(m):
    return m * AMU_AU


def nm_to_omega(wavelength_nm):
    """Photon angular frequency (= energy, in hartree) for a vacuum wavelength."""
    if wavelength_nm <= 0:
        raise ValueError("wavelength must be positive")
    return 2.0 * math.pi * C_AU / (wavelength_nm / BOHR_NM)


def omega_to_nm(omega):
    return 2.0 * math.pi * C_AU / omega * BOHR_NM
