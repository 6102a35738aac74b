"""Named model families: analytic stand-ins for the diatomic systems studied.

`build_model_system(name, params)` returns a CurveSet. Parameter names carry
their unit as a suffix (`_au` for atomic units, `_nm` for wavelengths), so a
`describe` block can be pasted into the `[system]` section of a config.

The HI-like excited-curve amplitudes are tuned so that, dressed at 3.58 eV
with E0 = 0.0035 au, the two outer channels block transmission from the
v = 4 level while the middle channel stays open. The H2+-like repulsive
curve is placed so the one-photon dressed crossing sits at `crossing_au`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .potentials import (
    CurveSet,
    Exponential,
    GaussianDipole,
    Harmonic,
    LinearDipole,
    Morse,
    Tabulated,
    TanhRamp,
)
from .units import PROTON_MASS, nm_to_omega


class UnknownModelError(KeyError):
    def __str__(self):
        return self.args[0] if self.args else "unknown model"


@dataclass(frozen=True)
class Param:
    name: str
    default: object
    doc: str


@dataclass(frozen=True)
class ModelFamily:
    name: str
    summary: str
    params: tuple
    builder: Callable
    control_dipole: Callable | None = None  # single-surface control coupling mu(R)

    def resolve(self, params=None):
        """Defaults overlaid with `params`; rejects unknown keys."""
        params = dict(params or {})
        known = {p.name for p in self.params}
        extra = sorted(set(params) - known)
        if extra:
            raise ValueError(f"model '{self.name}' has no parameter(s) {', '.join(extra)}; "
                             f"known: {', '.join(sorted(known))}")
        out = {}
        for p in self.params:
            v = params.get(p.name, p.default)
            out[p.name] = v if isinstance(p.default, str) else float(v)
        return out


REGISTRY: dict[str, ModelFamily] = {}


def register(family: ModelFamily):
    REGISTRY[family.name] = family
    return family


def get_family(name) -> ModelFamily:
    try:
        return REGISTRY[name]
    except KeyError:
        raise UnknownModelError(f"unknown model '{name}'; registered: {', '.join(sorted(REGISTRY))}") from None


def list_models():
    return sorted(REGISTRY)


def build_model_system(name, params=None) -> CurveSet:
    fam = get_family(name)
    return fam.builder(fam.resolve(params))


def control_dipole(name, params=None):
    fam = get_family(name)
    if fam.control_dipole is None:
        raise ValueError(f"model '{name}' defines no control dipole")
    return fam.control_dipole(fam.resolve(params))


def describe(name) -> str:
    """Config-style `[system]` block with documented defaults."""
    fam = get_family(name)
    lines = [f"# {fam.summary}", "[system]", f"model = {fam.name}"]
    for p in fam.params:
        v = p.default if isinstance(p.default, str) else repr(float(p.default))
        lines.append(f"{p.name} = {v}  # {p.doc}")
    return "\n".join(lines) + "\n"


def _positive(q, *names):
    for n in names:
        if not q[n] > 0:
            raise ValueError(f"{n} must be positive, got {q[n]}")


# --------------------------------------------------------------------------
# families
# --------------------------------------------------------------------------

_MORSE_PARAMS = (
    Param("depth_au", 0.1026, "well depth D"),
    Param("alpha_au", 0.72, "range parameter a (1/bohr)"),
    Param("re_au", 2.0, "equilibrium distance (bohr)"),
    Param("offset_au", 0.0, "energy of the well bottom"),
)


def _build_morse(q):
    _positive(q, "depth_au", "alpha_au", "mass_au")
    curve = Morse(q["depth_au"], q["alpha_au"], q["re_au"], q["offset_au"])
    return CurveSet([curve], {}, q["mass_au"], labels=("ground",), domain=(q["rmin_au"], q["rmax_au"]))


register(ModelFamily(
    "morse", "single Morse curve",
    _MORSE_PARAMS + (
        Param("mass_au", PROTON_MASS / 2, "reduced mass (electron masses)"),
        Param("rmin_au", 0.5, "domain start (bohr)"),
        Param("rmax_au", 20.0, "domain end (bohr)"),
    ),
    _build_morse,
))


def _build_harmonic(q):
    _positive(q, "omega_au", "mass_au")
    k = q["mass_au"] * q["omega_au"] ** 2
    return CurveSet([Harmonic(k, q["re_au"], 0.0)], {}, q["mass_au"], labels=("ground",),
                    domain=(q["rmin_au"], q["rmax_au"]))


register(ModelFamily(
    "harmonic", "single harmonic curve 0.5 m w^2 (R - Re)^2",
    (
        Param("omega_au", 0.01, "angular frequency"),
        Param("re_au", 2.0, "minimum position (bohr)"),
        Param("mass_au", 1000.0, "mass (electron masses)"),
        Param("rmin_au", -2.0, "domain start (bohr)"),
        Param("rmax_au", 6.0, "domain end (bohr)"),
    ),
    _build_harmonic,
))


register(ModelFamily(
    "hd_plus", "HD+-like Morse ground curve with the centre-of-mass dipole R/6 for control",
    (
        Param("depth_au", 0.1026, "well depth D"),
        Param("alpha_au", 0.72, "range parameter a (1/bohr)"),
        Param("re_au", 2.0, "equilibrium distance (bohr)"),
        Param("offset_au", -0.1026, "energy of the well bottom"),
        Param("mass_au", PROTON_MASS * 2.0 / 3.0, "reduced mass m_p * m_d / (m_p + m_d), m_d ~ 2 m_p"),
        Param("dipole_slope_au", 1.0 / 6.0, "mu(R) = dipole_slope * R"),
        Param("rmin_au", 0.5, "domain start (bohr)"),
        Param("rmax_au", 8.5, "domain end (bohr)"),
    ),
    _build_morse,
    control_dipole=lambda q: LinearDipole(0.0, q["dipole_slope_au"]),
))


def _build_h2_plus(q):
    _positive(q, "depth_au", "alpha_au", "mass_au", "rate_au", "wavelength_nm")
    g = Morse(q["depth_au"], q["alpha_au"], q["re_au"], q["offset_au"])
    omega = nm_to_omega(q["wavelength_nm"])
    rx = q["crossing_au"]
    # place the repulsive curve one photon above the ground curve at rx
    amp = (float(g(rx)) + omega) * math.exp(q["rate_au"] * rx)
    if amp <= 0:
        raise ValueError("crossing_au lies where the dressed curves cannot cross")
    u = Exponential(amp, q["rate_au"], 0.0)
    return CurveSet([g, u], {(0, 1): LinearDipole(0.0, q["dipole_slope_au"])}, q["mass_au"],
                    labels=("1sg", "2pu"), domain=(q["rmin_au"], q["rmax_au"]))


register(ModelFamily(
    "h2_plus", "H2+-like 1s sigma_g / 2p sigma_u pair with a tunable dressed crossing",
    (
        Param("depth_au", 0.1026, "ground well depth"),
        Param("alpha_au", 0.72, "ground Morse range (1/bohr)"),
        Param("re_au", 2.0, "ground equilibrium distance (bohr)"),
        Param("offset_au", -0.1026, "ground well bottom"),
        Param("rate_au", 0.993, "repulsive decay rate b (1/bohr)"),
        Param("crossing_au", 4.0, "dressed crossing position (bohr)"),
        Param("wavelength_nm", 515.0, "photon wavelength the crossing is tuned for"),
        Param("dipole_slope_au", 0.5, "transition dipole mu(R) = dipole_slope * R"),
        Param("mass_au", PROTON_MASS / 2.0, "reduced mass"),
        Param("rmin_au", 0.5, "domain start (bohr)"),
        Param("rmax_au", 30.0, "domain end (bohr)"),
    ),
    _build_h2_plus,
))


def _build_hi_like(q):
    _positive(q, "depth_au", "alpha_au", "mass_au", "mu_width_au")
    re = q["re_au"]
    g = Morse(q["depth_au"], q["alpha_au"], re, -q["depth_au"])
    curves = [g]
    for k in (2, 3, 4):
        # amplitudes are given at R = Re
        b = q[f"rate{k}_au"]
        curves.append(Exponential(q[f"amp{k}_au"] * math.exp(b * re), b, q[f"const{k}_au"]))
    dip = GaussianDipole(q["mu0_au"], q["mu_center_au"], q["mu_width_au"])
    return CurveSet(curves, {(0, 1): dip, (0, 2): dip, (0, 3): dip}, q["mass_au"],
                    labels=("X", "ch2", "ch3", "ch4"), domain=(q["rmin_au"], q["rmax_au"]))


register(ModelFamily(
    "hi_like", "HI-like ground Morse curve with three repulsive excited curves",
    (
        Param("depth_au", 0.117, "ground well depth"),
        Param("alpha_au", 0.923, "ground Morse range (1/bohr)"),
        Param("re_au", 3.04, "ground equilibrium distance (bohr)"),
        Param("mass_au", 1822.67, "reduced mass"),
        Param("amp2_au", 0.1308507665, "channel 2 repulsion at Re"),
        Param("rate2_au", 1.6, "channel 2 decay rate"),
        Param("const2_au", 0.0, "channel 2 asymptote"),
        Param("amp3_au", 0.0602393942, "channel 3 repulsion at Re"),
        Param("rate3_au", 1.4, "channel 3 decay rate"),
        Param("const3_au", 0.0347, "channel 3 asymptote (spin-orbit excited atom)"),
        Param("amp4_au", 0.1653217649, "channel 4 repulsion at Re"),
        Param("rate4_au", 2.0, "channel 4 decay rate"),
        Param("const4_au", 0.0, "channel 4 asymptote"),
        Param("mu0_au", 1.0, "transition dipole peak"),
        Param("mu_center_au", 3.5, "transition dipole centre (bohr)"),
        Param("mu_width_au", 1.5, "transition dipole width (bohr)"),
        Param("rmin_au", 1.0, "domain start (bohr)"),
        Param("rmax_au", 30.0, "domain end (bohr)"),
    ),
    _build_hi_like,
))


def _build_nt(q):
    _positive(q, "mass_au", "length_au", "coupling_width_au", "photon_au")
    if q["slope1_au"] * q["slope2_au"] >= 0:
        raise ValueError("nt_model needs slopes of opposite sign")
    lo = TanhRamp(q["slope1_au"], q["length_au"], q["center_au"], 0.0)
    hi = TanhRamp(q["slope2_au"], q["length_au"], q["center_au"], q["photon_au"])
    # dressing at photon_au with unit amplitude turns 2 V12 into the coupling V12
    dip = GaussianDipole(2.0 * q["coupling_au"], q["center_au"], q["coupling_width_au"])
    return CurveSet([lo, hi], {(0, 1): dip}, q["mass_au"], labels=("lower", "upper"),
                    domain=(q["rmin_au"], q["rmax_au"]))


register(ModelFamily(
    "nt_model", "two flat-asymptote ramps crossing with opposite slopes (dress at photon_au, amplitude 1)",
    (
        Param("mass_au", 918.0, "mass"),
        Param("slope1_au", 0.01, "slope of the lower-left diabat at the crossing"),
        Param("slope2_au", -0.01, "slope of the other diabat at the crossing"),
        Param("length_au", 4.0, "ramp length; plateaus sit at +-slope*length"),
        Param("coupling_au", 0.004, "diabatic coupling V12 at the crossing"),
        Param("coupling_width_au", 4.0, "Gaussian width of the coupling (bohr)"),
        Param("center_au", 5.0, "crossing position (bohr)"),
        Param("photon_au", 0.1, "photon energy used to bring the diabats together"),
        Param("rmin_au", -40.0, "domain start (bohr)"),
        Param("rmax_au", 50.0, "domain end (bohr)"),
    ),
    _build_nt,
))


def _build_tabulated(q):
    _positive(q, "mass_au")
    paths = [s.strip() for s in str(q["curves"]).split(",") if s.strip()]
    if not paths:
        raise ValueError("tabulated model needs at least one curve file in 'curves'")
    curves = [Tabulated.from_file(p) for p in paths]
    dipoles = {}
    if str(q["dipole_01"]).strip():
        if len(curves) < 2:
            raise ValueError("dipole_01 needs two curves")
        dipoles[(0, 1)] = Tabulated.from_file(q["dipole_01"].strip())
    lo = max(c.r[0] for c in curves)
    hi = min(c.r[-1] for c in curves)
    return CurveSet(curves, dipoles, q["mass_au"], domain=(lo, hi))


register(ModelFamily(
    "tabulated", "cubic-spline curves from two-column files (R bohr, V hartree)",
    (
        Param("curves", "", "comma-separated curve files, ground first"),
        Param("dipole_01", "", "optional transition dipole file between curves 0 and 1"),
        Param("mass_au", PROTON_MASS / 2.0, "reduced mass"),
    ),
    _build_tabulated,
))
