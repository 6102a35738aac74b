"""Experiment configuration: sectioned key = value text with unit suffixes.

Quantities are written as `<name>_<unit>`; the accepted units depend on the
quantity's kind:

    energy   _au, _eV, _nm (photon wavelength)
    time     _au, _fs, _ps
    length   _au

Everything is converted to atomic units on load. Dimensionless keys carry
no suffix. `resolve` returns the fully defaulted configuration, which the
runner writes into the run manifest.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from . import models
from .units import ev_to_hartree, fs_to_au, nm_to_omega, ps_to_au

REQUIRED = object()

UNITS = {
    "energy": {"au": lambda v: v, "eV": ev_to_hartree, "nm": nm_to_omega},
    "time": {"au": lambda v: v, "fs": fs_to_au, "ps": ps_to_au},
    "length": {"au": lambda v: v},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass(frozen=True)
class Key:
    name: str
    kind: str  # int, float, str, bool, list, energy, time, length
    default: object = REQUIRED
    check: tuple = ()  # (predicate, description)
    choices: tuple = ()


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


POSITIVE = (_pos, "must be > 0")
NONNEG = (_nonneg, "must be >= 0")

KINDS = ("eigen", "propagate", "flux-scan", "zn-scan", "oct", "hk-compare", "na-compare", "ga")

_GRID = (
    Key("rmin", "length"),
    Key("rmax", "length"),
    Key("n_grid", "int", 1024, POSITIVE),
)
_FIELD = (
    Key("field", "str", "cw", choices=("none", "cw", "gaussian", "tabulated")),
    Key("omega", "energy", None),
    Key("amplitude", "float", 0.0, NONNEG),
    Key("pulse_center", "time", 0.0),
    Key("pulse_fwhm", "time", None),
    Key("field_file", "str", ""),
)
_STATE = (
    Key("initial", "str", "eigen", choices=("eigen", "gaussian")),
    Key("v", "int", 0, NONNEG),
    Key("center", "length", None),
    Key("width", "length", None),
    Key("momentum", "float", 0.0),
    Key("surface", "int", 0, NONNEG),
)

SCHEMA = {
    "eigen": {
        "numerics": _GRID,
        "physics": (Key("levels", "int", 5, POSITIVE), Key("surface", "int", 0, NONNEG)),
    },
    "propagate": {
        "numerics": _GRID + (Key("dt", "time", 1.0, POSITIVE), Key("absorber_start", "length", None),
                             Key("absorber_strength", "float", 0.05, NONNEG)),
        "physics": _STATE + _FIELD + (Key("duration", "time"), Key("rwa", "bool", False)),
    },
    "flux-scan": {
        "numerics": _GRID + (Key("dt", "time", 1.0, POSITIVE), Key("absorber_start", "length"),
                             Key("absorber_strength", "float", 0.05, NONNEG), Key("flux_at", "length")),
        "physics": (Key("levels", "list"), Key("omega", "energy"), Key("amplitude", "float", check=POSITIVE),
                    Key("duration", "time")),
    },
    "zn-scan": {
        "numerics": (Key("phase_variant", "str", "stokes", choices=("plain", "stokes")),
                     Key("p_variant", "str", "lz", choices=("lz", "zn")),
                     Key("points", "int", 61, POSITIVE)),
        "physics": (Key("v", "int", 0, NONNEG), Key("omega_min", "energy"), Key("omega_max", "energy"),
                    Key("amplitude", "float", check=POSITIVE), Key("channels", "list", ""),
                    Key("energy_points", "int", 201, POSITIVE)),
    },
    "oct": {
        "numerics": _GRID + (Key("backends", "list", "quantum"), Key("field_dt", "time", 0.25, POSITIVE),
                             Key("prop_dt", "time", None), Key("n_traj", "int", 2000, POSITIVE),
                             Key("sampling", "str", "box", choices=("box", "importance")),
                             Key("hk_width_factor", "float", 1.0, POSITIVE),
                             Key("box_sigmas", "float", 5.0, POSITIVE)),
        "physics": (Key("center", "length", None), Key("target_shift", "length", 1.0),
                    Key("duration", "time"), Key("alpha", "float", 0.01, POSITIVE),
                    Key("guess_amplitude", "float", 0.002, NONNEG), Key("guess_omega", "energy", None),
                    Key("iterations", "int", 1, POSITIVE), Key("tol", "float", 0.0, NONNEG)),
    },
    "hk-compare": {
        "numerics": _GRID + (Key("dt", "time", 1.0, POSITIVE), Key("grid_dt", "time", 0.1, POSITIVE),
                             Key("n_traj", "list", "1000"),
                             Key("sampling", "str", "importance", choices=("box", "importance")),
                             Key("spread_seeds", "bool", False)),
        "physics": (Key("center", "length"), Key("width", "length"), Key("momentum", "float", 0.0),
                    Key("duration", "time")),
    },
    "na-compare": {
        "numerics": _GRID + (Key("dt", "time", 0.5, POSITIVE), Key("hk_dt", "time", 1.0, POSITIVE),
                             Key("n_traj", "int", 2000, POSITIVE),
                             Key("sampling", "str", "importance", choices=("box", "importance")),
                             Key("prune_threshold", "float", 1e-3, NONNEG),
                             Key("max_branches", "int", 64, POSITIVE),
                             Key("p_variant", "str", "lz", choices=("lz", "zn"))),
        "physics": (Key("center", "length"), Key("width", "length"), Key("momentum", "float", 0.0),
                    Key("omega", "energy"), Key("amplitude", "float", check=POSITIVE),
                    Key("pulse_center", "time"), Key("pulse_fwhm", "time", check=POSITIVE),
                    Key("duration", "time")),
    },
    "ga": {
        "numerics": _GRID + (Key("backend", "str", "quantum", choices=("quantum", "semiclassical")),
                             Key("field_dt", "time", 5.0, POSITIVE), Key("prop_dt", "time", None),
                             Key("n_traj", "int", 500, POSITIVE),
                             Key("sampling", "str", "box", choices=("box", "importance")),
                             Key("box_sigmas", "float", 5.0, POSITIVE),
                             Key("population", "int", 40), Key("generations", "int", 50),
                             Key("mutation_sigma", "float", 0.1, POSITIVE), Key("tournament", "int", 3),
                             Key("elitism", "int", 2), Key("workers", "int", 1, POSITIVE)),
        "physics": (Key("center", "length", None), Key("target_shift", "length", 1.0),
                    Key("duration", "time"), Key("alpha", "float", 0.01, POSITIVE),
                    Key("parameterization", "str", "sum_of_gaussians",
                        choices=("sum_of_gaussians", "spline_knots")),
                    Key("components", "int", 4, POSITIVE), Key("max_amplitude", "float", 0.1, POSITIVE),
                    Key("omega_min", "energy", None), Key("omega_max", "energy", None)),
    },
}

EXPERIMENT_KEYS = (Key("kind", "str", choices=KINDS), Key("name", "str", ""), Key("seed", "int", 0, NONNEG))
OUTPUT_KEYS = (Key("directory", "str"), Key("stride", "int", 10, POSITIVE))


def _convert(key: Key, raw: str, where: str):
    raw = raw.strip()
    try:
        if key.kind == "int":
            v = int(raw)
        elif key.kind == "float":
            v = float(raw)
        elif key.kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError
            v = low in ("true", "yes", "1")
        elif key.kind == "list":
            v = tuple(s.strip() for s in raw.split(",") if s.strip())
        else:
            v = raw
    except ValueError:
        raise ConfigError(f"{where}: expected {key.kind}, got {raw!r}") from None
    return v


def _read_section(sec: dict, keys, section: str):
    """Resolve one section; returns {name: value} with quantities in au."""
    out = {}
    used = set()
    for key in keys:
        where = f"[{section}] {key.name}"
        if key.kind in UNITS:
            hits = [(u, f) for u, f in UNITS[key.kind].items() if f"{key.name}_{u}" in sec]
            if len(hits) > 1:
                raise ConfigError(f"{where}: given in more than one unit")
            if hits:
                u, f = hits[0]
                raw = sec[f"{key.name}_{u}"]
                used.add(f"{key.name}_{u}")
                try:
                    v = float(f(float(raw)))
                except ValueError:
                    raise ConfigError(f"{where}_{u}: expected a number, got {raw!r}") from None
            elif key.default is REQUIRED:
                units = "/".join(UNITS[key.kind])
                raise ConfigError(f"{where}: required (suffix one of _{units.replace('/', ', _')})")
            else:
                v = key.default
        else:
            if key.name in sec:
                used.add(key.name)
                v = _convert(key, sec[key.name], where)
            elif key.default is REQUIRED:
                raise ConfigError(f"{where}: required")
            else:
                v = _convert(key, str(key.default), where) if isinstance(key.default, str) and key.kind == "list" \
                    else key.default
        if v is not None and key.choices and v not in key.choices:
            raise ConfigError(f"{where}: must be one of {', '.join(key.choices)}, got {v!r}")
        if v is not None and key.check and not key.check[0](v):
            raise ConfigError(f"{where}: {key.check[1]}, got {v!r}")
        out[key.name] = v
    extra = sorted(set(sec) - used)
    if extra:
        raise ConfigError(f"[{section}]: unknown key(s) {', '.join(extra)}")
    return out


@dataclass
class ExperimentConfig:
    kind: str
    name: str
    seed: int
    system: dict  # model name under "model", then family parameters
    numerics: dict
    physics: dict
    output: dict
    source: str = ""

    def model_system(self):
        params = {k: v for k, v in self.system.items() if k != "model"}
        return models.build_model_system(self.system["model"], params)

    def resolved_text(self):
        """Fully defaulted configuration, quantities in atomic units."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {"kind": self.kind, "name": self.name, "seed": str(self.seed)}
        cp["system"] = {k: str(v) for k, v in self.system.items()}
        for sec in ("numerics", "physics", "output"):
            block = getattr(self, sec)
            cp[sec] = {}
            kinds = {k.name: k.kind for k in SCHEMA[self.kind].get(sec, OUTPUT_KEYS)} if sec != "output" else {}
            for k, v in block.items():
                if v is None:
                    continue
                name = f"{k}_au" if kinds.get(k) in UNITS else k
                cp[sec][name] = ", ".join(v) if isinstance(v, tuple) else repr(v) if isinstance(v, float) else str(v)
        from io import StringIO

        buf = StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_text(text: str, source="<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    missing = [s for s in ("experiment", "system", "output") if s not in cp]
    if missing:
        kinds = ", ".join(KINDS)
        raise ConfigError(
            f"{source}: missing section(s) {', '.join('[' + s + ']' for s in missing)}; required keys: "
            f"[experiment] kind ({kinds}), [system] model, [output] directory"
        )
    exp = _read_section(dict(cp["experiment"]), EXPERIMENT_KEYS, "experiment")
    kind = exp["kind"]
    schema = SCHEMA[kind]
    known = {"experiment", "system", "output", *schema}
    extra = [s for s in cp.sections() if s not in known]
    if extra:
        raise ConfigError(f"{source}: unknown section(s) {', '.join(extra)} for kind '{kind}'")
    sys_sec = dict(cp["system"])
    if "model" not in sys_sec:
        raise ConfigError("[system] model: required")
    model = sys_sec.pop("model").strip()
    try:
        fam = models.get_family(model)
        params = fam.resolve(sys_sec)
        fam.builder(params)
    except models.UnknownModelError as exc:
        raise ConfigError(f"[system] model: {exc}") from None
    except (ValueError, OSError) as exc:
        raise ConfigError(f"[system]: {exc}") from None
    system = {"model": model, **params}
    blocks = {s: _read_section(dict(cp[s]) if s in cp else {}, keys, s) for s, keys in schema.items()}
    output = _read_section(dict(cp["output"]), OUTPUT_KEYS, "output")
    cfg = ExperimentConfig(kind, exp["name"], exp["seed"], system, blocks.get("numerics", {}),
                           blocks.get("physics", {}), output, source)
    _cross_checks(cfg)
    return cfg


def _cross_checks(cfg: ExperimentConfig):
    n, p = cfg.numerics, cfg.physics
    if "rmin" in n and not n["rmax"] > n["rmin"]:
        raise ConfigError("[numerics] rmax: must exceed rmin")
    if "n_grid" in n and (n["n_grid"] < 64 or n["n_grid"] & (n["n_grid"] - 1)):
        raise ConfigError("[numerics] n_grid: must be a power of two >= 64")
    if cfg.kind == "propagate":
        if p["field"] in ("cw", "gaussian") and p["omega"] is None:
            raise ConfigError("[physics] omega: required when field is cw or gaussian")
        if p["field"] == "gaussian" and p["pulse_fwhm"] is None:
            raise ConfigError("[physics] pulse_fwhm: required when field is gaussian")
        if p["field"] == "tabulated" and not p["field_file"]:
            raise ConfigError("[physics] field_file: required when field is tabulated")
        if p["initial"] == "gaussian" and (p["center"] is None or p["width"] is None):
            raise ConfigError("[physics] center/width: required for a gaussian initial state")
    if cfg.kind == "flux-scan":
        try:
            tuple(int(v) for v in p["levels"])
        except ValueError:
            raise ConfigError("[physics] levels: expected comma-separated integers") from None
    if cfg.kind == "zn-scan" and not p["omega_max"] > p["omega_min"]:
        raise ConfigError("[physics] omega_max: must exceed omega_min")
    if cfg.kind == "oct":
        bad = [b for b in n["backends"] if b not in ("quantum", "semiclassical")]
        if bad or not n["backends"]:
            raise ConfigError("[numerics] backends: comma-separated subset of quantum, semiclassical")
    if cfg.kind == "hk-compare":
        try:
            vals = [int(v) for v in n["n_traj"]]
        except ValueError:
            raise ConfigError("[numerics] n_traj: expected comma-separated integers") from None
        if not vals or min(vals) < 1:
            raise ConfigError("[numerics] n_traj: must be >= 1")
    if cfg.kind == "ga":
        if n["population"] < 2:
            raise ConfigError("[numerics] population: must be >= 2")
        if n["generations"] < 1:
            raise ConfigError("[numerics] generations: must be >= 1")
        if not 0 <= n["elitism"] < n["population"]:
            raise ConfigError("[numerics] elitism: must lie in [0, population)")
    if cfg.kind in ("oct", "ga") and models.get_family(cfg.system["model"]).control_dipole is None:
        raise ConfigError(f"[system] model: '{cfg.system['model']}' has no control dipole")


def load(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_text(text, str(path))
