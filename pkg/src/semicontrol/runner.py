"""Experiment drivers behind `semicontrol run`.

Each driver reads a validated ExperimentConfig, writes CSV/text data into
the output directory and returns a flat summary dict. CSV files depend only
on the configuration and seed, never on timing or worker count.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import ga as ga_mod
from . import hk, models, nahk, zn
from . import oct as oc
from .config import ExperimentConfig
from .fields import CWField, GaussianPulse, TabulatedField
from .potentials import Morse, dress
from .quantum_grid import (
    EnergyObserver,
    FluxObserver,
    Grid,
    NormObserver,
    Wavefunction,
    absorber,
    fgh_eigenstates,
    propagate,
)
from .units import FS_AU, hartree_to_ev


def _f(v):
    return f"{float(v):.10e}"


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for r in rows:
            wr.writerow([x if isinstance(x, str) else str(x) if isinstance(x, (int, np.integer)) else _f(x)
                         for x in r])


def _grid(cfg, mass):
    n = cfg.numerics
    return Grid(n["rmin"], n["rmax"], n["n_grid"], mass)


def _ground_width(curve, center, mass):
    """Position spread of the harmonic ground state at `center`."""
    k = float(curve.derivative(np.array([center]), 2)[0])
    if k <= 0:
        raise ValueError(f"curve is not confining at R = {center}")
    return math.sqrt(1.0 / (2.0 * mass * math.sqrt(k / mass)))


def _field(p):
    kind = p["field"]
    if kind == "none" or (kind in ("cw", "gaussian") and p["amplitude"] == 0.0):
        return None
    if kind == "cw":
        return CWField(p["omega"], p["amplitude"])
    if kind == "gaussian":
        return GaussianPulse(p["omega"], p["amplitude"], p["pulse_center"], p["pulse_fwhm"])
    return TabulatedField.load(p["field_file"])


def _level_energy(cs, v):
    g = cs.curves[cs.ground_index]
    if isinstance(g, Morse):
        return float(g.levels(cs.mass, v)[v])
    lo, hi = cs.domain
    grid = Grid(lo, hi, 1024, cs.mass)
    return fgh_eigenstates(grid, g, v + 1)[v][0]


# --------------------------------------------------------------------------
# drivers
# --------------------------------------------------------------------------


def run_eigen(cfg: ExperimentConfig, out: Path):
    cs = cfg.model_system()
    p = cfg.physics
    grid = _grid(cfg, cs.mass)
    curve = cs.curves[p["surface"]]
    states = fgh_eigenstates(grid, curve, p["levels"])
    exact = curve.levels(cs.mass, p["levels"] - 1) if isinstance(curve, Morse) else None
    rows = []
    for v, (e, _) in enumerate(states):
        rows.append([v, e, hartree_to_ev(e)] + ([exact[v], e - exact[v]] if exact is not None else []))
    header = ["v", "E_au", "E_eV"] + (["E_morse_au", "diff_au"] if exact is not None else [])
    write_csv(out / "levels.csv", header, rows)
    write_csv(out / "wavefunctions.csv", ["R_au"] + [f"phi_{v}" for v in range(len(states))],
              zip(grid.x, *[phi for _, phi in states]))
    return {f"E_{v}_au": e for v, (e, _) in enumerate(states)}


def run_propagate(cfg: ExperimentConfig, out: Path):
    cs = cfg.model_system()
    n, p = cfg.numerics, cfg.physics
    grid = _grid(cfg, cs.mass)
    ns = cs.n_states
    if p["initial"] == "eigen":
        phi = fgh_eigenstates(grid, cs.curves[p["surface"]], p["v"] + 1)[p["v"]][1]
        psi0 = Wavefunction.on_surface(grid, phi, p["surface"], ns)
    else:
        psi0 = Wavefunction.gaussian(grid, p["center"], p["width"], p["momentum"], p["surface"], ns)
    field = _field(p)
    system = cs
    if p["rwa"]:
        if p["omega"] is None:
            raise ValueError("an RWA run needs omega")
        system = dress(cs, p["omega"], p["amplitude"])
    gamma = None if n["absorber_start"] is None else absorber(grid, n["absorber_start"], n["absorber_strength"])
    res = propagate(psi0, system, field, p["duration"], n["dt"], [NormObserver(cs.labels), EnergyObserver()],
                    stride=cfg.output["stride"], gamma=gamma)
    res.series.to_csv(out / "populations.csv", 1.0 / FS_AU, "t_fs")
    _write_wavepackets(out / "final_wavepackets.csv", grid.x, cs.labels, {"q": res.final.psi})
    pops = res.final.populations()
    return {**{f"P_{l}": float(v) for l, v in zip(cs.labels, pops)}, "absorbed": res.absorbed}


def _write_wavepackets(path, x, labels, sets):
    header = ["R_au"]
    cols = []
    for s, lab in enumerate(labels):
        for tag, psi in sets.items():
            header += [f"re_{tag}_{lab}", f"im_{tag}_{lab}", f"dens_{tag}_{lab}"]
            cols += [psi[s].real, psi[s].imag, np.abs(psi[s]) ** 2]
    write_csv(path, header, zip(x, *cols))


def run_flux(cfg: ExperimentConfig, out: Path):
    cs = cfg.model_system()
    n, p = cfg.numerics, cfg.physics
    grid = _grid(cfg, cs.mass)
    g = cs.ground_index
    w = dress(cs, p["omega"], p["amplitude"])
    field = CWField(p["omega"], p["amplitude"])
    channels = [c for c in range(cs.n_states) if c != g]
    gamma = absorber(grid, n["absorber_start"], n["absorber_strength"])
    levels = [int(v) for v in p["levels"]]
    states = fgh_eigenstates(grid, cs.curves[g], max(levels) + 1)
    summary = {}
    for v in levels:
        psi0 = Wavefunction.on_surface(grid, states[v][1], g, cs.n_states)
        obs = FluxObserver(grid, n["flux_at"], channels, cs.labels)
        res = propagate(psi0, w, field, p["duration"], n["dt"], [obs], stride=cfg.output["stride"], gamma=gamma)
        s = res.series
        t = s["t"]
        js = [s[f"j_{cs.labels[c]}"] for c in channels]
        big = [cumulative_trapezoid(j, t, initial=0.0) for j in js]
        header = ["t_ps"] + [f"J_{cs.labels[c]}" for c in channels] + [f"j_{cs.labels[c]}" for c in channels] \
            + ["inside"]
        write_csv(out / f"flux_v{v}.csv", header, zip(t / (1000.0 * FS_AU), *big, *js, s["inside"]))
        for c, J in zip(channels, big):
            summary[f"v{v}_J_{cs.labels[c]}"] = float(J[-1])
    return summary


def run_zn_scan(cfg: ExperimentConfig, out: Path):
    cs = cfg.model_system()
    n, p = cfg.numerics, cfg.physics
    g = cs.ground_index
    labels = dict(enumerate(cs.labels))
    if p["channels"]:
        try:
            channels = [cs.labels.index(c) for c in p["channels"]]
        except ValueError:
            raise ValueError(f"[physics] channels: labels must be among {', '.join(cs.labels)}") from None
    else:
        channels = [c for c in range(cs.n_states) if c != g]
    e_v = _level_energy(cs, p["v"])
    omegas = np.linspace(p["omega_min"], p["omega_max"], n["points"])
    rows = zn.simultaneous_blocking_scan(cs, e_v, omegas, channels, p["amplitude"], n["p_variant"],
                                         n["phase_variant"])
    zn.write_scan_csv(sorted(rows, key=lambda r: r.omega), out / "scan.csv", channels, labels)
    best = rows[0]
    summary = {"level_energy_au": e_v, "best_omega_eV": hartree_to_ev(best.omega), "best_score": best.score}
    w = dress(cs, best.omega, p["amplitude"])
    for c in range(cs.n_states):
        if c == g:
            continue
        summary[f"dist_{labels[c]}"] = best.distances.get(c, math.nan)
        try:
            nt = zn.NTCrossing.locate(w, (min(g, c), max(g, c)), p_variant=n["p_variant"],
                                      phase_variant=n["phase_variant"])
        except (zn.TopologyError, zn.ForbiddenPassageError):
            continue
        lo = max(nt.energy_window() + 1e-9, e_v - 0.01)
        es = np.linspace(lo, max(e_v + 0.01, lo + 0.01), p["energy_points"])
        nt_curve = zn.transmission_curve(nt, es)
        nt_curve.to_csv(out / f"transmission_{labels[c]}.csv")
        summary[f"P_{labels[c]}_at_level"] = nt.transmission(e_v)
    return summary


def _control_problem(cfg: ExperimentConfig, backend):
    cs = cfg.model_system()
    n, p = cfg.numerics, cfg.physics
    params = {k: v for k, v in cfg.system.items() if k != "model"}
    mu = models.control_dipole(cfg.system["model"], params)
    curve = cs.curves[cs.ground_index]
    center = p["center"] if p["center"] is not None else float(getattr(curve, "re", 0.0))
    width = _ground_width(curve, center, cs.mass)
    psi0 = hk.GaussianState(center, width)
    target = hk.GaussianState(center + p["target_shift"], width)
    hkp = hk.HKParams(gamma=n.get("hk_width_factor", 1.0) * psi0.gamma, n_traj=n["n_traj"], seed=cfg.seed,
                      sampling=n["sampling"], box_sigmas=n.get("box_sigmas", 5.0))
    return oc.ControlProblem(curve, mu, cs.mass, psi0, target, p["duration"], p["alpha"], backend=backend,
                             field_dt=n["field_dt"], grid=_grid(cfg, cs.mass), prop_dt=n["prop_dt"],
                             hk_params=hkp, hk_domain=cs.domain)


def nrmsd(a, b):
    """RMS of a - b over the range of the reference b."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.sqrt(np.mean((a - b) ** 2)) / (b.max() - b.min()))


def run_oct(cfg: ExperimentConfig, out: Path):
    p = cfg.physics
    summary = {}
    first = {}
    for backend in cfg.numerics["backends"]:
        prob = _control_problem(cfg, backend)
        guess = oc.guess_field(prob, p["guess_amplitude"], p["guess_omega"])
        hist = oc.run_oct(prob, guess, p["iterations"], p["tol"])
        hist.to_csv(out / f"history_{backend}.csv")
        last = hist.iterates[-1]
        oc.save_field(out / f"field_{backend}.txt", last.times, last.field)
        t_nodes = np.append(prob.times, prob.horizon)
        write_csv(out / f"overlap_{backend}.csv", ["t_fs", "overlap"], zip(t_nodes / FS_AU, last.overlap_curve))
        first[backend] = hist.iterates[1]
        summary[f"{backend}_fidelity"] = last.fidelity
        summary[f"{backend}_J"] = last.J
        summary[f"{backend}_monotone"] = hist.monotone
        summary[f"{backend}_pair_cost"] = sum(it.pair_cost for it in hist.iterates)
    if len(first) == 2:
        q, s = first["quantum"], first["semiclassical"]
        t_nodes = np.append(q.times, q.times[-1] + (q.times[1] - q.times[0]))
        write_csv(out / "first_iteration.csv",
                  ["t_fs", "overlap_quantum", "overlap_semiclassical", "field_quantum", "field_semiclassical"],
                  zip(t_nodes / FS_AU, q.overlap_curve, s.overlap_curve,
                      np.append(q.field, np.nan), np.append(s.field, np.nan)))
        summary["overlap_nrmsd"] = nrmsd(s.overlap_curve, q.overlap_curve)
        summary["field_nrmsd"] = nrmsd(s.field, q.field)
    return summary


def run_hk_compare(cfg: ExperimentConfig, out: Path):
    cs = cfg.model_system()
    n, p = cfg.numerics, cfg.physics
    grid = _grid(cfg, cs.mass)
    curve = cs.curves[cs.ground_index]
    state = hk.GaussianState(p["center"], p["width"], p["momentum"])
    psi0 = Wavefunction.gaussian(grid, p["center"], p["width"], p["momentum"])
    ref = propagate(psi0, cs.__class__(curves=[curve], dipoles={}, mass=cs.mass, domain=cs.domain), None,
                    p["duration"], n["grid_dt"]).final.psi[0]
    pes = hk.SurfacePES(curve, domain=cs.domain)

    def hk_run(nt, seed):
        ens = hk.sample_initial(state, hk.HKParams(n_traj=nt, seed=seed, sampling=n["sampling"]), cs.mass)
        hk.run(ens, pes, p["duration"], n["dt"])
        return hk.reconstruct(ens, grid.x)

    rows = []
    rec = None
    for nt in (int(v) for v in n["n_traj"]):
        rec = hk_run(nt, cfg.seed)
        # HK does not conserve the norm; it is reported in its own column
        norm = np.sum(np.abs(rec) ** 2) * grid.dx
        ov = abs(np.vdot(ref, rec) * grid.dx) ** 2 / norm
        l2 = math.sqrt(np.sum(np.abs(rec - ref) ** 2) * grid.dx)
        row = [nt, ov, l2, norm]
        if n["spread_seeds"]:
            # an independent sample isolates the Monte Carlo part of the error
            other = hk_run(nt, cfg.seed + 1)
            row.append(math.sqrt(np.sum(np.abs(rec - other) ** 2) * grid.dx))
        rows.append(row)
    write_csv(out / "hk_convergence.csv",
              ["n_traj", "overlap", "l2_error", "norm"] + (["seed_spread"] if n["spread_seeds"] else []), rows)
    _write_wavepackets(out / "wavefunction.csv", grid.x, ["ground"], {"q": ref[None], "sc": rec[None]})
    return {"overlap": rows[-1][1], "l2_error": rows[-1][2]}


def run_na_compare(cfg: ExperimentConfig, out: Path):
    cs = cfg.model_system()
    n, p = cfg.numerics, cfg.physics
    if cs.n_states < 2:
        raise ValueError("na-compare needs a model with at least two curves")
    grid = _grid(cfg, cs.mass)
    w = dress(cs, p["omega"], p["amplitude"])
    pulse = GaussianPulse(p["omega"], p["amplitude"], p["pulse_center"], p["pulse_fwhm"])
    psi0 = Wavefunction.gaussian(grid, p["center"], p["width"], p["momentum"], 0, cs.n_states)
    q = propagate(psi0, w, pulse, p["duration"], n["dt"], [NormObserver(cs.labels)], stride=cfg.output["stride"])
    pq = q.final.populations()
    state = hk.GaussianState(p["center"], p["width"], p["momentum"])
    ens = hk.sample_initial(state, hk.HKParams(n_traj=n["n_traj"], seed=cfg.seed, sampling=n["sampling"]), cs.mass)
    seeds = nahk.BranchEnsemble.from_ensemble(ens, state)
    bp = nahk.BranchParams(threshold=n["prune_threshold"], max_branches=n["max_branches"], p_variant=n["p_variant"])
    res = nahk.propagate_branching(seeds, w, pulse, p["duration"], n["hk_dt"], bp,
                                   record_every=cfg.output["stride"])
    ps = res.populations()
    pruned = res.report.pruned_probability
    rows = [[lab, pq[s], ps[s], ps[s] - pq[s]] for s, lab in enumerate(cs.labels)]
    rows.append(["pruned", 0.0, pruned, pruned])
    rows.append(["total", float(pq.sum()), float(ps.sum() + pruned), float(ps.sum() + pruned - pq.sum())])
    write_csv(out / "populations.csv", ["surface", "quantum", "semiclassical", "difference"], rows)
    q.series.to_csv(out / "quantum_series.csv", 1.0 / FS_AU, "t_fs")
    write_csv(out / "semiclassical_series.csv", ["t_fs"] + [f"pop_{l}" for l in cs.labels] + ["pruned"],
              ([r[0] / FS_AU, *r[1:]] for r in res.populations_series))
    psc = nahk.reconstruct_per_surface(res, grid.x)
    _write_wavepackets(out / "final_wavepackets.csv", grid.x, cs.labels, {"q": q.final.psi, "sc": psc})
    (out / "pruning.txt").write_text(res.report.text() + "\n")
    summary = {f"P_quantum_{l}": float(pq[s]) for s, l in enumerate(cs.labels)}
    summary.update({f"P_semiclassical_{l}": float(ps[s]) for s, l in enumerate(cs.labels)})
    summary["pruned"] = pruned
    return summary


def run_ga(cfg: ExperimentConfig, out: Path):
    n, p = cfg.numerics, cfg.physics
    prob = _control_problem(cfg, n["backend"])
    if p["parameterization"] == "sum_of_gaussians":
        gap = oc.vibrational_gap(prob)
        lo = p["omega_min"] if p["omega_min"] is not None else 0.5 * gap
        hi = p["omega_max"] if p["omega_max"] is not None else 1.5 * gap
        par = ga_mod.SumOfGaussians(p["components"], prob.horizon, p["max_amplitude"], (lo, hi))
    else:
        par = ga_mod.SplineKnots(p["components"], prob.horizon, p["max_amplitude"])
    gp = ga_mod.GAParams(population=n["population"], generations=n["generations"],
                         mutation_sigma=n["mutation_sigma"], tournament=n["tournament"], elitism=n["elitism"],
                         seed=cfg.seed, workers=n["workers"])
    res = ga_mod.ga_optimize(prob, par, gp)
    res.to_csv(out / "ga_history.csv")
    oc.save_field(out / "best_field.txt", prob.times, res.best_field)
    return {"best_fitness": res.best_fitness, "best_fidelity": res.best_fidelity,
            "evaluations": res.evaluations, "pair_cost": res.pair_cost}


DRIVERS = {
    "eigen": run_eigen,
    "propagate": run_propagate,
    "flux-scan": run_flux,
    "zn-scan": run_zn_scan,
    "oct": run_oct,
    "hk-compare": run_hk_compare,
    "na-compare": run_na_compare,
    "ga": run_ga,
}
