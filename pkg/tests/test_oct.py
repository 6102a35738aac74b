import math

import numpy as np
import pytest

from _systems import hd_problem
from semicontrol import hk, models
from semicontrol import oct as oc
from semicontrol.potentials import Harmonic, LinearDipole
from semicontrol.quantum_grid import Grid


def test_problem_validation():
    with pytest.raises(ValueError, match="alpha"):
        hd_problem(alpha=0.0)
    with pytest.raises(ValueError, match="horizon"):
        hd_problem(horizon_fs=-1.0)
    with pytest.raises(ValueError, match="backend"):
        hd_problem(backend="classical")
    p = hd_problem()
    with pytest.raises(ValueError, match="samples"):
        oc.zbr_iterate(p, np.zeros(3))
    with pytest.raises(ValueError, match="max_iters"):
        oc.run_oct(p, np.zeros(p.n_field), 0)


def test_already_solved_problem_keeps_zero_field():
    # coherent ground state of a harmonic well: phi_T = psi0 is stationary
    mass, k = 1000.0, 0.25
    sig = math.sqrt(1.0 / (2 * math.sqrt(k * mass)))
    g = hk.GaussianState(2.0, sig)
    p = oc.ControlProblem(Harmonic(k, 2.0, 0.0), LinearDipole(0.0, 1 / 6), mass, g, g, 200.0, 0.01, field_dt=0.25,
                          grid=Grid(0.0, 4.0, 128, mass))
    first = oc.evaluate(p, np.zeros(p.n_field))
    assert first.fidelity == pytest.approx(1.0, abs=1e-12)
    it = oc.zbr_iterate(p, np.zeros(p.n_field))
    assert np.max(np.abs(it.field)) < 1e-12
    assert it.fidelity == pytest.approx(1.0, abs=1e-12)


def test_field_replay_reproduces_stored_field():
    p = hd_problem()
    it = oc.zbr_iterate(p, oc.guess_field(p, 0.002), keep_states=True)
    replay = oc.replay_field(p, it)
    assert np.max(np.abs(replay - it.field)) <= 1e-12 * np.max(np.abs(it.field))
    with pytest.raises(ValueError, match="keep_states"):
        oc.replay_field(p, oc.zbr_iterate(p, it.field))


def test_replay_on_semiclassical_backend():
    p = hd_problem(backend="semiclassical", horizon_fs=2.0)
    it = oc.zbr_iterate(p, oc.guess_field(p, 0.002), keep_states=True)
    assert np.max(np.abs(oc.replay_field(p, it) - it.field)) <= 1e-12 * np.max(np.abs(it.field))


def test_quantum_zbr_is_monotone():
    p = hd_problem(horizon_fs=20.0)
    hist = oc.run_oct(p, oc.guess_field(p, 0.002), 6)
    assert hist.monotone
    assert np.all(np.diff(hist.J) >= -1e-9)
    assert hist.iterates[-1].fidelity > hist.iterates[0].fidelity


def test_large_penalty_leaves_field_free_dynamics():
    p = hd_problem(alpha=1e3)
    free = oc.evaluate(p, np.zeros(p.n_field))
    it = oc.zbr_iterate(p, np.zeros(p.n_field))
    assert np.max(np.abs(it.field)) < 1e-4
    assert it.fidelity == pytest.approx(free.fidelity, abs=1e-4)


def test_single_trajectory_field_closed_form():
    # with one coherent state per ensemble and a linear dipole mu0 + mu1 R,
    # eps = -(1/alpha) |a b <g1|g2>|^2 mu1 (p1 - p2) / (2 gamma)
    p = hd_problem(backend="semiclassical", n_traj=1)
    b = p.make_backend()
    phi = hk.Ensemble([2.0], [3.0], [0.6 + 0.2j], 12.0, p.mass)
    chi = hk.Ensemble([2.3], [-1.5], [0.3 - 0.5j], 12.0, p.mass)
    eps = oc.field_value(*b.overlaps(phi, chi), p.alpha)
    ov = hk.gaussian_overlap(2.0, 3.0, 12.0, 2.3, -1.5, 12.0)
    mu1 = p.dipole.mu1
    expect = -abs(phi.amplitudes[0] * chi.amplitudes[0] * ov) ** 2 * mu1 * (3.0 + 1.5) / (2 * 12.0) / p.alpha
    assert eps == pytest.approx(expect, rel=1e-12)
    assert b.counter.pairs == 1


def test_semiclassical_pair_cost_counts_every_field_point():
    p = hd_problem(backend="semiclassical", horizon_fs=1.0, n_traj=30)
    n = len(p.make_backend().initial())  # the box lattice rounds N to a square
    it = oc.zbr_iterate(p, np.zeros(p.n_field))
    # N_phi * N_chi per field point plus N per target projection
    assert it.pair_cost == p.n_field * n * n + (p.n_field + 1) * n


def test_semiclassical_ensembles_must_share_time():
    p = hd_problem(backend="semiclassical", n_traj=5)
    b = p.make_backend()
    with pytest.raises(ValueError, match="different times"):
        b.overlaps(b.initial(), b.target())


def test_non_finite_field_raises():
    p = hd_problem(horizon_fs=1.0)
    with pytest.raises(FloatingPointError, match="non-finite"):
        oc.zbr_iterate(p, np.full(p.n_field, np.nan))


def test_field_save_load_and_piecewise_lookup(tmp_path):
    p = hd_problem(horizon_fs=1.0)
    eps = oc.guess_field(p, 0.002)
    oc.save_field(tmp_path / "f.txt", p.times, eps)
    t, e = oc.load_field(tmp_path / "f.txt")
    assert np.array_equal(t, p.times) and np.array_equal(e, eps)
    it = oc.evaluate(p, eps)
    f = it.as_field()
    assert f(p.times[3] + 0.4 * p.dt_field) == eps[3]
    assert f(p.horizon + 1.0) == 0.0
    assert f.fluence() == pytest.approx(it.fluence, rel=1e-14)


def test_history_csv(tmp_path):
    p = hd_problem(horizon_fs=2.0)
    hist = oc.run_oct(p, oc.guess_field(p, 0.002), 2)
    hist.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "iter,J,fidelity,fluence,pair_cost" and len(lines) == 4


def test_guess_field_is_resonant_with_the_fundamental_gap():
    p = hd_problem()
    cs = models.build_model_system("hd_plus")
    e = cs.curves[0].levels(cs.mass, 1)
    assert oc.vibrational_gap(p) == pytest.approx(e[1] - e[0], rel=1e-6)
