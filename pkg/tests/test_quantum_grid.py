import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semicontrol import models
from semicontrol.fields import CWField, GaussianPulse, TabulatedField, ZeroField
from semicontrol.potentials import Harmonic, Linear, Morse, dress
from semicontrol.quantum_grid import (
    EnergyObserver,
    FluxObserver,
    Grid,
    GridHamiltonian,
    NormObserver,
    OverlapObserver,
    PropagationError,
    SnapshotObserver,
    Wavefunction,
    absorber,
    expectation,
    fgh_eigenstates,
    flux_probe,
    overlap,
    propagate,
    split_step,
    write_snapshot,
)
from semicontrol.units import fs_to_au, nm_to_omega


def test_grid_validation():
    with pytest.raises(ValueError, match="power of two"):
        Grid(0, 1, 100, 1.0)
    with pytest.raises(ValueError, match="power of two"):
        Grid(0, 1, 32, 1.0)
    with pytest.raises(ValueError, match="r_max"):
        Grid(1, 0, 64, 1.0)
    g = Grid(-2.0, 2.0, 64, 1.0)
    assert g.dx == pytest.approx(4.0 / 64)
    assert g.x[0] == -2.0 and g.x.size == 64
    with pytest.raises(ValueError):
        g.index(3.0)


def test_tabulated_field_contract():
    f = TabulatedField([0.0, 1.0, 2.0], [0.0, 2.0, 0.0])
    assert f(0.5) == pytest.approx(1.0)
    assert f(-1.0) == 0.0 and f(3.0) == 0.0
    with pytest.raises(ValueError, match="increasing"):
        TabulatedField([0.0, 0.0, 1.0], [1.0, 1.0, 1.0])


def test_gaussian_pulse_fwhm_is_intensity_fwhm():
    p = GaussianPulse(0.0, 1.0, 0.0, 10.0)
    assert p.envelope(5.0) ** 2 == pytest.approx(0.5)


def test_harmonic_fgh_levels():
    m, w = 1224.1, 0.01
    g = Grid(-3.0, 3.0, 256, m)
    e = np.array([s[0] for s in fgh_eigenstates(g, Harmonic(m * w * w), 11)])
    assert np.allclose(e / (w * (np.arange(11) + 0.5)), 1.0, rtol=0, atol=1e-8)


def test_eigenstates_orthonormal_and_sign_fixed():
    cs = models.build_model_system("hd_plus")
    g = Grid(0.5, 8.5, 256, cs.mass)
    states = fgh_eigenstates(g, cs.curves[0], 6)
    wfs = [Wavefunction(g, phi) for _, phi in states]
    for i, a in enumerate(wfs):
        assert overlap(a, a).real == pytest.approx(1.0, abs=1e-12)
        for b in wfs[i + 1:]:
            assert abs(overlap(a, b)) < 1e-10
    for _, phi in states:
        a = np.abs(phi)
        first = np.nonzero((a[1:-1] >= a[:-2]) & (a[1:-1] >= a[2:]) & (a[1:-1] > 0.01 * a.max()))[0][0] + 1
        assert phi[first] > 0


def test_fgh_rejects_unbound_request():
    cs = models.build_model_system("hd_plus")
    g = Grid(0.5, 8.5, 128, cs.mass)
    with pytest.raises(ValueError, match="bound"):
        fgh_eigenstates(g, cs.curves[0], 60)


def test_target_mean_position_is_displaced_by_one_bohr():
    cs = models.build_model_system("hd_plus")
    g = Grid(0.5, 8.5, 256, cs.mass)
    target = Wavefunction.gaussian(g, 2.0 + 1.0, 0.2093)
    assert expectation(target, g.x).real == pytest.approx(3.0, abs=1e-10)
    assert overlap(target, target).real == pytest.approx(1.0, abs=1e-12)


def test_overlap_grid_mismatch():
    a = Wavefunction.gaussian(Grid(0, 10, 64, 1.0), 5, 1)
    b = Wavefunction.gaussian(Grid(0, 10, 128, 1.0), 5, 1)
    with pytest.raises(ValueError, match="grid"):
        overlap(a, b)


def free_gaussian(x, x0, s, p, m, t):
    z = s * s + 0.5j * t / m
    amp = np.exp(-((x - x0 - p * t / m) ** 2) / (4 * z) + 1j * p * (x - x0))
    return amp / math.sqrt(np.sum(np.abs(amp) ** 2) * (x[1] - x[0]))


def test_free_gaussian_spreading():
    g = Grid(-60.0, 90.0, 2048, 1.0)
    psi = Wavefunction.gaussian(g, 0.0, 0.8, momentum=1.5)
    r = propagate(psi, GridHamiltonian(g, np.zeros(g.n)), None, 10.0, 0.01, stride=1000)
    exact = Wavefunction(g, free_gaussian(g.x, 0.0, 0.8, 1.5, 1.0, 10.0))
    assert len(r.series) == 2
    assert abs(overlap(exact, r.final)) ** 2 >= 1 - 1e-8


def test_split_step_matches_propagate():
    cs = models.build_model_system("hd_plus")
    g = Grid(0.5, 8.5, 128, cs.mass)
    psi = Wavefunction.gaussian(g, 2.4, 0.2)
    w = cs.curves[0](g.x)[None, None, :]
    a = psi
    for _ in range(20):
        a = split_step(a, w, 1.0)
    b = propagate(psi, GridHamiltonian(g, w), None, 20.0, 1.0).final
    assert np.allclose(a.psi, b.psi, atol=1e-13)
    assert a.t == b.t == 20.0


def test_strang_second_order():
    cs = models.build_model_system("hd_plus")
    g = Grid(0.5, 8.5, 256, cs.mass)
    psi = Wavefunction.gaussian(g, 3.0, 0.2)
    ham = GridHamiltonian.single(g, cs.curves[0])
    T, dt = 400.0, 8.0
    ref = propagate(psi, ham, None, T, dt / 8).final
    e1 = np.linalg.norm(propagate(psi, ham, None, T, dt).final.psi - ref.psi)
    e2 = np.linalg.norm(propagate(psi, ham, None, T, dt / 2).final.psi - ref.psi)
    assert 3.0 < e1 / e2 < 5.0


def test_field_free_norm_and_energy_short_run():
    cs = models.build_model_system("hd_plus")
    g = Grid(0.5, 8.5, 256, cs.mass)
    psi = Wavefunction.gaussian(g, 3.0, 0.2093)
    r = propagate(psi, GridHamiltonian.single(g, cs.curves[0]), None, 100.0, 0.05,
                  [NormObserver(["g"]), EnergyObserver()], stride=100)
    assert np.max(np.abs(r.series["norm"] - 1)) < 1e-12
    e = r.series["energy"]
    assert np.max(np.abs(e / e[0] - 1)) < 1e-8


def test_decoupled_surfaces_keep_populations():
    cs = models.build_model_system("h2_plus")
    g = Grid(0.5, 30.0, 512, cs.mass)
    psi = Wavefunction.gaussian(g, 5.0, 0.5, n_surfaces=2)
    psi.psi[1] = psi.psi[0] * 0.5
    psi = psi.normalized()
    p0 = psi.populations()
    r = propagate(psi, cs, None, 200.0, 0.5, [NormObserver(cs.labels)])
    for i, lab in enumerate(cs.labels):
        assert np.max(np.abs(r.series[f"pop_{lab}"] - p0[i])) < 1e-12


def test_zero_amplitude_field_equals_field_free():
    cs = models.build_model_system("h2_plus")
    g = Grid(0.5, 30.0, 512, cs.mass)
    psi = Wavefunction.gaussian(g, 5.0, 0.5, n_surfaces=2)
    pulse = GaussianPulse(nm_to_omega(515.0), 0.0, 200.0, fs_to_au(10.0))
    a = propagate(psi, cs, pulse, 400.0, 0.1).final
    b = propagate(psi, cs, None, 400.0, 0.1).final
    assert np.allclose(a.psi, b.psi, atol=1e-13)
    assert a.populations()[1] < 1e-12


def test_rwa_and_explicit_field_agree_for_the_pulse_problem():
    cs = models.build_model_system("h2_plus")
    g = Grid(0.5, 30.0, 1024, cs.mass)
    omega, fwhm = nm_to_omega(515.0), fs_to_au(10.0)
    t_final = fs_to_au(20.0)
    e0 = 0.01
    pulse = GaussianPulse(omega, e0, 0.5 * t_final, fwhm)
    psi = Wavefunction.gaussian(g, 5.0, 0.5, n_surfaces=2)
    gam = absorber(g, 24.0)
    lab = propagate(psi, cs, pulse, t_final, 0.1, gamma=gam).final.populations()
    rwa = propagate(psi, dress(cs, omega, e0), pulse, t_final, 0.5, gamma=gam).final.populations()
    assert lab[1] > 0.05
    assert np.all(np.abs(lab - rwa) <= 0.02)


def test_nan_aborts_with_location():
    g = Grid(0.0, 10.0, 64, 1.0)
    psi = Wavefunction.gaussian(g, 5.0, 1.0)
    bad = np.zeros(g.n)
    bad[17] = np.nan
    with pytest.raises(PropagationError, match="grid index 17"):
        propagate(psi, GridHamiltonian(g, bad), None, 1.0, 0.1)
    blowup = GridHamiltonian(g, np.zeros(g.n), np.ones(g.n), lambda t: np.nan if t > 0.5 else 0.0)
    with pytest.raises(PropagationError, match="step"):
        propagate(psi, blowup, None, 1.0, 0.1)


def test_zero_strength_absorber_is_identity():
    g = Grid(0.0, 20.0, 256, 1.0)
    psi = Wavefunction.gaussian(g, 5.0, 1.0, momentum=1.0)
    ham = GridHamiltonian(g, np.zeros(g.n))
    a = propagate(psi, ham, None, 5.0, 0.05, gamma=absorber(g, 15.0, strength=0.0))
    b = propagate(psi, ham, None, 5.0, 0.05)
    assert np.array_equal(a.final.psi, b.final.psi)
    assert a.absorbed == 0.0


@pytest.mark.parametrize("p0", [10.0, 20.0, 40.0])
def test_default_absorber_barely_reflects(p0):
    m = 918.0
    g = Grid(0.0, 60.0, 2048, m)
    psi = Wavefunction.gaussian(g, 15.0, 1.5, momentum=p0)
    gam = absorber(g, 30.0)
    r = propagate(psi, GridHamiltonian(g, np.zeros(g.n)), None, 2 * 45.0 * m / p0, 1.0, gamma=gam)
    left = np.sum(np.abs(r.final.psi[0, g.x < 30.0]) ** 2) * g.dx
    assert left < 1e-4
    # norm lost equals accumulated absorption
    assert r.final.norm() + r.absorbed == pytest.approx(1.0, abs=1e-6)


def test_stationary_eigenstate_has_no_flux():
    cs = models.build_model_system("hd_plus")
    g = Grid(0.5, 8.5, 256, cs.mass)
    e, phi = fgh_eigenstates(g, cs.curves[0], 3)[2]
    snaps = [Wavefunction(g, phi * np.exp(-1j * e * t), t) for t in np.linspace(0.0, 500.0, 11)]
    rec = flux_probe(snaps, 2.5, 0)
    assert np.max(np.abs(rec.j)) < 1e-10


def test_outgoing_packet_flux_bookkeeping():
    m = 918.0
    g = Grid(0.0, 60.0, 2048, m)
    psi = Wavefunction.gaussian(g, 10.0, 1.0, momentum=12.0)
    gam = absorber(g, 35.0)
    obs = FluxObserver(g, 25.0, [0], ["a"])
    r = propagate(psi, GridHamiltonian(g, Linear(0.0)(g.x)), None, 6000.0, 1.0, [obs], gamma=gam)
    from semicontrol.quantum_grid import FluxRecord

    rec = FluxRecord.from_current(25.0, 0, r.series["t"], r.series["j_a"])
    assert np.all(np.diff(rec.J) >= -1e-12)
    assert rec.J[-1] == pytest.approx(1.0, abs=1e-3)
    inside = r.series["inside"]
    assert np.max(np.abs(rec.J + inside - 1.0)) < 1e-3


def test_flux_probe_errors():
    g = Grid(0.0, 10.0, 64, 1.0)
    psi = Wavefunction.gaussian(g, 5.0, 1.0)
    with pytest.raises(ValueError, match="outside"):
        flux_probe([psi], 12.0, 0)
    with pytest.raises(ValueError):
        flux_probe([], 5.0, 0)


def test_csv_and_snapshot_output(tmp_path):
    cs = models.build_model_system("hd_plus")
    g = Grid(0.5, 8.5, 64, cs.mass)
    psi = Wavefunction.gaussian(g, 2.5, 0.3)
    r = propagate(psi, GridHamiltonian.single(g, cs.curves[0]), None, 10.0, 1.0,
                  [NormObserver(["X"]), OverlapObserver(psi)], stride=5)
    path = tmp_path / "s.csv"
    r.series.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t,norm,pop_X,overlap"
    assert len(lines) == 1 + 3
    (snap,) = write_snapshot(r.final, tmp_path / "psi", ["X"])
    data = np.loadtxt(snap)
    assert data.shape == (64, 3)
    assert np.allclose(data[:, 1] + 1j * data[:, 2], r.final.psi[0])


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 0.05), st.floats(0.0, 0.3), st.floats(-3.0, 3.0))
def test_norm_conserved_under_cw_driving(amp, omega, p0):
    cs = models.build_model_system("h2_plus")
    g = Grid(0.5, 30.0, 256, cs.mass)
    psi = Wavefunction.gaussian(g, 5.0, 0.5, momentum=p0, n_surfaces=2)
    r = propagate(psi, cs, CWField(omega, amp), 50.0, 0.5)
    assert abs(r.final.norm() - 1.0) < 1e-12


def test_zero_field_object():
    assert ZeroField()(np.array([1.0, 2.0])).tolist() == [0.0, 0.0]
    assert Morse(0.1, 1.0, 2.0)(2.0) == pytest.approx(0.0)
