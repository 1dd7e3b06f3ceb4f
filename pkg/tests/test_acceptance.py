"""End-to-end validation gate.

Each test is one acceptance criterion and prints one pass/fail line
under pytest -v.  Closed-form references come from the oracle helpers
in the spectra module plus the analytic transmission and spectral
density forms in experiments; tolerances are stated inline.
"""

import time

import numpy as np
import pytest
from scipy.linalg import expm

from wavemon.coupling import (
    PRESETS,
    WaveguideGeometry,
    coupling_below,
    coupling_full_above,
    coupling_simplified,
    coupling_tables,
    two_pair_layout,
    uniform_layout,
)
from wavemon.experiments import (
    analytic_transmission,
    full_width_half_maximum,
    power_spectrum,
    pulsed_spectroscopy,
    spectral_peaks,
    superradiant_burst,
    transmission_sweep,
)
from wavemon.fock import SiteModel, enumerate_basis
from wavemon.liouville import devectorize, krylov_step, vectorize
from wavemon.spectra import (
    build_h_eff,
    collective_channels,
    decay_channels,
    diagonalize,
    dicke_multiplicity,
    harmonic_oracle,
    qubit_dicke_oracle,
    two_pair_oracle,
)

P = PRESETS["table1"]
W0 = P["omega0"]
GAMMA = P["gamma"]
J_CAP = P["capacitive_j"]
U = P["anharmonicity"]
FLUX = 2 * np.pi * 700.0


def _in_phase_spectrum(kind, L, anharm, d, at_most=None):
    site = SiteModel(kind, W0, anharm)
    layout = uniform_layout(L, site, GAMMA, 0.0)
    basis = enumerate_basis(L, d, at_most=at_most)
    tables = coupling_tables(layout, d)
    spectrum = diagonalize(build_h_eff(basis, layout, tables))
    return layout, basis, tables, spectrum


def _pair_cap():
    cap = np.zeros((4, 4))
    cap[0, 1] = cap[1, 0] = J_CAP
    cap[2, 3] = cap[3, 2] = J_CAP
    return cap


def _rates_by_manifold(spectrum):
    out = {}
    for i in range(spectrum.n_states):
        out.setdefault(int(spectrum.manifolds[i]), []).append(
            float(spectrum.decay_rates[i]))
    return out


def test_criterion_01_qubit_dicke_spectrum():
    start = time.monotonic()
    _, _, _, spectrum = _in_phase_spectrum("qubit", 8, 0.0, 2)
    elapsed = time.monotonic() - start
    assert spectrum.n_states == 256

    groups = {}
    for i in range(spectrum.n_states):
        groups.setdefault(int(spectrum.manifolds[i]), []).append(
            (float(spectrum.energies[i]), float(spectrum.decay_rates[i])))
    for n_exc in range(9):
        oracle = []
        m_z = 2 * n_exc - 8
        for s in range(8, abs(m_z) - 1, -2):
            _, rate = qubit_dicke_oracle(8, s, m_z, W0, GAMMA)
            oracle += [rate] * dicke_multiplicity(8, s)
        got = groups[n_exc]
        assert len(got) == len(oracle)
        for energy, _ in got:
            assert abs(energy - n_exc * W0) <= 1e-9 * max(n_exc * W0, W0)
        for num, ora in zip(sorted(r for _, r in got), sorted(oracle)):
            assert abs(num - ora) <= 1e-9 * max(abs(ora), GAMMA)
        brightest = max(r for _, r in got)
        expected = n_exc * (8 - n_exc + 1) * GAMMA
        assert abs(brightest - expected) <= 1e-9 * max(expected, GAMMA)
    assert elapsed < 10.0


def test_criterion_02_harmonic_collective_spectrum():
    _, _, _, spectrum = _in_phase_spectrum("harmonic", 4, 0.0, 5, at_most=4)
    lams = {}
    for i in range(spectrum.n_states):
        lams.setdefault(int(spectrum.manifolds[i]), []).append(
            complex(spectrum.eigenvalues[i]))
    rates = _rates_by_manifold(spectrum)
    for n_exc in range(5):
        nums = np.array(lams[n_exc])
        oracle = harmonic_oracle(4, n_exc, W0, GAMMA)
        assert len(nums) == sum(mult for _, mult in oracle)
        for lam_o, mult in oracle:
            dist = np.abs(nums - lam_o)
            members = dist <= 1e-3 * GAMMA
            assert int(members.sum()) == mult
            assert dist[members].max() <= 1e-9 * max(abs(lam_o), GAMMA)
        if n_exc > 0:
            brightest = max(rates[n_exc])
            expected = n_exc * 4 * GAMMA
            assert abs(brightest - expected) <= 1e-9 * expected


def test_criterion_03_dark_state_existence_contrast():
    failures = []
    _, _, _, spectrum = _in_phase_spectrum("qubit", 4, 0.0, 2, at_most=4)
    for n_exc, rates in _rates_by_manifold(spectrum).items():
        if n_exc > 2 and min(rates) < 1e-6 * GAMMA:
            failures.append(
                f"qubit manifold {n_exc} has a dark state "
                f"(min Gamma = {min(rates) / GAMMA:.3e} gamma)")
    for kind, anharm in (("harmonic", 0.0), ("transmon", U)):
        _, _, _, spectrum = _in_phase_spectrum(kind, 4, anharm, 5, at_most=4)
        for n_exc, rates in _rates_by_manifold(spectrum).items():
            if 1 <= n_exc <= 4 and min(rates) >= 1e-6 * GAMMA:
                failures.append(
                    f"{kind} manifold {n_exc} has no dark state "
                    f"(min Gamma = {min(rates) / GAMMA:.4f} gamma)")
    assert not failures, "; ".join(failures)


def test_criterion_04_two_site_bosonic_dark_state():
    _, basis, _, spectrum = _in_phase_spectrum("harmonic", 2, 0.0, 3,
                                               at_most=2)
    idx = [i for i in range(spectrum.n_states)
           if spectrum.manifolds[i] == 2]
    darkest = min(idx, key=lambda i: spectrum.decay_rates[i])
    target = np.zeros(basis.size, dtype=complex)
    target[basis.position((2, 0))] = 0.5
    target[basis.position((1, 1))] = -np.sqrt(2.0) / 2.0
    target[basis.position((0, 2))] = 0.5
    overlap = abs(np.vdot(spectrum.right[:, darkest], target))
    assert overlap >= 1.0 - 1e-9


def test_criterion_05_two_pair_eigenvalues_and_collision():
    deltas = np.linspace(0.0, 10 * GAMMA, 101)
    cap = _pair_cap()
    basis = enumerate_basis(4, 2, at_most=1)
    worst = 0.0
    gaps = []
    for delta in deltas:
        layout = two_pair_layout(W0, GAMMA, delta, U, "transmon")
        tables = coupling_tables(layout, 2)
        h = build_h_eff(basis, layout, tables, cap, frame_frequency=W0)
        spectrum = diagonalize(h)
        lams = np.array([spectrum.eigenvalues[i] + W0
                         for i in range(spectrum.n_states)
                         if spectrum.manifolds[i] == 1])
        picks = []
        for oracle in two_pair_oracle(W0 + delta / 2, W0 - delta / 2,
                                      J_CAP, GAMMA):
            nearest = lams[np.argmin(np.abs(lams - oracle))]
            worst = max(worst, abs(nearest - oracle) / abs(oracle))
            picks.append(nearest)
        gaps.append(abs(picks[0] - picks[1]))
    assert worst <= 1e-9
    step = deltas[1] - deltas[0]
    collision = deltas[int(np.argmin(gaps))]
    assert abs(collision - 2 * GAMMA) <= step + 1e-9 * GAMMA


def test_criterion_06_transmission_oracle_grid():
    delta = np.linspace(-10 * GAMMA, 10 * GAMMA, 41)
    detuning = np.linspace(-10 * GAMMA, 10 * GAMMA, 41)
    out = transmission_sweep(delta, W0 - detuning, FLUX, kind="transmon",
                             omega0=W0, gamma=GAMMA, j_cap=J_CAP,
                             anharmonicity=U, kappa=0.0, d=3, at_most=2,
                             n_jobs=1)
    num = out.values["transmission_sq"]
    assert not np.isnan(num).any()
    dd, tt = np.meshgrid(delta, detuning, indexing="ij")
    ana = analytic_transmission(tt, dd, J_CAP, GAMMA)
    assert np.abs(num - ana).max() <= 0.01

    step = delta[1] - delta[0]
    for col, det_j in enumerate(detuning):
        for zero in (2 * (det_j + J_CAP), -2 * (det_j + J_CAP)):
            if abs(zero) > 9.0 * GAMMA or abs(zero) < step:
                continue
            window = np.abs(delta - zero) <= 1.5 * GAMMA
            row = num[:, col]
            found = np.flatnonzero(window)[int(np.argmin(row[window]))]
            assert abs(delta[found] - zero) <= step + 1e-9 * GAMMA


def test_criterion_07_power_spectrum_exceptional_points():
    def peak_count(delta_over_gamma):
        result = power_spectrum(delta_over_gamma * GAMMA, FLUX,
                                kind="transmon", omega0=W0, gamma=GAMMA,
                                j_cap=0.0, anharmonicity=U, kappa=0.0)
        return len(spectral_peaks(result.omega, result.magnitude))

    target = 2 * np.sqrt(2.0)
    scan = [2.5, 2.6, 2.7, 2.8, 2.9, 3.0, 3.1]
    for sign in (1.0, -1.0):
        counts = [peak_count(sign * s) for s in scan]
        assert counts[0] == 1 and counts[-1] == 2
        assert all(a <= b for a, b in zip(counts, counts[1:]))
        split = next(i for i in range(len(scan) - 1)
                     if counts[i] == 1 and counts[i + 1] == 2)
        onset = 0.5 * (scan[split] + scan[split + 1])
        assert abs(onset - target) <= 0.05 * target

    result = power_spectrum(0.0, FLUX, kind="transmon", omega0=W0,
                            gamma=GAMMA, j_cap=J_CAP, anharmonicity=U,
                            kappa=0.0)
    width = full_width_half_maximum(result.omega, result.psd)
    assert abs(width - 4 * GAMMA) <= 0.1 * 4 * GAMMA


def test_criterion_08_superradiant_burst_properties():
    t_grid = np.linspace(0.0, 3.0 / GAMMA, 400)
    qubit = superradiant_burst(SiteModel("qubit", W0), 4, (1,) * 4,
                               t_grid, GAMMA)
    peak_q = int(np.argmax(qubit.intensity_dissipator))
    assert peak_q > 0
    assert qubit.intensity_dissipator[peak_q] > \
        qubit.intensity_dissipator[0]

    harmonic = superradiant_burst(SiteModel("harmonic", W0), 4, (1,) * 4,
                                  t_grid, GAMMA)
    assert np.all(np.diff(harmonic.intensity_dissipator) < 0)
    assert abs(harmonic.occupation[-1] - 3.0) <= 1e-3

    assert U == pytest.approx(8.72 * GAMMA, rel=1e-12)
    transmon = superradiant_burst(SiteModel("transmon", W0, U), 4,
                                  (1,) * 4, t_grid, GAMMA)
    peak_t = int(np.argmax(transmon.intensity_dissipator))
    assert t_grid[peak_t] > t_grid[peak_q]


def test_criterion_09_pulsed_spectroscopy_features():
    dark = W0 + J_CAP
    baseline = dark - 25 * GAMMA
    low_window = [dark + GAMMA * r for r in (-13.7, -13.56, -13.4)]
    kwargs = dict(omega0=W0, gamma=GAMMA, j_cap=J_CAP, anharmonicity=U,
                  n_jobs=1)

    phi0 = pulsed_spectroscopy((0.0,), [baseline, dark] + low_window,
                               kind="transmon", **kwargs)
    v0 = phi0.values["ground_population"][0]
    dip0 = v0[0] - v0[1]
    assert dip0 > 0.05
    feature = max(abs(x - v0[0]) for x in v0[2:])
    assert feature > 0.05

    phi_pi = pulsed_spectroscopy((np.pi,), [baseline, dark],
                                 kind="transmon", **kwargs)
    v_pi = phi_pi.values["ground_population"][0]
    assert abs(v_pi[0] - v_pi[1]) < 0.1 * dip0

    qubit = pulsed_spectroscopy((0.0,), [baseline] + low_window,
                                kind="qubit", **kwargs)
    v_q = qubit.values["ground_population"][0]
    assert max(abs(x - v_q[0]) for x in v_q[1:]) < 0.1 * feature

    harmonic = pulsed_spectroscopy(
        (0.0,), [baseline, dark, dark - 13.56 * GAMMA, dark - 5 * GAMMA],
        kind="harmonic", **kwargs)
    v_h = harmonic.values["ground_population"][0]
    dip_h = v_h[0] - v_h[1]
    assert dip_h > 0.05
    assert max(abs(v_h[2] - v_h[0]), abs(v_h[3] - v_h[0])) < 0.1 * dip_h


def test_criterion_10_solver_correctness():
    rng = np.random.default_rng(20260821)
    worst_rel = 0.0
    worst_trace = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 11))
        h = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        h = 0.5 * (h + h.conj().T)
        eye = np.eye(n)
        liou = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
        for _ch in range(2):
            c = (rng.normal(size=(n, n))
                 + 1j * rng.normal(size=(n, n))) / np.sqrt(2 * n)
            cdc = c.conj().T @ c
            liou += (np.kron(c.conj(), c) - 0.5 * np.kron(eye, cdc)
                     - 0.5 * np.kron(cdc.T, eye))
        rho = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        rho = rho @ rho.conj().T
        rho /= np.trace(rho).real
        r = vectorize(rho)
        dt = 4.0 / np.linalg.norm(liou, 2)
        exact = expm(liou * dt) @ r
        stepped = krylov_step(liou, r, dt)
        worst_rel = max(worst_rel,
                        np.linalg.norm(stepped - exact)
                        / np.linalg.norm(exact))
        for _step in range(5):
            r = krylov_step(liou, r, dt)
            worst_trace = max(worst_trace,
                              abs(np.trace(devectorize(r)) - 1.0))
    assert worst_rel <= 1e-8
    assert worst_trace <= 1e-8

    systems = [_in_phase_spectrum("qubit", 8, 0.0, 2)[1:],
               _in_phase_spectrum("harmonic", 4, 0.0, 5, at_most=4)[1:],
               _in_phase_spectrum("transmon", 4, U, 5, at_most=4)[1:]]
    layout = two_pair_layout(W0, GAMMA, 3 * GAMMA, U, "transmon")
    basis = enumerate_basis(4, 3, at_most=2)
    tables = coupling_tables(layout, 3)
    h = build_h_eff(basis, layout, tables, _pair_cap())
    systems.append((basis, tables, diagonalize(h)))

    for basis, tables, spectrum in systems:
        gram = spectrum.left.conj().T @ spectrum.right
        off = gram - np.diag(np.diag(gram))
        assert np.abs(off).max() <= 1e-8
        assert np.allclose(np.diag(gram), spectrum.norms,
                           rtol=1e-8, atol=1e-12)
        channels = collective_channels(tables, basis)
        table = decay_channels(spectrum, channels)
        totals = table.total_out()
        scale = max(float(spectrum.decay_rates.max()), GAMMA)
        assert np.abs(totals - spectrum.decay_rates).max() <= 1e-8 * scale
        assert table.max_imag <= 1e-8 * scale


def test_criterion_11_coupling_coefficient_limits():
    site = SiteModel("harmonic", W0)

    geom = WaveguideGeometry.from_cutoff(1e-4 * W0)
    layout = uniform_layout(3, site, GAMMA, 0.7, a=geom.a)
    worst = 0.0
    for m in range(2):
        for n in range(2):
            for j in range(3):
                for k in range(3):
                    g_full, j_full = coupling_full_above(geom, layout,
                                                         m, j, n, k)
                    g_simp, j_simp = coupling_simplified(layout, m, j, n, k)
                    scale = max(abs(g_simp), abs(j_simp), GAMMA)
                    worst = max(worst, abs(g_full - g_simp) / scale,
                                abs(j_full - j_simp) / scale)
    assert worst <= 1e-6

    geom_below = WaveguideGeometry.from_cutoff(1.3 * W0)
    layout_below = uniform_layout(3, site, GAMMA, 0.7, a=geom_below.a)
    tables_below = coupling_tables(layout_below, 3, regime="below-cutoff",
                                   geom=geom_below)
    assert np.all(tables_below.gamma == 0.0)

    kappa_c = np.sqrt(geom_below.cutoff ** 2 - W0 ** 2)
    t_near = layout_below.delay(0, 1)
    t_far = layout_below.delay(0, 2)
    _, j_near = coupling_below(geom_below, layout_below, 0, 0, 0, 1)
    _, j_far = coupling_below(geom_below, layout_below, 0, 0, 0, 2)
    assert j_near < 0
    expected = np.exp(-kappa_c * (t_far - t_near))
    assert abs(j_far / j_near - expected) <= 1e-9
