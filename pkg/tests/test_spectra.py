"""Effective Hamiltonian assembly, biorthogonal spectra, decay channels."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavemon.coupling import PRESETS, coupling_tables, two_pair_layout, uniform_layout
from wavemon.fock import SiteModel, enumerate_basis, pair_exchange, sigma_minus
from wavemon.spectra import (
    DiagonalizationError,
    biorthogonalize_degenerate,
    bosonic_multiplicity,
    build_h_eff,
    classify,
    collective_channels,
    decay_channels,
    diagonalize,
    dicke_multiplicity,
    export_spectrum_csv,
    harmonic_oracle,
    qubit_dicke_oracle,
    two_pair_oracle,
)

TWO_PI = 2 * np.pi
OMEGA0 = TWO_PI * 7.28e9
GAMMA = TWO_PI * 25e6
J_CAP = TWO_PI * 45e6
U_T1 = TWO_PI * 218e6


def in_phase_chain(L, kind, d, gamma=GAMMA, anharmonicity=0.0,
                   manifold=None, at_most=None):
    """Co-located emitters (exactly in phase) with basis and tables."""
    site = SiteModel(kind, OMEGA0, anharmonicity)
    layout = uniform_layout(L, site, gamma, 0.0)
    basis = enumerate_basis(L, d, manifold, at_most=at_most)
    tables = coupling_tables(layout, d)
    return layout, basis, tables


def two_pair_system(delta, d=2, kind="qubit", anharmonicity=0.0,
                    at_most=None, manifold=None):
    layout = two_pair_layout(OMEGA0, GAMMA, delta, anharmonicity, kind)
    basis = enumerate_basis(4, d, manifold, at_most=at_most)
    tables = coupling_tables(layout, d)
    cap = np.zeros((4, 4))
    cap[0, 1] = cap[1, 0] = cap[2, 3] = cap[3, 2] = J_CAP
    return layout, basis, tables, cap


class TestBuildHEff:
    def test_single_harmonic_site(self):
        layout, basis, tables = in_phase_chain(1, "harmonic", d=4)
        h = build_h_eff(basis, layout, tables).toarray()
        n = np.arange(4)
        expected = np.diag((OMEGA0 - 0.5j * GAMMA) * n)
        # lexicographic single-site basis runs 0..3 directly
        assert np.allclose(h, expected, atol=1e-6 * GAMMA)

    def test_two_site_collective_decay_operator(self):
        layout, basis, tables = in_phase_chain(2, "harmonic", d=3,
                                               at_most=2)
        h = build_h_eff(basis, layout, tables).toarray()
        anti = (h - h.conj().T) / 2.0
        from wavemon.fock import annihilation
        s = (annihilation(basis, 0) + annihilation(basis, 1)).matrix.toarray()
        assert np.allclose(anti, -0.5j * GAMMA * (s.conj().T @ s),
                           atol=1e-9 * GAMMA)

    def test_two_pair_one_excitation_entries(self):
        delta = 3 * GAMMA
        layout, basis, tables, cap = two_pair_system(delta, manifold=1)
        h = build_h_eff(basis, layout, tables, cap).toarray()
        # hand-built 4x4 in site order, then mapped through the basis
        signs = np.array([1.0, 1.0, -1.0, -1.0])
        freqs = np.array([OMEGA0 + delta / 2] * 2 + [OMEGA0 - delta / 2] * 2)
        hand_site = np.diag(freqs).astype(complex)
        hand_site -= 0.5j * GAMMA * np.outer(signs, signs)
        hand_site[0, 1] = hand_site[1, 0] = hand_site[0, 1] + J_CAP
        hand_site[2, 3] = hand_site[3, 2] = hand_site[2, 3] + J_CAP
        pos = [basis.position(tuple(1 if i == j else 0 for i in range(4)))
               for j in range(4)]
        hand = np.zeros_like(hand_site)
        for j in range(4):
            for k in range(4):
                hand[pos[j], pos[k]] = hand_site[j, k]
        assert np.allclose(h, hand, atol=1e-9 * GAMMA)

    def test_anharmonicity_shifts_doublon(self):
        layout, basis, tables = in_phase_chain(
            1, "transmon", d=3, anharmonicity=U_T1)
        h = build_h_eff(basis, layout, tables).toarray()
        # |2> sits at 2 omega0 - U
        assert h[2, 2].real == pytest.approx(2 * OMEGA0 - U_T1, rel=1e-12)

    def test_frame_shift(self):
        layout, basis, tables = in_phase_chain(2, "qubit", d=2, at_most=2)
        h0 = build_h_eff(basis, layout, tables).toarray()
        h1 = build_h_eff(basis, layout, tables,
                         frame_frequency=OMEGA0).toarray()
        totals = basis.occupation_array().sum(axis=1)
        assert np.allclose(h0 - h1, OMEGA0 * np.diag(totals))

    def test_dimension_mismatches(self):
        layout, basis, tables = in_phase_chain(2, "qubit", d=2)
        other_basis = enumerate_basis(3, 2)
        with pytest.raises(ValueError):
            build_h_eff(other_basis, layout, tables)
        big_basis = enumerate_basis(2, 4)
        with pytest.raises(ValueError):
            build_h_eff(big_basis, layout, tables)
        with pytest.raises(ValueError):
            build_h_eff(basis, layout, tables, capacitive=np.zeros((3, 3)))
        skew = np.zeros((2, 2))
        skew[0, 1] = 1.0
        with pytest.raises(ValueError):
            build_h_eff(basis, layout, tables, capacitive=skew)

    def test_passivity(self):
        layout, basis, tables = in_phase_chain(3, "harmonic", d=3, at_most=2)
        h = build_h_eff(basis, layout, tables)
        assert h.antihermitian_max_eigenvalue() <= 1e-10 * GAMMA


class TestDiagonalize:
    def test_hermitian_limit(self):
        # no decay: left equals right and all rates vanish
        layout, basis, tables = in_phase_chain(2, "qubit", d=2, gamma=0.0,
                                               at_most=2)
        cap = np.array([[0.0, J_CAP], [J_CAP, 0.0]])
        spec = diagonalize(build_h_eff(basis, layout, tables, cap))
        assert np.abs(spec.decay_rates).max() < 1e-8 * J_CAP
        for i in range(spec.n_states):
            overlap = np.abs(np.vdot(spec.left[:, i], spec.right[:, i]))
            assert overlap == pytest.approx(1.0, abs=1e-10)

    def test_qubit_dicke_multiset(self):
        L = 4
        layout, basis, tables = in_phase_chain(L, "qubit", d=2, at_most=L)
        spec = diagonalize(build_h_eff(basis, layout, tables))
        assert spec.biorthogonality_defect() < 1e-8
        assert spec.identity_defect() < 1e-8
        assert spec.decay_rates.min() > -1e-10 * GAMMA
        for N in range(L + 1):
            sub = spec.select(N)
            m_z = 2 * N - L
            expected = []
            for s in range(L, abs(m_z) - 1, -2):
                e, g = qubit_dicke_oracle(L, s, m_z, OMEGA0, GAMMA)
                expected += [(e, g)] * dicke_multiplicity(L, s)
            got = sorted(zip(sub.energies, sub.decay_rates),
                         key=lambda t: t[1])
            expected.sort(key=lambda t: t[1])
            assert len(got) == len(expected)
            for (e1, g1), (e2, g2) in zip(got, expected):
                assert e1 == pytest.approx(e2, rel=1e-9)
                assert g1 == pytest.approx(g2, rel=1e-9, abs=1e-9 * GAMMA)
            # brightest state rate N(L-N+1) gamma
            if N:
                assert sub.decay_rates.max() == pytest.approx(
                    N * (L - N + 1) * GAMMA, rel=1e-9)

    def test_harmonic_multiset_and_dark_state(self):
        layout, basis, tables = in_phase_chain(2, "harmonic", d=3,
                                               manifold=2)
        spec = diagonalize(build_h_eff(basis, layout, tables))
        expected = []
        for lam, mult in harmonic_oracle(2, 2, OMEGA0, GAMMA):
            expected += [lam] * mult
        got = sorted(spec.eigenvalues, key=lambda z: -z.imag)
        expected.sort(key=lambda z: -z.imag)
        assert np.allclose(got, expected, rtol=1e-9, atol=1e-9 * GAMMA)
        # dark member is (|20> - sqrt2 |11> + |02>)/2
        dark_idx = np.argmin(spec.decay_rates)
        target = np.zeros(3, dtype=complex)
        target[basis.position((2, 0))] = 0.5
        target[basis.position((1, 1))] = -np.sqrt(0.5)
        target[basis.position((0, 2))] = 0.5
        overlap = np.abs(np.vdot(target, spec.right[:, dark_idx]))
        assert overlap >= 1.0 - 1e-9

    def test_two_pair_matches_oracle(self):
        for delta in (0.0, 1.0 * GAMMA, 3.0 * GAMMA, 7.5 * GAMMA):
            layout, basis, tables, cap = two_pair_system(delta, manifold=1)
            spec = diagonalize(build_h_eff(basis, layout, tables, cap))
            w1 = OMEGA0 + delta / 2
            w2 = OMEGA0 - delta / 2
            lam3, lam4 = two_pair_oracle(w1, w2, J_CAP, GAMMA)
            expected = sorted([w1 - J_CAP + 0j, w2 - J_CAP + 0j, lam3, lam4],
                              key=lambda z: (z.real, z.imag))
            got = sorted(spec.eigenvalues,
                         key=lambda z: (z.real, z.imag))
            assert np.allclose(got, expected, rtol=1e-9, atol=1e-6 * GAMMA)

    def test_blocked_flag_validation(self):
        layout, basis, tables = in_phase_chain(2, "qubit", d=2, at_most=2)
        h = build_h_eff(basis, layout, tables)
        import scipy.sparse as sparse
        from wavemon.spectra import EffectiveHamiltonian
        broken = h.matrix.tolil()
        broken[0, 1] = GAMMA  # couples N=0 to N=1
        h_driven = EffectiveHamiltonian(sparse.csr_matrix(broken), basis,
                                        layout, tables.regime)
        with pytest.raises(DiagonalizationError):
            diagonalize(h_driven, blocked=True)
        spec = diagonalize(h_driven, blocked="auto")
        assert spec.manifolds is None  # fell back to a single block

    def test_unblocked_agrees_with_blocked(self):
        layout, basis, tables = in_phase_chain(2, "harmonic", d=3,
                                               at_most=2)
        h = build_h_eff(basis, layout, tables)
        a = np.sort_complex(diagonalize(h, blocked="auto").eigenvalues)
        b = np.sort_complex(diagonalize(h, blocked=False).eigenvalues)
        assert np.allclose(a, b, rtol=1e-8, atol=1e-8 * GAMMA)


class TestBiorthogonalizeDegenerate:
    def test_single_vector_passthrough(self):
        r = np.array([[1.0], [2.0]], dtype=complex)
        l = np.array([[0.5], [0.1]], dtype=complex)
        r2, l2 = biorthogonalize_degenerate(r, l)
        assert np.allclose(r2, r) and np.allclose(l2, l)

    def test_collapsed_span_rejected(self):
        v = np.array([1.0, 1j, 0.3])
        r = np.column_stack([v, v])
        l = np.column_stack([v, v])
        with pytest.raises(DiagonalizationError):
            biorthogonalize_degenerate(r, l)

    @given(st.integers(min_value=2, max_value=4),
           st.integers(min_value=0, max_value=2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_random_clusters_become_biorthogonal(self, k, seed):
        rng = np.random.default_rng(seed)
        n = k + 3
        r = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
        l = rng.normal(size=(n, k)) + 1j * rng.normal(size=(n, k))
        r2, l2 = biorthogonalize_degenerate(r, l)
        overlap = l2.conj().T @ r2
        off = overlap - np.diag(np.diag(overlap))
        assert np.abs(off).max() < 1e-10
        # spans preserved: projections onto the original spans are full rank
        assert np.linalg.matrix_rank(np.linalg.lstsq(r, r2, rcond=None)[0],
                                     tol=1e-8) == k


class TestDecayChannels:
    def test_fermi_golden_rule_limit(self):
        # Hermitian hopping dimer probed through site 1 alone
        layout, basis, tables = in_phase_chain(2, "qubit", d=2, gamma=0.0,
                                               at_most=2)
        cap = np.array([[0.0, J_CAP], [J_CAP, 0.0]])
        spec = diagonalize(build_h_eff(basis, layout, tables, cap))
        from wavemon.fock import annihilation
        op = annihilation(basis, 0)
        table = decay_channels(spec, [(GAMMA, op)])
        b = op.matrix.toarray()
        for a in range(spec.n_states):
            for bb in range(spec.n_states):
                golden = GAMMA * np.abs(
                    spec.right[:, bb].conj() @ b @ spec.right[:, a]) ** 2
                assert table.rates[0, a, bb] == pytest.approx(
                    golden, abs=1e-9 * GAMMA)

    def test_two_pair_channel_rates(self):
        layout, basis, tables, cap = two_pair_system(0.0, at_most=1)
        spec = diagonalize(build_h_eff(basis, layout, tables, cap))
        channels = collective_channels(tables, basis)
        assert len(channels) == 1  # rank-1 decay matrix: one bright channel
        table = decay_channels(spec, channels)
        totals = table.total_out()
        # row sums reproduce the decay rates
        assert np.allclose(totals, spec.decay_rates,
                           atol=1e-8 * spec.decay_rates.max())
        # the bright state dumps 4 gamma straight into the ground state
        bright = int(np.argmax(spec.decay_rates))
        ground = int(np.argmin(spec.energies))
        assert table.rates[:, bright, ground].sum() == pytest.approx(
            4 * GAMMA, rel=1e-9)
        # dark states have no outgoing channel at all
        for i in np.flatnonzero(spec.decay_rates < 1e-6 * GAMMA):
            assert totals[i] == pytest.approx(0.0, abs=1e-8 * GAMMA)
        assert table.max_imag < 1e-8 * GAMMA

    def test_channel_completeness_multilevel(self):
        layout, basis, tables = in_phase_chain(
            2, "transmon", d=3, anharmonicity=U_T1, at_most=2)
        spec = diagonalize(build_h_eff(basis, layout, tables))
        table = decay_channels(spec, collective_channels(tables, basis))
        assert np.allclose(table.total_out(), spec.decay_rates,
                           atol=1e-8 * spec.decay_rates.max())


class TestClassify:
    def test_two_pair_symmetry_and_brightness(self):
        layout, basis, tables, cap = two_pair_system(0.0, at_most=1)
        spec = diagonalize(build_h_eff(basis, layout, tables, cap))
        labels = classify(spec, pair_exchange(basis), gamma_ref=GAMMA)
        bright = int(np.argmax(spec.decay_rates))
        assert labels[bright] == ("antisymmetric", "bright")
        # collective dark state: zero rate at energy omega0 + J
        one_exc = np.flatnonzero(spec.manifolds == 1)
        d3 = one_exc[np.argmax(spec.energies[one_exc]
                               * (spec.decay_rates[one_exc] < 1e-6 * GAMMA))]
        d3 = [i for i in one_exc
              if spec.decay_rates[i] < 1e-6 * GAMMA
              and spec.energies[i] == pytest.approx(OMEGA0 + J_CAP,
                                                    rel=1e-9)]
        assert len(d3) == 1
        assert labels[d3[0]] == ("symmetric", "dark")

    def test_local_dark_states_have_no_symmetry(self):
        delta = 3 * GAMMA
        layout, basis, tables, cap = two_pair_system(delta, manifold=1)
        spec = diagonalize(build_h_eff(basis, layout, tables, cap))
        labels = classify(spec, pair_exchange(basis), gamma_ref=GAMMA)
        for i in np.flatnonzero(spec.decay_rates < 1e-6 * GAMMA):
            assert labels[i].symmetry == "none"
            assert labels[i].brightness == "dark"


class TestOracles:
    def test_two_pair_oracle_special_points(self):
        lam3, lam4 = two_pair_oracle(OMEGA0, OMEGA0, J_CAP, GAMMA)
        assert lam3 == pytest.approx(OMEGA0 + J_CAP)
        assert -2 * lam4.imag == pytest.approx(4 * GAMMA)
        # exceptional point
        w1 = OMEGA0 + GAMMA
        w2 = OMEGA0 - GAMMA
        lam3, lam4 = two_pair_oracle(w1, w2, J_CAP, GAMMA)
        assert lam3 == pytest.approx(lam4)
        assert -2 * lam3.imag == pytest.approx(2 * GAMMA)
        # far detuned: equal rates, energies split by ~ delta
        delta = 50 * GAMMA
        lam3, lam4 = two_pair_oracle(OMEGA0 + delta / 2, OMEGA0 - delta / 2,
                                     J_CAP, GAMMA)
        assert lam3.imag == pytest.approx(lam4.imag, rel=1e-9)
        assert lam3.real - lam4.real == pytest.approx(delta, rel=1e-2)

    def test_qubit_oracle_values(self):
        e, g = qubit_dicke_oracle(4, 4, 4, OMEGA0, GAMMA)
        assert g == pytest.approx(4 * GAMMA)
        assert e == pytest.approx(4 * OMEGA0)
        _, g = qubit_dicke_oracle(4, 4, -4, OMEGA0, GAMMA)
        assert g == 0.0
        _, g = qubit_dicke_oracle(8, 8, 0, OMEGA0, GAMMA)
        assert g == pytest.approx(20 * GAMMA)
        for bad in [(4, 3, 1), (4, 4, 5), (4, 2, 1), (4, -2, 0)]:
            with pytest.raises(ValueError):
                qubit_dicke_oracle(*bad, OMEGA0, GAMMA)

    def test_multiplicities(self):
        assert dicke_multiplicity(4, 4) == 1
        assert dicke_multiplicity(4, 2) == 3
        assert dicke_multiplicity(4, 0) == 2
        # dimensions add up to 2^L
        total = sum(dicke_multiplicity(4, s) * (s + 1) for s in (0, 2, 4))
        assert total == 2 ** 4
        assert bosonic_multiplicity(3, 4) == 20
        assert sum(m for _, m in harmonic_oracle(4, 3, OMEGA0, GAMMA)) \
            == bosonic_multiplicity(3, 4)

    def test_transmon_interpolates_to_harmonic(self):
        layout, basis, tables = in_phase_chain(
            2, "transmon", d=3, anharmonicity=1e-8 * GAMMA, manifold=2)
        spec = diagonalize(build_h_eff(basis, layout, tables))
        expected = []
        for lam, mult in harmonic_oracle(2, 2, OMEGA0, GAMMA):
            expected += [lam] * mult
        got = sorted(spec.eigenvalues, key=lambda z: -z.imag)
        expected.sort(key=lambda z: -z.imag)
        assert np.allclose(got, expected, atol=1e-6 * GAMMA)

    def test_two_pair_transmon_approaches_qubit_at_large_u(self):
        def top3(d, anh, kind):
            layout, basis, tables, cap = two_pair_system(
                0.0, d=d, kind=kind, anharmonicity=anh, manifold=2)
            spec = diagonalize(build_h_eff(basis, layout, tables, cap))
            return np.sort(spec.energies)[-3:]

        qubit = top3(2, 0.0, "qubit")
        gap_small = np.abs(top3(3, 4 * GAMMA, "transmon") - qubit).max()
        gap_large = np.abs(top3(3, 40 * GAMMA, "transmon") - qubit).max()
        assert gap_large < gap_small


class TestExport:
    def test_csv_round_trip(self, tmp_path):
        layout, basis, tables, cap = two_pair_system(0.0, at_most=1)
        spec = diagonalize(build_h_eff(basis, layout, tables, cap))
        labels = classify(spec, pair_exchange(basis), gamma_ref=GAMMA)
        path = tmp_path / "spectrum.csv"
        export_spectrum_csv(spec, path, labels)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == ("manifold_N,index,E_over_hbar_rad_s,"
                            "Gamma_rad_s,symmetry,brightness")
        assert len(lines) == spec.n_states + 1
        rates = [float(row.split(",")[3]) for row in lines[1:]]
        assert max(rates) == pytest.approx(4 * GAMMA, rel=1e-9)
