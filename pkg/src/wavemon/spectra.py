"""Non-Hermitian effective Hamiltonians and their biorthogonal spectra.

Tracing out the waveguide leaves the emitter array with

    H_eff/hbar = H_sys/hbar + sum (J_mjnk - i gamma_mjnk / 2) sp_nk sm_mj
                 + capacitive hopping,

whose complex eigenvalues lambda = E/hbar - i Gamma/2 carry the energy and
the collective decay rate of each state.  Left and right eigenvectors
differ; expectation values and transition rates use the biorthogonal
pairing <left|right>.

Conventions used throughout:

* right and left eigenvectors are stored with unit 2-norm; the bilinear
  overlap <alpha~|alpha> is kept separately and divides wherever the
  biorthogonal identity is resolved,
* eigenvalues are sorted by manifold, then (Re, Im),
* an excitation-conserving Hamiltonian is diagonalized block by block.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from math import comb
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sparse

from .coupling import CouplingTables, EmitterLayout
from .fock import FockBasis, OperatorMatrix, annihilation, sigma_minus

#: Relative tolerance for clustering eigenvalues into degenerate groups.
DEGENERACY_RTOL = 1e-9

#: Bilinear norms below this (for unit-norm vector pairs) mean the matrix
#: is numerically defective; between this and NORM_WARN we only warn.
NORM_FLOOR = 1e-13
NORM_WARN = 1e-8


class DiagonalizationError(RuntimeError):
    """Eigensolver failure or a numerically defective spectrum."""


@dataclass(frozen=True)
class EffectiveHamiltonian:
    """H_eff/hbar on a Fock basis, with the ingredients it was built from."""

    matrix: sparse.csr_matrix
    basis: FockBasis
    layout: EmitterLayout
    regime: str
    capacitive: np.ndarray | None = None
    frame_frequency: float = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def antihermitian_max_eigenvalue(self) -> float:
        """Largest eigenvalue of (H - H^dag)/(2i); passivity wants <= 0."""
        a = (self.matrix - self.matrix.conj().T).toarray() / 2j
        return float(np.linalg.eigvalsh(a).max())


def build_h_eff(basis: FockBasis, layout: EmitterLayout,
                tables: CouplingTables,
                capacitive: np.ndarray | None = None,
                frame_frequency: float = 0.0) -> EffectiveHamiltonian:
    """Assemble the effective Hamiltonian (units of rad/s).

    capacitive is an optional symmetric L x L matrix of direct hopping
    rates J_jk.  frame_frequency shifts every site frequency, putting the
    result in the frame rotating at that frequency.
    """
    L = basis.L
    if layout.L != L or tables.L != L:
        raise ValueError(
            f"basis has {L} sites but layout has {layout.L} and "
            f"tables have {tables.L}")
    n_lvl = basis.d - 1
    if tables.levels < n_lvl:
        raise ValueError(
            f"coupling tables cover {tables.levels} transitions but the "
            f"basis needs {n_lvl}")
    if capacitive is not None:
        capacitive = np.asarray(capacitive, dtype=float)
        if capacitive.shape != (L, L):
            raise ValueError("capacitive coupling matrix must be L x L")
        if not np.allclose(capacitive, capacitive.T):
            raise ValueError("capacitive coupling matrix must be symmetric")

    occ = basis.occupation_array().astype(float)
    omegas = np.array([s.omega for s in layout.sites]) - frame_frequency
    anh = np.array([s.anharmonicity for s in layout.sites])
    diag = occ @ omegas - 0.5 * (occ * (occ - 1.0)) @ anh
    h = sparse.diags(diag.astype(complex), format="csr")

    lowering = {(m, j): sigma_minus(basis, m, j)
                for m in range(n_lvl) for j in range(L)}
    for (m, j), sm in lowering.items():
        for (n, k), sn in lowering.items():
            coeff = (tables.exchange[m, j, n, k]
                     - 0.5j * tables.gamma[m, j, n, k])
            if coeff == 0:
                continue
            h = h + coeff * (sn.dagger() @ sm).matrix

    if capacitive is not None:
        ops = [annihilation(basis, j) for j in range(L)]
        for j in range(L):
            for k in range(j + 1, L):
                if capacitive[j, k] == 0:
                    continue
                hop = (ops[j].dagger() @ ops[k]).matrix
                h = h + capacitive[j, k] * (hop + hop.conj().T)

    return EffectiveHamiltonian(sparse.csr_matrix(h), basis, layout,
                                tables.regime, capacitive, frame_frequency)


@dataclass(frozen=True)
class BiorthogonalSpectrum:
    """Eigenvalues with paired right/left eigenvectors.

    Vector columns are unit 2-norm and embedded in the full basis
    dimension; norms[i] = <left_i|right_i> is the bilinear overlap that
    weights the identity resolution sum_i |r_i><l_i| / norms[i].
    """

    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    norms: np.ndarray
    basis: FockBasis
    manifolds: np.ndarray | None = None

    @property
    def n_states(self) -> int:
        return len(self.eigenvalues)

    @property
    def energies(self) -> np.ndarray:
        """E_alpha / hbar in rad/s."""
        return self.eigenvalues.real

    @property
    def decay_rates(self) -> np.ndarray:
        """Gamma_alpha = -2 Im lambda_alpha in rad/s."""
        return -2.0 * self.eigenvalues.imag

    def _blocks(self):
        if self.manifolds is None:
            yield np.arange(self.n_states)
            return
        for n in np.unique(self.manifolds):
            yield np.flatnonzero(self.manifolds == n)

    def biorthogonality_defect(self) -> float:
        """max |<beta~|alpha>| / |<alpha~|alpha>| over pairs beta != alpha."""
        worst = 0.0
        for idx in self._blocks():
            overlap = self.left[:, idx].conj().T @ self.right[:, idx]
            off = overlap - np.diag(np.diag(overlap))
            worst = max(worst, np.abs(off).max(initial=0.0)
                        / np.abs(self.norms[idx]).min())
        return worst

    def identity_defect(self) -> float:
        """Frobenius distance of sum |r><l|/norm from the block identity."""
        worst = 0.0
        for idx in self._blocks():
            r = self.right[:, idx]
            l = self.left[:, idx] / self.norms[idx].conj()
            resolved = r @ l.conj().T
            members = np.flatnonzero(np.abs(r).sum(axis=1) > 0)
            expected = np.zeros_like(resolved)
            expected[members, members] = 1.0
            worst = max(worst, np.linalg.norm(resolved - expected))
        return worst

    def select(self, manifold: int) -> "BiorthogonalSpectrum":
        """Sub-spectrum of one excitation manifold."""
        if self.manifolds is None:
            raise ValueError("spectrum was not manifold-blocked")
        idx = np.flatnonzero(self.manifolds == manifold)
        if idx.size == 0:
            raise ValueError(f"no states in manifold {manifold}")
        return BiorthogonalSpectrum(
            self.eigenvalues[idx], self.right[:, idx], self.left[:, idx],
            self.norms[idx], self.basis, self.manifolds[idx])


def biorthogonalize_degenerate(right: np.ndarray, left: np.ndarray
                               ) -> tuple[np.ndarray, np.ndarray]:
    """Make a degenerate cluster biorthogonal, preserving both spans.

    Takes right and left vectors (as columns) sharing one eigenvalue and
    returns combinations with <left_i|right_j> = 0 for i != j.  This is
    the degenerate replacement for the usual Gram-Schmidt sweep: the
    mixing matrix M = L^H R is factored by SVD and its inverse square
    root is split symmetrically between the two sides.
    """
    right = np.atleast_2d(right)
    left = np.atleast_2d(left)
    if right.shape != left.shape:
        raise ValueError("right and left clusters must have equal shape")
    if right.shape[1] == 1:
        return right, left
    mix = left.conj().T @ right
    u, s, vh = np.linalg.svd(mix)
    if s[-1] < 1e-12 * s[0]:
        raise DiagonalizationError(
            "degenerate cluster is numerically defective "
            f"(singular value ratio {s[-1] / s[0]:.2e})")
    inv_root = np.diag(1.0 / np.sqrt(s))
    r_new = right @ vh.conj().T @ inv_root
    l_new = left @ u @ inv_root.conj()
    # restore unit 2-norm columns; the pairing stays diagonal
    r_new /= np.linalg.norm(r_new, axis=0, keepdims=True)
    l_new /= np.linalg.norm(l_new, axis=0, keepdims=True)
    return r_new, l_new


def _cluster_degenerate(w: np.ndarray, rtol: float) -> list[np.ndarray]:
    """Group eigenvalue indices into degenerate clusters.

    Membership is by complex distance to the cluster centroid, not by
    adjacency in a sorted sweep: when many eigenvalues share a real part
    (every in-phase manifold), a sweep ordered by real part interleaves
    the multiplets and would fracture each degenerate cluster.
    """
    scale = max(np.abs(w).max(initial=0.0), 1.0)
    tol = rtol * scale
    clusters: list[list[int]] = []
    centers: list[complex] = []
    for i in np.lexsort((w.real, w.imag)):
        for ci, center in enumerate(centers):
            if abs(w[i] - center) <= tol:
                clusters[ci].append(i)
                centers[ci] = complex(np.mean(w[clusters[ci]]))
                break
        else:
            clusters.append([i])
            centers.append(complex(w[i]))
    return [np.array(c) for c in clusters]


def _diagonalize_block(a: np.ndarray, rtol: float):
    try:
        w, vl, vr = scipy.linalg.eig(a, left=True, right=True)
    except np.linalg.LinAlgError as exc:
        raise DiagonalizationError(f"eigensolver failed: {exc}") from exc
    for cluster in _cluster_degenerate(w, rtol):
        if len(cluster) > 1:
            r_new, l_new = biorthogonalize_degenerate(
                vr[:, cluster], vl[:, cluster])
            vr[:, cluster] = r_new
            vl[:, cluster] = l_new
    vr /= np.linalg.norm(vr, axis=0, keepdims=True)
    vl /= np.linalg.norm(vl, axis=0, keepdims=True)
    norms = np.einsum("ia,ia->a", vl.conj(), vr)
    small = np.abs(norms) < NORM_FLOOR
    if small.any():
        raise DiagonalizationError(
            "vanishing bilinear norm; matrix is defective at eigenvalues "
            f"{w[small]}")
    if (np.abs(norms) < NORM_WARN).any():
        warnings.warn("bilinear norms below 1e-8; eigenvectors are close "
                      "to an exceptional point and poorly conditioned")
    order = np.lexsort((w.imag, w.real))
    return w[order], vr[:, order], vl[:, order], norms[order]


def diagonalize(h: EffectiveHamiltonian, *, blocked: str | bool = "auto",
                degeneracy_rtol: float = DEGENERACY_RTOL
                ) -> BiorthogonalSpectrum:
    """Biorthogonal eigendecomposition of an effective Hamiltonian.

    With blocked="auto" the excitation manifolds are diagonalized
    independently whenever the matrix conserves total occupation; True
    insists on it (error if the matrix has cross-manifold elements) and
    False forces a single dense solve, which exists for validation.
    """
    dense = h.toarray()
    totals = np.array([s.total for s in h.basis.states])
    cross = 0.0
    if h.dim > 1:
        mask = totals[:, None] != totals[None, :]
        cross = np.abs(dense[mask]).max(initial=0.0)
    scale = max(np.abs(dense).max(initial=0.0), 1.0)
    conserves = cross <= 1e-14 * scale

    if blocked is True and not conserves:
        raise DiagonalizationError(
            "blocked diagonalization requested but the Hamiltonian has "
            f"cross-manifold elements up to {cross:.3g}")
    use_blocks = conserves if blocked == "auto" else bool(blocked)

    dim = h.dim
    if not use_blocks:
        w, vr, vl, norms = _diagonalize_block(dense, degeneracy_rtol)
        return BiorthogonalSpectrum(w, vr, vl, norms, h.basis, None)

    eigenvalues, norms_all = [], []
    right = np.zeros((dim, dim), dtype=complex)
    left = np.zeros((dim, dim), dtype=complex)
    manifolds = np.zeros(dim, dtype=int)
    col = 0
    for n in np.unique(totals):
        idx = np.flatnonzero(totals == n)
        w, vr, vl, norms = _diagonalize_block(
            dense[np.ix_(idx, idx)], degeneracy_rtol)
        k = len(w)
        right[idx, col:col + k] = vr
        left[idx, col:col + k] = vl
        eigenvalues.extend(w)
        norms_all.extend(norms)
        manifolds[col:col + k] = n
        col += k
    return BiorthogonalSpectrum(
        np.array(eigenvalues), right, left, np.array(norms_all),
        h.basis, manifolds)


@dataclass(frozen=True)
class DecayChannelTable:
    """Per-channel transition rates Gamma^k_{alpha->beta}.

    rates has shape (n_channels, n_states, n_states) indexed
    [k, alpha, beta]; real parts of the biorthogonal matrix elements,
    with the largest imaginary residual kept for diagnostics.
    """

    rates: np.ndarray
    channel_rates: tuple[float, ...]
    max_imag: float

    def total_out(self, alpha: int | None = None) -> np.ndarray | float:
        """Summed outgoing rate per initial state (should equal Gamma)."""
        totals = self.rates.sum(axis=(0, 2))
        return totals if alpha is None else float(totals[alpha])


def decay_channels(spectrum: BiorthogonalSpectrum,
                   channels: Sequence[tuple[float, OperatorMatrix]]
                   ) -> DecayChannelTable:
    """Rates Gamma^k = gamma_k <a|b_k^H|b><b~|b_k|a> / (<a|a> <b~|b>).

    The spectrum must span every manifold the jump operators reach
    (build it on a cumulative basis), otherwise the row sums cannot
    reproduce the total decay rates.
    """
    n = spectrum.n_states
    rates = np.zeros((len(channels), n, n))
    max_imag = 0.0
    for ci, (gamma_k, op) in enumerate(channels):
        b = op.matrix.toarray()
        br = b @ spectrum.right          # columns b|alpha>
        amp_left = spectrum.left.conj().T @ br    # <beta~|b|alpha>
        amp_right = spectrum.right.conj().T @ br  # <beta|b|alpha>
        table = gamma_k * (amp_right.conj() * amp_left
                           / spectrum.norms[:, None]).T
        max_imag = max(max_imag, np.abs(table.imag).max(initial=0.0))
        rates[ci] = table.real
    return DecayChannelTable(rates, tuple(g for g, _ in channels),
                             float(max_imag))


def collective_channels(tables: CouplingTables, basis: FockBasis,
                        tol: float = 1e-12
                        ) -> list[tuple[float, OperatorMatrix]]:
    """Jump operators diagonalizing the collective decay matrix.

    Decomposes gamma_(mj),(nk) = sum_s w_s v_s v_s^H and returns one
    (w_s, b_s) pair per nonzero eigenvalue, b_s = sum v_s[mj] sm_mj.
    """
    n_lvl = basis.d - 1
    L = basis.L
    mat = tables.gamma_matrix()[:n_lvl * L, :n_lvl * L]
    if not np.allclose(mat, mat.conj().T):
        raise ValueError("decay matrix is not Hermitian")
    w, v = np.linalg.eigh(mat)
    if w.min(initial=0.0) < -1e-10 * max(w.max(initial=0.0), 1.0):
        raise ValueError("decay matrix has a negative eigenvalue")
    out = []
    for s in range(len(w)):
        if w[s] <= tol * max(w.max(), 1.0):
            continue
        op = None
        for m in range(n_lvl):
            for j in range(L):
                coeff = v[m * L + j, s]
                if coeff == 0:
                    continue
                term = coeff * sigma_minus(basis, m, j)
                op = term if op is None else op + term
        out.append((float(w[s]), op))
    return out


class StateLabel(NamedTuple):
    symmetry: str
    brightness: str


def classify(spectrum: BiorthogonalSpectrum,
             parity: OperatorMatrix | None = None, *,
             gamma_ref: float,
             dark: float = 0.05, weak: float = 0.5, bright: float = 2.0,
             symmetry_tol: float = 1e-6) -> list[StateLabel]:
    """Symmetry and brightness labels for every state.

    Brightness bands (relative to gamma_ref): dark below `dark`, then
    weak, then faint, bright above `bright`.  Symmetry is checked against
    the parity operator when one is given: P|a> = +-|a> within tolerance.
    The labels are descriptive metadata, nothing downstream depends on
    them.
    """
    labels = []
    p = parity.matrix.toarray() if parity is not None else None
    for i in range(spectrum.n_states):
        rate = spectrum.decay_rates[i] / gamma_ref
        if rate < dark:
            band = "dark"
        elif rate < weak:
            band = "weak"
        elif rate <= bright:
            band = "faint"
        else:
            band = "bright"
        sym = "none"
        if p is not None:
            r = spectrum.right[:, i]
            if np.linalg.norm(p @ r - r) < symmetry_tol:
                sym = "symmetric"
            elif np.linalg.norm(p @ r + r) < symmetry_tol:
                sym = "antisymmetric"
        labels.append(StateLabel(sym, band))
    return labels


def export_spectrum_csv(spectrum: BiorthogonalSpectrum, path,
                        labels: Sequence[StateLabel] | None = None):
    """Write one row per state: manifold, energy, decay rate, labels."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["manifold_N", "index", "E_over_hbar_rad_s",
                         "Gamma_rad_s", "symmetry", "brightness"])
        for i in range(spectrum.n_states):
            manifold = (int(spectrum.manifolds[i])
                        if spectrum.manifolds is not None else -1)
            sym, band = labels[i] if labels is not None else ("none", "")
            writer.writerow([manifold, i, repr(float(spectrum.energies[i])),
                             repr(float(spectrum.decay_rates[i])), sym, band])


def two_pair_oracle(omega_1: float, omega_2: float, j_cap: float,
                    gamma: float) -> tuple[complex, complex]:
    """Closed-form collective eigenvalues of the bright pair modes.

    lambda_{3,4} = (w1+w2)/2 + J - i gamma +- sqrt((w1-w2)^2 - 4 gamma^2)/2,
    with an exceptional point where the detuning equals 2 gamma.
    """
    mean = 0.5 * (omega_1 + omega_2)
    root = 0.5 * np.sqrt(complex((omega_1 - omega_2) ** 2 - 4 * gamma ** 2))
    lam3 = mean + j_cap - 1j * gamma + root
    lam4 = mean + j_cap - 1j * gamma - root
    return complex(lam3), complex(lam4)


def qubit_dicke_oracle(L: int, s: int, m_z: int, omega0: float,
                       gamma: float) -> tuple[float, float]:
    """Energy and decay rate of the qubit collective state |s, m_z>.

    Uses the doubled convention where s runs over {L, L-2, ...} and the
    excitation number is N = (m_z + L)/2.  Returns (E/hbar, Gamma).
    """
    if not (0 <= s <= L and (L - s) % 2 == 0):
        raise ValueError(f"invalid collective spin s={s} for L={L}")
    if not (-s <= m_z <= s and (s - m_z) % 2 == 0):
        raise ValueError(f"invalid projection m_z={m_z} for s={s}")
    energy = omega0 * (m_z + L) / 2.0
    rate = gamma * (s + m_z) * (s - m_z + 2) / 4.0
    return float(energy), float(rate)


def dicke_multiplicity(L: int, s: int) -> int:
    """Number of distinct |s, m_z> ladders for L qubits."""
    if not (0 <= s <= L and (L - s) % 2 == 0):
        raise ValueError(f"invalid collective spin s={s} for L={L}")
    k = (L - s) // 2
    return comb(L, k) - (comb(L, k - 1) if k >= 1 else 0)


def bosonic_multiplicity(n: int, modes: int) -> int:
    """Ways to distribute n excitations over the given number of modes."""
    if n < 0 or modes < 1:
        raise ValueError("need n >= 0 and at least one mode")
    return comb(n + modes - 1, n)


def harmonic_oracle(L: int, N: int, omega0: float, gamma: float
                    ) -> list[tuple[complex, int]]:
    """Eigenvalues of N excitations on L in-phase harmonic sites.

    Only the in-phase collective mode decays, so the manifold splits as
    lambda = N omega0 - i m L gamma / 2 with m photons in the decaying
    mode; the multiplicity counts the dark-mode distributions.
    """
    out = []
    for m in range(N + 1):
        lam = N * omega0 - 0.5j * m * L * gamma
        out.append((complex(lam), bosonic_multiplicity(N - m, L - 1)))
    return out
