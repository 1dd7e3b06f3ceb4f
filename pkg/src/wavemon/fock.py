"""Occupation-number bases and operator matrices for arrays of bosonic sites.

Every many-body object in this package is a matrix over an enumerated Fock
basis.  A site holds at most d-1 excitations; a basis is either the full
d^L product space, a single total-excitation manifold, or the union of all
manifolds up to a given total (useful for pure decay, which never raises
the total occupation).

Basis ordering is lexicographic ascending on the occupation vectors and is
part of the public contract: operator matrices, spectra and Liouvillians
all index states through it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np
from scipy import sparse

#: Hard cap on basis size; enumerate_basis refuses anything larger.
MAX_DIMENSION = 100_000

VALID_KINDS = ("qubit", "transmon", "harmonic")


class CapacityError(ValueError):
    """Requested basis exceeds the configured maximum dimension."""


@dataclass(frozen=True)
class FockState:
    """Occupation vector |n_1 n_2 ... n_L>."""

    occupations: tuple[int, ...]

    def __post_init__(self):
        if any(n < 0 for n in self.occupations):
            raise ValueError(f"negative occupation in {self.occupations}")

    @property
    def total(self) -> int:
        return sum(self.occupations)

    def __getitem__(self, j: int) -> int:
        return self.occupations[j]

    def __len__(self) -> int:
        return len(self.occupations)

    def replace(self, j: int, n: int) -> "FockState":
        occ = list(self.occupations)
        occ[j] = n
        return FockState(tuple(occ))

    def __str__(self) -> str:
        return "|" + " ".join(str(n) for n in self.occupations) + ">"


@dataclass(frozen=True)
class SiteModel:
    """Level structure of a single site.

    kind is one of "qubit", "transmon" or "harmonic".  The m -> m+1
    transition frequency is omega - m*anharmonicity, so a harmonic site has
    equidistant levels and a transmon's upper transitions shift down.  A
    qubit is the d = 2 truncation of the same machinery; its anharmonicity
    never enters because level 2 does not exist.

    Frequencies are angular (rad/s).
    """

    kind: str
    omega: float
    anharmonicity: float = 0.0

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown site kind {self.kind!r}")
        if self.kind == "harmonic" and self.anharmonicity != 0.0:
            raise ValueError("harmonic site must have zero anharmonicity")

    def transition_frequency(self, m: int) -> float:
        """Angular frequency of the m -> m+1 transition."""
        return self.omega - m * self.anharmonicity

    @property
    def level_cap(self) -> int | None:
        """Intrinsic per-site level cap (2 for qubits, None otherwise)."""
        return 2 if self.kind == "qubit" else None


def _occupation_vectors(L: int, d: int, total: int | None,
                        at_most: int | None) -> Iterator[tuple[int, ...]]:
    """Yield occupation vectors in lexicographic ascending order."""
    budget = None
    if total is not None:
        budget = total
    elif at_most is not None:
        budget = at_most

    def rec(prefix: tuple[int, ...], remaining_sites: int, used: int):
        if remaining_sites == 0:
            if total is None or used == total:
                yield prefix
            return
        hi = d - 1 if budget is None else min(d - 1, budget - used)
        for n in range(hi + 1):
            yield from rec(prefix + (n,), remaining_sites - 1, used + n)

    yield from rec((), L, 0)


@dataclass(frozen=True)
class FockBasis:
    """Ordered set of Fock states with an index lookup.

    Restriction is either None (full product space), an integer N with
    cumulative=False (single total-N manifold) or an integer N with
    cumulative=True (all manifolds 0..N).
    """

    L: int
    d: int
    states: tuple[FockState, ...]
    manifold: int | None = None
    cumulative: bool = False
    index: dict[FockState, int] = field(default_factory=dict, repr=False,
                                        compare=False)

    def __post_init__(self):
        if not self.index:
            object.__setattr__(
                self, "index", {s: i for i, s in enumerate(self.states)})
        if len(self.index) != len(self.states):
            raise ValueError("duplicate states in basis")

    @property
    def size(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)

    def position(self, state: FockState | Sequence[int]) -> int:
        if not isinstance(state, FockState):
            state = FockState(tuple(state))
        return self.index[state]

    def occupation_array(self) -> np.ndarray:
        """(size, L) integer array of occupations, row per state."""
        return np.array([s.occupations for s in self.states], dtype=int)

    def lowered(self) -> "FockBasis":
        """Basis that annihilation maps into.

        A single-manifold basis maps into the manifold below; anything else
        is closed under lowering and maps into itself.
        """
        if self.manifold is not None and not self.cumulative:
            if self.manifold == 0:
                raise ValueError("cannot lower below the vacuum manifold")
            return enumerate_basis(self.L, self.d, self.manifold - 1)
        return self


def enumerate_basis(L: int, d: int, manifold: int | None = None, *,
                    at_most: int | None = None,
                    max_dim: int = MAX_DIMENSION) -> FockBasis:
    """Enumerate a Fock basis in lexicographic ascending order.

    Parameters
    ----------
    L : number of sites, >= 1
    d : per-site level cap (levels 0..d-1), >= 2
    manifold : if given, keep only states with total occupation == manifold
    at_most : if given, keep states with total occupation <= at_most
        (mutually exclusive with manifold)
    max_dim : refuse bases larger than this

    The unrestricted basis has d^L states; a manifold-restricted basis has
    binom(N+L-1, N) states whenever d > N.
    """
    if L < 1:
        raise ValueError("need at least one site")
    if d < 2:
        raise ValueError("need at least two levels per site")
    if manifold is not None and at_most is not None:
        raise ValueError("manifold and at_most are mutually exclusive")
    if manifold is not None and manifold < 0:
        raise ValueError("manifold must be non-negative")
    if at_most is not None and at_most < 0:
        raise ValueError("at_most must be non-negative")

    if manifold is None and at_most is None and d ** L > max_dim:
        raise CapacityError(f"basis of size {d}^{L} exceeds max_dim={max_dim}")

    states = tuple(FockState(v)
                   for v in _occupation_vectors(L, d, manifold, at_most))
    if len(states) > max_dim:
        raise CapacityError(
            f"basis of size {len(states)} exceeds max_dim={max_dim}")
    if not states:
        raise ValueError("restriction produced an empty basis")

    if manifold is not None:
        return FockBasis(L, d, states, manifold=manifold)
    if at_most is not None:
        return FockBasis(L, d, states, manifold=at_most, cumulative=True)
    return FockBasis(L, d, states)


@dataclass(frozen=True)
class OperatorMatrix:
    """Sparse matrix together with the bases it maps between.

    Maps col_basis -> row_basis; for most operators the two coincide.
    """

    matrix: sparse.csr_matrix
    row_basis: FockBasis
    col_basis: FockBasis

    @property
    def basis(self) -> FockBasis:
        return self.col_basis

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def dagger(self) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix.conjugate().transpose().tocsr(),
                              self.col_basis, self.row_basis)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if other.row_basis is not self.col_basis \
                and other.row_basis != self.col_basis:
            raise ValueError("basis mismatch in operator product")
        return OperatorMatrix(self.matrix @ other.matrix,
                              self.row_basis, other.col_basis)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check_same_bases(other)
        return OperatorMatrix(self.matrix + other.matrix,
                              self.row_basis, self.col_basis)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        self._check_same_bases(other)
        return OperatorMatrix(self.matrix - other.matrix,
                              self.row_basis, self.col_basis)

    def __mul__(self, scalar: complex) -> "OperatorMatrix":
        return OperatorMatrix(self.matrix * scalar,
                              self.row_basis, self.col_basis)

    __rmul__ = __mul__

    def _check_same_bases(self, other: "OperatorMatrix"):
        if self.row_basis != other.row_basis \
                or self.col_basis != other.col_basis:
            raise ValueError("basis mismatch in operator sum")


def _build(entries, row_basis: FockBasis, col_basis: FockBasis,
           dtype=complex) -> OperatorMatrix:
    rows, cols, vals = [], [], []
    for r, c, v in entries:
        rows.append(r)
        cols.append(c)
        vals.append(v)
    m = sparse.csr_matrix(
        (np.array(vals, dtype=dtype), (rows, cols)),
        shape=(row_basis.size, col_basis.size))
    return OperatorMatrix(m, row_basis, col_basis)


def annihilation(basis: FockBasis, j: int) -> OperatorMatrix:
    """Bosonic annihilation a_j with <n-1|a|n> = sqrt(n).

    On a single-manifold basis the result maps manifold N to N-1; on a
    full or cumulative basis it is square.
    """
    if not 0 <= j < basis.L:
        raise ValueError(f"site {j} outside 0..{basis.L - 1}")
    out = basis.lowered()

    def entries():
        for col, s in enumerate(basis.states):
            n = s[j]
            if n > 0:
                yield out.position(s.replace(j, n - 1)), col, np.sqrt(n)

    return _build(entries(), out, basis)


def creation(basis: FockBasis, j: int) -> OperatorMatrix:
    """Adjoint of annihilation on a square (closed-under-lowering) basis."""
    op = annihilation(basis, j)
    if op.row_basis != op.col_basis:
        raise ValueError("creation needs a basis closed under raising; "
                         "use annihilation(...).dagger() between manifolds")
    return op.dagger()


def number(basis: FockBasis, j: int) -> OperatorMatrix:
    """Diagonal occupation operator n_j."""
    if not 0 <= j < basis.L:
        raise ValueError(f"site {j} outside 0..{basis.L - 1}")
    diag = np.array([s[j] for s in basis.states], dtype=complex)
    return OperatorMatrix(sparse.diags(diag).tocsr(), basis, basis)


def total_number(basis: FockBasis) -> OperatorMatrix:
    """Diagonal total occupation N = sum_j n_j."""
    diag = np.array([s.total for s in basis.states], dtype=complex)
    return OperatorMatrix(sparse.diags(diag).tocsr(), basis, basis)


def sigma_minus(basis: FockBasis, m: int, j: int) -> OperatorMatrix:
    """Level-resolved lowering operator |m_j><(m+1)_j|.

    Summing sqrt(m+1) * sigma_minus(m, j) over m recovers annihilation(j)
    as a matrix identity.
    """
    if not 0 <= j < basis.L:
        raise ValueError(f"site {j} outside 0..{basis.L - 1}")
    if m + 1 > basis.d - 1:
        raise ValueError(f"level {m + 1} outside cap d={basis.d}")
    out = basis.lowered()

    def entries():
        for col, s in enumerate(basis.states):
            if s[j] == m + 1:
                yield out.position(s.replace(j, m)), col, 1.0

    return _build(entries(), out, basis)


def collective_mode(basis: FockBasis, k: int) -> OperatorMatrix:
    """Discrete-Fourier collective mode c_k = L^-1/2 sum_j e^{2 pi i jk/L} a_j.

    Site phases use 1-based site numbering, so k = L is the uniform
    (in-phase) combination.  Modes satisfy [c_k, c_k'^dag] = delta_kk'
    below the local level cap.
    """
    if not 1 <= k <= basis.L:
        raise ValueError(f"mode index {k} outside 1..{basis.L}")
    L = basis.L
    out = basis.lowered()
    rowcount = out.size
    acc = sparse.csr_matrix((rowcount, basis.size), dtype=complex)
    for j in range(L):
        phase = np.exp(2j * np.pi * (j + 1) * k / L)
        acc = acc + phase * annihilation(basis, j).matrix
    return OperatorMatrix((acc / np.sqrt(L)).tocsr(), out, basis)


def pair_exchange(basis: FockBasis) -> OperatorMatrix:
    """Permutation swapping the two site pairs: |n1 n2 n3 n4> -> |n3 n4 n1 n2>.

    Defined for L = 4 only; it is an involution, so eigenvalues are +-1.
    """
    if basis.L != 4:
        raise ValueError("pair exchange needs exactly four sites")

    def entries():
        for col, s in enumerate(basis.states):
            n1, n2, n3, n4 = s.occupations
            yield basis.position((n3, n4, n1, n2)), col, 1.0

    return _build(entries(), basis, basis)
