"""Vectorized master equations and their integrators.

The density operator is column-stacked into a vector r = vec(rho), turning
the master equation into dr/dt = L r with the superoperator built from
Kronecker products: vec(A rho B) = (B^T kron A) vec(rho).

Integrators:

* steady_state: direct linear solve with the trace constraint swapped in
  for one redundant row,
* krylov_step: Arnoldi approximation of exp(L dt) r for constant L,
* magnus_step: first-order Magnus (averaged generator) for time-dependent
  drives, with an optional commutator correction,
* evolve: trajectory sampling with trace, Hermiticity and positivity
  diagnostics.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from .coupling import CouplingTables
from .fock import FockBasis, OperatorMatrix, annihilation, sigma_minus
from .spectra import EffectiveHamiltonian

log = logging.getLogger(__name__)

#: Below this density-operator dimension the superoperator works dense.
DENSE_LIMIT = 40

TRACE_TOL = 1e-10


class SolverError(RuntimeError):
    """Linear solve or propagation failure."""


def vectorize(rho: np.ndarray) -> np.ndarray:
    """Column-stack a square operator into a vector."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("expected a square operator")
    return rho.reshape(-1, order="F").astype(complex)


def devectorize(r: np.ndarray) -> np.ndarray:
    """Inverse of vectorize."""
    r = np.asarray(r)
    dim = int(round(np.sqrt(r.size)))
    if dim * dim != r.size:
        raise ValueError(f"length {r.size} is not a perfect square")
    return r.reshape(dim, dim, order="F")


def _left(mat) -> sparse.csr_matrix:
    """Superoperator for rho -> M rho."""
    dim = mat.shape[0]
    return sparse.kron(sparse.identity(dim), mat, format="csr")


def _right(mat) -> sparse.csr_matrix:
    """Superoperator for rho -> rho M."""
    dim = mat.shape[0]
    return sparse.kron(mat.T, sparse.identity(dim), format="csr")


def _sandwich(a, b) -> sparse.csr_matrix:
    """Superoperator for rho -> A rho B."""
    return sparse.kron(b.T, a, format="csr")


def hamiltonian_superoperator(h) -> sparse.csr_matrix:
    """-i (H rho - rho H^dag) for a (possibly non-Hermitian) H."""
    h = sparse.csr_matrix(h)
    return -1j * (_left(h) - _right(h.conj().T))


@dataclass(frozen=True)
class Liouvillian:
    """Constant superoperator plus optional envelope-scaled drive terms.

    The time-dependent part is kept factored as sum_i f_i(t) * M_i so the
    Magnus average only ever integrates scalar envelopes.
    """

    constant: sparse.csr_matrix
    dim: int
    drives: tuple[tuple[Callable[[float], float], sparse.csr_matrix], ...] = ()
    basis: FockBasis | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.constant.shape[0]

    @property
    def is_constant(self) -> bool:
        return not self.drives

    def at(self, t: float) -> sparse.csr_matrix:
        """Instantaneous superoperator matrix."""
        mat = self.constant
        for envelope, term in self.drives:
            mat = mat + envelope(t) * term
        return mat

    def trace_defect(self) -> float:
        """max |(vec I)^T L| over columns, relative to the largest entry."""
        w = vectorize(np.eye(self.dim))
        resid = np.abs(w @ self.constant).max()
        scale = max(np.abs(self.constant.data).max(initial=0.0), 1.0)
        return float(resid / scale)


def build_liouvillian(h_eff: EffectiveHamiltonian,
                      tables: CouplingTables | None = None,
                      *, bulk_kappa: float = 0.0,
                      extra_hermitian=None,
                      drives: Sequence[tuple[Callable[[float], float],
                                             OperatorMatrix]] = (),
                      check_trace: bool = True) -> Liouvillian:
    """Assemble the master-equation superoperator.

    h_eff supplies both the coherent part and (through its anti-Hermitian
    half) the decay; tables must be the same coefficient set used to
    build it so the recycling terms sigma_- rho sigma_+ balance the decay
    exactly.  bulk_kappa adds independent single-site loss.
    extra_hermitian is folded into the Hamiltonian (rotating-frame CW
    drives); drives adds envelope-scaled Hermitian terms for pulses.
    """
    basis = h_eff.basis
    dim = basis.size
    h_nh = sparse.csr_matrix(h_eff.matrix, dtype=complex)

    if extra_hermitian is not None:
        extra = (extra_hermitian.matrix
                 if isinstance(extra_hermitian, OperatorMatrix)
                 else sparse.csr_matrix(extra_hermitian))
        if (abs(extra - extra.conj().T) > 1e-12 * _scale(extra)).nnz:
            raise ValueError("extra_hermitian must be Hermitian")
        h_nh = h_nh + extra

    recycle = sparse.csr_matrix((dim * dim, dim * dim), dtype=complex)
    if tables is not None:
        n_lvl = basis.d - 1
        L = basis.L
        mat = tables.gamma_matrix()[:n_lvl * L, :n_lvl * L]
        evals = np.linalg.eigvalsh(0.5 * (mat + mat.conj().T))
        if evals.min() < -1e-10 * max(evals.max(), 1.0):
            raise ValueError(
                "collective decay matrix is not positive semidefinite "
                f"(min eigenvalue {evals.min():.3g}); not of Lindblad form")
        sm = {(m, j): sigma_minus(basis, m, j).matrix
              for m in range(n_lvl) for j in range(L)}
        for (m, j), s_mj in sm.items():
            for (n, k), s_nk in sm.items():
                g = tables.gamma[m, j, n, k]
                if g == 0:
                    continue
                recycle = recycle + g * _sandwich(s_mj, s_nk.conj().T)

    if bulk_kappa:
        for j in range(basis.L):
            a = annihilation(basis, j).matrix
            recycle = recycle + bulk_kappa * _sandwich(a, a.conj().T)
            h_nh = h_nh - 0.5j * bulk_kappa * (a.conj().T @ a)

    constant = hamiltonian_superoperator(h_nh) + recycle

    drive_terms = []
    for envelope, op in drives:
        mat = op.matrix if isinstance(op, OperatorMatrix) else sparse.csr_matrix(op)
        drive_terms.append((envelope, hamiltonian_superoperator(mat)))

    liou = Liouvillian(sparse.csr_matrix(constant), dim,
                       tuple(drive_terms), basis)
    if check_trace:
        defect = liou.trace_defect()
        if defect > TRACE_TOL:
            raise ValueError(
                f"Liouvillian does not conserve trace (defect {defect:.3g}); "
                "decay tables and effective Hamiltonian are inconsistent")
    return liou


def _scale(mat) -> float:
    data = mat.data if sparse.issparse(mat) else np.asarray(mat)
    return float(np.abs(data).max(initial=0.0)) or 1.0


def steady_state(liou: Liouvillian, *, residual_tol: float = 1e-10
                 ) -> np.ndarray:
    """Unit-trace density operator with L rho = 0.

    Solves the trace-augmented linear system: the first diagonal row of L
    (redundant when trace is conserved) is replaced by the constraint
    tr rho = 1.  The result is Hermitized, with the asymmetry logged.
    """
    if not liou.is_constant:
        raise SolverError("steady state needs a constant Liouvillian")
    dim = liou.dim
    n = liou.size
    trace_row = vectorize(np.eye(dim)).real

    rhs = np.zeros(n, dtype=complex)
    rhs[0] = 1.0
    if dim <= DENSE_LIMIT:
        a = liou.constant.toarray()
        a[0, :] = trace_row
        try:
            r = np.linalg.solve(a, rhs)
        except np.linalg.LinAlgError:
            null_dim = _null_space_dimension(liou)
            raise SolverError(
                f"steady state is not unique: null space dimension "
                f"{null_dim}") from None
    else:
        a = liou.constant.tolil()
        a[0, :] = trace_row
        try:
            r = spla.spsolve(sparse.csc_matrix(a), rhs)
        except Exception as exc:
            raise SolverError(f"sparse steady-state solve failed: {exc}") \
                from exc
        if not np.all(np.isfinite(r)):
            raise SolverError("sparse steady-state solve returned "
                              "non-finite entries (singular Liouvillian?)")

    norm_l = spla.norm(liou.constant)
    residual = np.linalg.norm(liou.constant @ r) / norm_l
    if residual > residual_tol:
        null_dim = _null_space_dimension(liou) if n <= 1600 else None
        extra = f"; null space dimension {null_dim}" if null_dim else ""
        raise SolverError(
            f"steady-state residual {residual:.3g} exceeds "
            f"{residual_tol:.1g}{extra}")

    rho = devectorize(r)
    asym = np.linalg.norm(rho - rho.conj().T) / max(np.linalg.norm(rho), 1e-300)
    if asym > 1e-12:
        log.info("steady state Hermitized; relative asymmetry %.3g", asym)
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    return vectorize(rho)


def _null_space_dimension(liou: Liouvillian, tol: float = 1e-10) -> int:
    s = np.linalg.svd(liou.constant.toarray(), compute_uv=False)
    return int(np.sum(s < tol * s[0]))


def _arnoldi(mat, v0: np.ndarray, m: int):
    """Arnoldi factorization with one reorthogonalization sweep.

    Returns (K, H, j, breakdown) with K holding j+1 orthonormal columns
    and H the (j+1) x j upper-Hessenberg projection.
    """
    n = v0.size
    beta = np.linalg.norm(v0)
    K = np.zeros((n, m + 1), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    K[:, 0] = v0 / beta
    for j in range(m):
        w = mat @ K[:, j]
        norm_before = np.linalg.norm(w)
        for i in range(j + 1):
            H[i, j] = np.vdot(K[:, i], w)
            w -= H[i, j] * K[:, i]
        # one classical reorthogonalization pass if cancellation was heavy
        if np.linalg.norm(w) < 0.7 * norm_before:
            for i in range(j + 1):
                corr = np.vdot(K[:, i], w)
                H[i, j] += corr
                w -= corr * K[:, i]
        H[j + 1, j] = np.linalg.norm(w)
        if H[j + 1, j] < 1e-14 * max(norm_before, 1.0):
            return K, H, j + 1, True  # happy breakdown: subspace is exact
        K[:, j + 1] = w / H[j + 1, j]
    return K, H, m, False


def krylov_step(liou_or_matrix, r: np.ndarray, dt: float, m: int = 30,
                *, return_error: bool = False):
    """Approximate exp(L dt) r in an m-dimensional Krylov subspace."""
    mat = (liou_or_matrix.constant
           if isinstance(liou_or_matrix, Liouvillian) else liou_or_matrix)
    beta = np.linalg.norm(r)
    if beta == 0.0:
        return (r.copy(), 0.0) if return_error else r.copy()
    m = min(m, mat.shape[0])
    K, H, j, breakdown = _arnoldi(mat, r, m)
    e = scipy.linalg.expm(dt * H[:j, :j])[:, 0]
    out = beta * (K[:, :j] @ e)
    if return_error:
        # a-posteriori estimate from the first neglected Hessenberg entry
        err = 0.0 if breakdown else float(
            beta * np.abs(H[j, j - 1]) * np.abs(dt) * np.abs(e[-1]))
        return out, err
    return out


def magnus_step(liou: Liouvillian, r: np.ndarray, t: float, dt: float,
                *, quadrature: str = "midpoint",
                commutator_correction: bool = False,
                m: int = 30) -> np.ndarray:
    """One step of the averaged-generator (first-order Magnus) scheme.

    The generator over [t, t+dt] is L0 + sum_i <f_i> M_i with the scalar
    envelope averages <f_i> from midpoint (default) or two-point
    Gauss-Legendre quadrature.  With commutator_correction the two-node
    fourth-order formula including dt^2 [A2, A1] sqrt(3)/12 is used.
    """
    if liou.is_constant:
        return krylov_step(liou, r, dt, m)
    c1 = t + dt * (0.5 - np.sqrt(3) / 6)
    c2 = t + dt * (0.5 + np.sqrt(3) / 6)
    if commutator_correction:
        a1 = liou.at(c1)
        a2 = liou.at(c2)
        omega = 0.5 * (a1 + a2) + dt * (np.sqrt(3) / 12) * (a2 @ a1 - a1 @ a2)
        return krylov_step(omega, r, dt, m)
    if quadrature == "midpoint":
        averages = [envelope(t + 0.5 * dt) for envelope, _ in liou.drives]
    elif quadrature == "gl2":
        averages = [0.5 * (envelope(c1) + envelope(c2))
                    for envelope, _ in liou.drives]
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    generator = liou.constant
    for avg, term in zip(averages, liou.drives):
        generator = generator + avg * term[1]
    out = krylov_step(generator, r, dt, m)
    trace_row = vectorize(np.eye(liou.dim))
    drift = abs(trace_row @ out - trace_row @ r)
    if drift > 1e-6 * max(abs(trace_row @ r), 1e-300):
        raise SolverError(
            f"Magnus step at t={t:.3g} s drifted the trace by {drift:.3g}; "
            "reduce the step size")
    return out


@dataclass(frozen=True)
class PropagatorConfig:
    """Integration knobs shared by the propagators."""

    m: int = 30
    dt: float | None = None
    tol: float = 1e-10
    max_dim: int = 100_000

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("Krylov dimension must be at least 2")


@dataclass(frozen=True)
class EvolutionResult:
    """Sampled trajectory with integration diagnostics."""

    times: np.ndarray
    values: dict[str, np.ndarray]
    trace_drift: np.ndarray
    hermiticity_defect: float
    min_eigenvalue: float | None
    n_steps: int


def _observable_rows(observables, dim):
    rows = {}
    for name, op in observables.items():
        mat = op.matrix.toarray() if isinstance(op, OperatorMatrix) \
            else np.asarray(op)
        if mat.shape != (dim, dim):
            raise ValueError(f"observable {name!r} has shape {mat.shape}, "
                             f"expected {(dim, dim)}")
        rows[name] = vectorize(mat.T)  # tr(O rho) = vec(O^T)^T vec(rho)
    return rows


def evolve(liou: Liouvillian, r0: np.ndarray, t_grid: np.ndarray,
           observables: Mapping[str, OperatorMatrix | np.ndarray],
           config: PropagatorConfig = PropagatorConfig()) -> EvolutionResult:
    """Propagate r0 over t_grid and sample tr(O rho) for each observable.

    Constant Liouvillians use adaptive Krylov substeps targeting
    config.tol; driven ones take fixed Magnus steps of config.dt (default
    1/50 of the grid spacing).  Trace drift is recorded at every sample;
    Hermiticity always, positivity on systems with dim <= 81.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) < 1:
        raise ValueError("need a one-dimensional, non-empty time grid")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("time grid must be strictly increasing")
    dim = liou.dim
    rows = _observable_rows(observables, dim)

    r = np.asarray(r0, dtype=complex).copy()
    trace0 = vectorize(np.eye(dim)) @ r
    values = {name: np.zeros(len(t_grid), dtype=complex) for name in rows}
    drift = np.zeros(len(t_grid))
    herm_worst = 0.0
    mineig: float | None = None
    spot_every = max(1, len(t_grid) // 6)
    n_steps = 0

    def sample(i, r):
        nonlocal herm_worst, mineig
        for name, row in rows.items():
            values[name][i] = row @ r
        drift[i] = abs((vectorize(np.eye(dim)) @ r) - trace0)
        rho = devectorize(r)
        herm_worst = max(herm_worst,
                         float(np.linalg.norm(rho - rho.conj().T)))
        if dim <= 81 and i % spot_every == 0:
            low = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
            mineig = low if mineig is None else min(mineig, low)

    t = t_grid[0]
    sample(0, r)
    for i in range(1, len(t_grid)):
        span = t_grid[i] - t
        if liou.is_constant:
            remaining = span
            dt = span if config.dt is None else min(config.dt, span)
            while remaining > 1e-18 * max(abs(t_grid[i]), 1e-12):
                step = min(dt, remaining)
                out, err = krylov_step(liou, r, step, config.m,
                                       return_error=True)
                norm = np.linalg.norm(out)
                if err > config.tol * max(norm, 1e-300) and step > 1e-18:
                    dt = step / 2
                    continue
                r = out
                remaining -= step
                n_steps += 1
        else:
            dt = config.dt if config.dt is not None else span / 50
            n_sub = max(1, int(np.ceil(span / dt)))
            h = span / n_sub
            for k in range(n_sub):
                r = magnus_step(liou, r, t + k * h, h, m=config.m)
                n_steps += 1
        t = t_grid[i]
        sample(i, r)

    if drift.max() > 1e-8 * max(abs(trace0), 1.0):
        log.warning("trace drifted by %.3g during evolution", drift.max())
    return EvolutionResult(t_grid, values, drift, herm_worst, mineig,
                           n_steps)


def export_trajectory_csv(result: EvolutionResult, path):
    """Long-format CSV: one row per (time, observable)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_s", "observable_name", "value_re", "value_im",
                         "trace_drift"])
        for i, t in enumerate(result.times):
            for name, series in result.values.items():
                writer.writerow([repr(float(t)), name,
                                 repr(float(series[i].real)),
                                 repr(float(series[i].imag)),
                                 repr(float(result.trace_drift[i]))])
