"""Waveguide dispersion and the coupling coefficients it induces.

A rectangular waveguide (width a, height b) propagates its lowest TE mode
above the cutoff Omega_perp = c*pi/a.  Emitters placed inside exchange
excitations through that mode and decay into it collectively; below the
cutoff only an evanescent, purely coherent coupling survives.

Three coefficient routes are exposed:

* coupling_full_above: the oscillatory forms valid for any transition
  frequency above cutoff, with explicit dispersion factors.
* coupling_simplified: the far-above-cutoff, degenerate-frequency forms
  gamma ~ cos(omega0 t_jk), J ~ sin(omega0 t_jk) used for design work.
* coupling_below: the evanescent exchange for transitions below cutoff.

All frequencies are angular (rad/s).  The CLI layer converts plain Hz.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.constants import c as SPEED_OF_LIGHT, hbar

from .fock import SiteModel

log = logging.getLogger(__name__)

#: Relative guard band around the cutoff; the coefficients diverge there,
#: so queries inside the band are rejected rather than regularized.
CUTOFF_GUARD = 1e-6

TWO_PI = 2.0 * np.pi

#: Reference parameter set used throughout the examples and presets
#: (angular frequencies).
PRESETS = {
    "table1": {
        "omega0": TWO_PI * 7.28e9,
        "anharmonicity": TWO_PI * 218e6,
        "capacitive_j": TWO_PI * 45e6,
        "gamma": TWO_PI * 25e6,
        "cutoff": TWO_PI * 6.55e9,
        "bulk_kappa": TWO_PI * 15e3,
    },
}


@dataclass(frozen=True)
class WaveguideGeometry:
    """Rectangular waveguide cross-section; cutoff = c*pi/a."""

    a: float
    b: float
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not self.a > self.b > 0:
            raise ValueError("need width a > height b > 0")

    @property
    def cutoff(self) -> float:
        return self.c * np.pi / self.a

    @classmethod
    def from_cutoff(cls, cutoff: float, aspect: float = 2.0,
                    c: float = SPEED_OF_LIGHT) -> "WaveguideGeometry":
        """Geometry whose TE cutoff is the given angular frequency."""
        if cutoff <= 0:
            raise ValueError("cutoff must be positive")
        a = c * np.pi / cutoff
        return cls(a=a, b=a / aspect, c=c)

    def _check_above(self, omega: float, what: str = "frequency"):
        if omega <= self.cutoff * (1.0 + CUTOFF_GUARD):
            raise ValueError(
                f"{what} {omega:.6g} rad/s is at or below the cutoff "
                f"{self.cutoff:.6g} rad/s (guard band {CUTOFF_GUARD:g})")

    def _check_below(self, omega: float, what: str = "frequency"):
        if omega >= self.cutoff * (1.0 - CUTOFF_GUARD):
            raise ValueError(
                f"{what} {omega:.6g} rad/s is at or above the cutoff "
                f"{self.cutoff:.6g} rad/s (guard band {CUTOFF_GUARD:g})")


def dispersion(geom: WaveguideGeometry, k_z: float) -> float:
    """omega(k_z) = sqrt(c^2 k_z^2 + cutoff^2)."""
    return float(np.sqrt((geom.c * k_z) ** 2 + geom.cutoff ** 2))


def wavenumber(geom: WaveguideGeometry, omega: float) -> float:
    """Propagating wavenumber k_z(omega); inverse of dispersion."""
    geom._check_above(omega)
    return float(np.sqrt(omega ** 2 - geom.cutoff ** 2) / geom.c)


def group_velocity(geom: WaveguideGeometry, omega: float) -> float:
    geom._check_above(omega)
    return float(geom.c * np.sqrt(1.0 - (geom.cutoff / omega) ** 2))


def phase_velocity(geom: WaveguideGeometry, omega: float) -> float:
    geom._check_above(omega)
    return float(geom.c / np.sqrt(1.0 - (geom.cutoff / omega) ** 2))


@dataclass(frozen=True)
class EmitterLayout:
    """Positions, decay scales and level structure of the emitters.

    x_j is the transverse coordinate (0..a when a geometry is attached),
    z_j the longitudinal one.  gamma_j is the single-site decay scale of
    site j.  design_frequency fixes the phase factors of the simplified
    regime (and of drives and input-output sums built on it); it defaults
    to the mean site frequency.
    """

    sites: tuple[SiteModel, ...]
    x: tuple[float, ...]
    z: tuple[float, ...]
    gamma: tuple[float, ...]
    c: float = SPEED_OF_LIGHT
    design_frequency: float | None = None

    def __post_init__(self):
        L = len(self.sites)
        if not (len(self.x) == len(self.z) == len(self.gamma) == L):
            raise ValueError("sites, x, z and gamma must have equal length")
        if any(g < 0 for g in self.gamma):
            raise ValueError("decay rates must be non-negative")

    @property
    def L(self) -> int:
        return len(self.sites)

    @property
    def omega0(self) -> float:
        """Design frequency for phase factors."""
        if self.design_frequency is not None:
            return self.design_frequency
        return float(np.mean([s.omega for s in self.sites]))

    def delay(self, j: int, k: int) -> float:
        """Propagation delay t_jk = |z_j - z_k| / c."""
        return abs(self.z[j] - self.z[k]) / self.c

    def site_phase(self, j: int, frequency: float | None = None) -> complex:
        """Propagation phase factor exp(i omega z_j / c) of site j."""
        omega = self.omega0 if frequency is None else frequency
        return complex(np.exp(1j * omega * self.z[j] / self.c))


def uniform_layout(L: int, site: SiteModel, gamma: float, spacing_phase: float,
                   *, x_over_a: float = 0.5, a: float = 1.0,
                   c: float = SPEED_OF_LIGHT) -> EmitterLayout:
    """Equally spaced identical emitters.

    spacing_phase is omega0 * t between neighbours: 2*pi*n gives in-phase
    (wavelength) spacing, pi gives half-wavelength spacing.
    """
    dz = spacing_phase * c / site.omega
    return EmitterLayout(
        sites=(site,) * L,
        x=(x_over_a * a,) * L,
        z=tuple(j * dz for j in range(L)),
        gamma=(gamma,) * L,
        c=c,
    )


def two_pair_layout(omega0: float, gamma: float, delta: float,
                    anharmonicity: float = 0.0, kind: str = "transmon",
                    *, x_over_a: float = 0.5, a: float = 1.0,
                    c: float = SPEED_OF_LIGHT) -> EmitterLayout:
    """Two capacitively coupled pairs, half a wavelength apart.

    Sites 0,1 form the first pair at frequency omega0 + delta/2, sites 2,3
    the second at omega0 - delta/2.  The pair separation pi*c/omega0 makes
    the design phases {+1, +1, -1, -1}.
    """
    if kind == "harmonic":
        anharmonicity = 0.0
    s1 = SiteModel(kind, omega0 + delta / 2.0, anharmonicity)
    s2 = SiteModel(kind, omega0 - delta / 2.0, anharmonicity)
    z2 = np.pi * c / omega0
    return EmitterLayout(
        sites=(s1, s1, s2, s2),
        x=(x_over_a * a,) * 4,
        z=(0.0, 0.0, z2, z2),
        gamma=(gamma,) * 4,
        c=c,
        design_frequency=omega0,
    )


def _chi(geom: WaveguideGeometry, omega_m: float, t_jk: float) -> complex:
    """Oscillatory dispersion coefficient for a propagating transition."""
    kz_c = np.sqrt(omega_m ** 2 - geom.cutoff ** 2)
    return omega_m ** 2 / kz_c * np.exp(1j * t_jk * kz_c)


def _zeta(geom: WaveguideGeometry, omega_m: float, t_jk: float) -> float:
    """Evanescent counterpart of _chi below the cutoff (real)."""
    kappa_c = np.sqrt(geom.cutoff ** 2 - omega_m ** 2)
    return omega_m ** 2 / kappa_c * np.exp(-t_jk * kappa_c)


def _prefactor(layout: EmitterLayout, j: int, k: int) -> float:
    wj = layout.sites[j].omega
    wk = layout.sites[k].omega
    return 0.5 * np.sqrt(layout.gamma[j] * layout.gamma[k] / (wj * wk))


def _check_inside(geom: WaveguideGeometry, layout: EmitterLayout, *sites: int):
    for j in sites:
        if not 0.0 <= layout.x[j] <= geom.a:
            raise ValueError(
                f"site {j} at x={layout.x[j]:.6g} m lies outside the "
                f"waveguide cross-section (width {geom.a:.6g} m)")


def coupling_full_above(geom: WaveguideGeometry, layout: EmitterLayout,
                        m: int, j: int, n: int, k: int
                        ) -> tuple[complex, complex]:
    """Collective decay and exchange for propagating transitions.

    Returns (gamma_mjnk, J_mjnk).  Both transition frequencies must sit
    above the cutoff by more than the guard band.
    """
    _check_inside(geom, layout, j, k)
    w_mj = layout.sites[j].transition_frequency(m)
    w_nk = layout.sites[k].transition_frequency(n)
    geom._check_above(w_mj, f"transition ({m},{j})")
    geom._check_above(w_nk, f"transition ({n},{k})")

    t_jk = abs(layout.z[j] - layout.z[k]) / geom.c
    chi_m = _chi(geom, w_mj, t_jk)
    chi_n = _chi(geom, w_nk, t_jk)
    envelope = (_prefactor(layout, j, k)
                * np.sqrt((m + 1) * (n + 1))
                * np.sin(np.pi * layout.x[j] / geom.a)
                * np.sin(np.pi * layout.x[k] / geom.a))
    gamma = envelope * (chi_m + np.conj(chi_n))
    exchange = envelope * (-0.5j) * (chi_m - np.conj(chi_n))
    return complex(gamma), complex(exchange)


def coupling_simplified(layout: EmitterLayout, m: int, j: int, n: int, k: int
                        ) -> tuple[float, float]:
    """Design-regime coefficients: far above cutoff, degenerate frequencies.

    gamma = sqrt(gamma_j gamma_k (m+1)(n+1)) cos(omega0 t_jk)
    J     = sqrt(gamma_j gamma_k (m+1)(n+1)) sin(omega0 t_jk) / 2

    The phase is evaluated at the layout design frequency.
    """
    scale = np.sqrt(layout.gamma[j] * layout.gamma[k] * (m + 1) * (n + 1))
    phase = layout.omega0 * layout.delay(j, k)
    return float(scale * np.cos(phase)), float(0.5 * scale * np.sin(phase))


def coupling_below(geom: WaveguideGeometry, layout: EmitterLayout,
                   m: int, j: int, n: int, k: int) -> tuple[float, float]:
    """Evanescent coupling for transitions below the cutoff.

    Dissipation through the waveguide is impossible below cutoff, so the
    decay entry is identically zero; for non-degenerate transitions a
    small non-Lindblad residual exists and is dropped with a log message.
    The exchange is negative and decays exponentially with separation.
    """
    _check_inside(geom, layout, j, k)
    w_mj = layout.sites[j].transition_frequency(m)
    w_nk = layout.sites[k].transition_frequency(n)
    geom._check_below(w_mj, f"transition ({m},{j})")
    geom._check_below(w_nk, f"transition ({n},{k})")

    t_jk = abs(layout.z[j] - layout.z[k]) / geom.c
    zeta_m = _zeta(geom, w_mj, t_jk)
    zeta_n = _zeta(geom, w_nk, t_jk)
    if not np.isclose(w_mj, w_nk, rtol=1e-12, atol=0.0):
        log.info("dropping non-Lindblad below-cutoff residual for "
                 "transitions (%d,%d) and (%d,%d)", m, j, n, k)
    envelope = (_prefactor(layout, j, k)
                * np.sqrt((m + 1) * (n + 1))
                * np.sin(np.pi * layout.x[j] / geom.a)
                * np.sin(np.pi * layout.x[k] / geom.a))
    exchange = -0.5 * envelope * (zeta_m + zeta_n)
    return 0.0, float(exchange)


@dataclass(frozen=True)
class CouplingTables:
    """gamma_mjnk and J_mjnk over all (level, site) pairs.

    Tables are indexed [m, j, n, k] with m, n = 0..d-2 and j, k sites.
    The flattened matrix uses the (m, j) -> m*L + j ordering.
    """

    gamma: np.ndarray
    exchange: np.ndarray
    regime: str
    layout: EmitterLayout = field(repr=False)

    @property
    def levels(self) -> int:
        return self.gamma.shape[0]

    @property
    def L(self) -> int:
        return self.gamma.shape[1]

    def _flat(self, table: np.ndarray) -> np.ndarray:
        n_lvl, L = table.shape[:2]
        return table.reshape(n_lvl * L, n_lvl * L)

    def gamma_matrix(self) -> np.ndarray:
        """gamma flattened to ((d-1)L, (d-1)L)."""
        return self._flat(self.gamma)

    def exchange_matrix(self) -> np.ndarray:
        return self._flat(self.exchange)


def coupling_tables(layout: EmitterLayout, d: int, regime: str = "simplified",
                    geom: WaveguideGeometry | None = None) -> CouplingTables:
    """Evaluate the coefficient tables for all transitions up to level d-1.

    regime is one of "simplified", "full-above-cutoff" or "below-cutoff";
    the latter two need a geometry.
    """
    if regime not in ("simplified", "full-above-cutoff", "below-cutoff"):
        raise ValueError(f"unknown coupling regime {regime!r}")
    if regime != "simplified" and geom is None:
        raise ValueError(f"regime {regime!r} needs a WaveguideGeometry")

    L = layout.L
    n_lvl = d - 1
    gamma = np.zeros((n_lvl, L, n_lvl, L), dtype=complex)
    exchange = np.zeros_like(gamma)
    for m in range(n_lvl):
        for j in range(L):
            for n in range(n_lvl):
                for k in range(L):
                    if regime == "simplified":
                        g, x = coupling_simplified(layout, m, j, n, k)
                    elif regime == "full-above-cutoff":
                        g, x = coupling_full_above(geom, layout, m, j, n, k)
                    else:
                        g, x = coupling_below(geom, layout, m, j, n, k)
                    gamma[m, j, n, k] = g
                    exchange[m, j, n, k] = x
    if regime == "simplified":
        gamma = gamma.real
        exchange = exchange.real
    return CouplingTables(gamma, exchange, regime, layout)


def self_rate(layout: EmitterLayout, m: int, j: int) -> float:
    """Design-regime on-site decay rate gamma_mjmj = (m+1) gamma_j."""
    return (m + 1) * layout.gamma[j]


def drive_amplitude(layout: EmitterLayout, P: float, omega_d: float,
                    m: int, j: int, t: float,
                    geom: WaveguideGeometry | None = None) -> float:
    """Time-domain drive amplitude (rad/s) seen by transition (m, j).

    P is the input power in watts.  If a geometry is supplied and the
    drive cannot propagate, the amplitude is zero and a warning is issued.
    """
    if P < 0:
        raise ValueError("power must be non-negative")
    if geom is not None and omega_d <= geom.cutoff * (1.0 + CUTOFF_GUARD):
        warnings.warn("drive frequency below the waveguide cutoff; "
                      "no propagating field, amplitude set to zero")
        return 0.0
    w_mj = layout.sites[j].transition_frequency(m)
    rabi = np.sqrt(2.0 * self_rate(layout, m, j) * P / (hbar * w_mj))
    t_j = layout.z[j] / layout.c
    return float(-rabi * np.sin(omega_d * (t + t_j)))


def drive_amplitude_rotating(layout: EmitterLayout, P: float, omega_d: float,
                             m: int, j: int,
                             geom: WaveguideGeometry | None = None,
                             phase_frequency: float | None = None) -> complex:
    """Rotating-frame drive amplitude d_mj (rad/s, complex).

    d_mj = i sqrt(P gamma_mjmj / (2 hbar omega_mj)) exp(i omega z_j / c),
    with the propagation phase evaluated at phase_frequency (defaults to
    the drive frequency; design-regime callers pass the layout design
    frequency so the phases match the coupling tables).
    """
    if P < 0:
        raise ValueError("power must be non-negative")
    if geom is not None and omega_d <= geom.cutoff * (1.0 + CUTOFF_GUARD):
        warnings.warn("drive frequency below the waveguide cutoff; "
                      "no propagating field, amplitude set to zero")
        return 0.0j
    w_mj = layout.sites[j].transition_frequency(m)
    mag = np.sqrt(P * self_rate(layout, m, j) / (2.0 * hbar * w_mj))
    return 1j * mag * layout.site_phase(j, phase_frequency
                                        if phase_frequency is not None
                                        else omega_d)


def flux_to_power(flux: float, omega_d: float) -> float:
    """Convert a photon flux (1/s) at omega_d into a power in watts."""
    return hbar * omega_d * flux
