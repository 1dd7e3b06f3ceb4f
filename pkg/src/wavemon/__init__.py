"""Simulation toolkit for multilevel emitter arrays coupled through a waveguide."""

__version__ = "0.1.0"

from .fock import (FockState, FockBasis, SiteModel, OperatorMatrix,
                   enumerate_basis, annihilation, creation, number,
                   total_number, sigma_minus, collective_mode, pair_exchange)

from .coupling import (
    PRESETS,
    CouplingTables,
    EmitterLayout,
    WaveguideGeometry,
    coupling_below,
    coupling_full_above,
    coupling_simplified,
    coupling_tables,
    dispersion,
    drive_amplitude,
    drive_amplitude_rotating,
    flux_to_power,
    group_velocity,
    phase_velocity,
    two_pair_layout,
    uniform_layout,
    wavenumber,
)

from .spectra import (
    BiorthogonalSpectrum,
    DecayChannelTable,
    DiagonalizationError,
    EffectiveHamiltonian,
    StateLabel,
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

from .liouville import (
    EvolutionResult,
    Liouvillian,
    PropagatorConfig,
    SolverError,
    build_liouvillian,
    devectorize,
    evolve,
    export_trajectory_csv,
    krylov_step,
    magnus_step,
    steady_state,
    vectorize,
)

from .experiments import (
    BurstResult,
    ObservableMap,
    PulseSpec,
    SpectrumResult,
    SweepGrid,
    analytic_spectral_density,
    analytic_transmission,
    full_width_half_maximum,
    power_spectrum,
    pulsed_spectroscopy,
    spectral_peaks,
    superradiant_burst,
    transmission_sweep,
)

__all__ = [
    "EvolutionResult",
    "Liouvillian",
    "PropagatorConfig",
    "SolverError",
    "build_liouvillian",
    "devectorize",
    "evolve",
    "export_trajectory_csv",
    "krylov_step",
    "magnus_step",
    "steady_state",
    "vectorize",
    "BiorthogonalSpectrum",
    "DecayChannelTable",
    "DiagonalizationError",
    "EffectiveHamiltonian",
    "StateLabel",
    "biorthogonalize_degenerate",
    "bosonic_multiplicity",
    "build_h_eff",
    "classify",
    "collective_channels",
    "decay_channels",
    "diagonalize",
    "dicke_multiplicity",
    "export_spectrum_csv",
    "harmonic_oracle",
    "qubit_dicke_oracle",
    "two_pair_oracle",
    "PRESETS",
    "CouplingTables",
    "EmitterLayout",
    "WaveguideGeometry",
    "coupling_below",
    "coupling_full_above",
    "coupling_simplified",
    "coupling_tables",
    "dispersion",
    "drive_amplitude",
    "drive_amplitude_rotating",
    "flux_to_power",
    "group_velocity",
    "phase_velocity",
    "two_pair_layout",
    "uniform_layout",
    "wavenumber",
    "__version__",
    "FockState", "FockBasis", "SiteModel", "OperatorMatrix",
    "enumerate_basis", "annihilation", "creation", "number", "total_number",
    "sigma_minus", "collective_mode", "pair_exchange",
]
