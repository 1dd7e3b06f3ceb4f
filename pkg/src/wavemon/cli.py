"""Command-line front end.

Configs are JSON with frequencies in plain Hz (suffix `_hz`) and drive
powers as P/2pi in kHz, matching the way experimental captions quote
them; everything is converted to angular units at parse time.  Each run
writes one CSV plus a JSON metadata sidecar embedding the fully
resolved parameter set, so a config (or the sidecar of a previous run)
reproduces its outputs byte for byte.

Exit codes: 0 success, 2 config error, 3 solver error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from .coupling import PRESETS, coupling_tables, uniform_layout
from .experiments import (
    ObservableMap,
    power_spectrum,
    pulsed_spectroscopy,
    superradiant_burst,
    transmission_sweep,
    _transmission_point,
    _two_pair,
    drive_operator,
    transmission_amplitude,
)
from .fock import CapacityError, SiteModel, enumerate_basis
from .liouville import (SolverError, build_liouvillian, devectorize,
                        steady_state)
from .spectra import (BiorthogonalSpectrum, DiagonalizationError,
                      build_h_eff, classify, diagonalize,
                      export_spectrum_csv)

EXPERIMENTS = ("spectrum", "burst", "transmission", "power-spectrum",
               "pulsed-spec", "steady-state")


class ConfigError(Exception):
    """Invalid run configuration; message names the offending field."""


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved run parameters, all frequencies angular (rad/s)."""

    experiment: str
    model: str = "transmon"
    sites: int = 4
    levels: int = 3
    at_most: int | None = None
    omega0: float = PRESETS["table1"]["omega0"]
    anharmonicity: float = PRESETS["table1"]["anharmonicity"]
    capacitive_j: float = PRESETS["table1"]["capacitive_j"]
    gamma: float = PRESETS["table1"]["gamma"]
    bulk_kappa: float = PRESETS["table1"]["bulk_kappa"]
    flux: float = 2 * np.pi * 700.0
    delta_over_gamma: float = 0.0
    detuning_over_gamma: float = 0.0
    delta_range: tuple[float, float, int] = (-10.0, 10.0, 41)
    detuning_range: tuple[float, float, int] = (-10.0, 10.0, 41)
    probe_range: tuple[float, float, int] = (-15.0, 7.0, 23)
    phi_over_pi: tuple[float, ...] = (0.0, 1.0)
    manifolds: tuple[int, ...] = (0, 1, 2)
    t_max_over_gamma: float = 3.0
    points: int = 400
    n_tau: int = 1024
    workers: int = 0
    output_dir: str = "."

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment: unknown kind "
                              f"{self.experiment!r}; choose from "
                              + ", ".join(EXPERIMENTS))
        if self.model not in ("qubit", "transmon", "harmonic"):
            raise ConfigError(f"model: unknown site model {self.model!r}")
        if self.sites < 1:
            raise ConfigError("sites: need at least one site")
        if self.levels < 2:
            raise ConfigError("levels: need at least two levels per site")
        if self.at_most is not None and self.at_most < 1:
            raise ConfigError("at_most: must be at least 1")
        if self.flux <= 0:
            raise ConfigError("power_khz: must be positive")
        if self.points < 2:
            raise ConfigError("points: need at least 2 time samples")
        if self.n_tau < 16:
            raise ConfigError("n_tau: need at least 16 lag samples")
        for name in ("omega0", "gamma"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name}_hz: must be positive")
        for name in ("delta_range", "detuning_range", "probe_range"):
            lo, hi, n = getattr(self, name)
            if n < 2 or not hi > lo:
                raise ConfigError(f"{name}: need an increasing range with "
                                  "at least 2 points")

    @property
    def n_jobs(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)

    def resolved(self) -> dict:
        """Hz-unit dict that reproduces this config when parsed."""
        out = {
            "experiment": self.experiment,
            "model": self.model,
            "sites": self.sites,
            "levels": self.levels,
            "at_most": self.at_most,
            "omega0_hz": self.omega0 / (2 * np.pi),
            "anharmonicity_hz": self.anharmonicity / (2 * np.pi),
            "capacitive_j_hz": self.capacitive_j / (2 * np.pi),
            "gamma_hz": self.gamma / (2 * np.pi),
            "bulk_kappa_hz": self.bulk_kappa / (2 * np.pi),
            "power_khz": self.flux / (2 * np.pi * 1e3),
            "delta_over_gamma": self.delta_over_gamma,
            "detuning_over_gamma": self.detuning_over_gamma,
            "delta_range": list(self.delta_range),
            "detuning_range": list(self.detuning_range),
            "probe_range": list(self.probe_range),
            "phi_over_pi": list(self.phi_over_pi),
            "manifolds": list(self.manifolds),
            "t_max_over_gamma": self.t_max_over_gamma,
            "points": self.points,
            "n_tau": self.n_tau,
            "workers": self.workers,
            "output_dir": self.output_dir,
        }
        return out


_HZ_KEYS = {"omega0_hz": "omega0", "anharmonicity_hz": "anharmonicity",
            "capacitive_j_hz": "capacitive_j", "gamma_hz": "gamma",
            "bulk_kappa_hz": "bulk_kappa"}
_PLAIN_KEYS = {"experiment", "model", "sites", "levels", "at_most",
               "delta_over_gamma", "detuning_over_gamma",
               "t_max_over_gamma", "points", "n_tau", "workers",
               "output_dir"}
_RANGE_KEYS = {"delta_range", "detuning_range", "probe_range"}
_LIST_KEYS = {"phi_over_pi", "manifolds"}


def config_from_dict(data: dict) -> RunConfig:
    """Validate a Hz-unit mapping and convert to a RunConfig.

    Unit discipline is enforced by key names: frequency-valued keys must
    carry the _hz suffix, and angular-unit spellings are rejected.
    """
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    kwargs = {}
    preset = data.get("preset")
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}")
        values = PRESETS[preset]
        kwargs.update(omega0=values["omega0"],
                      anharmonicity=values["anharmonicity"],
                      capacitive_j=values["capacitive_j"],
                      gamma=values["gamma"],
                      bulk_kappa=values["bulk_kappa"])
    for key, value in data.items():
        if key == "preset":
            continue
        if key.endswith("_rad_s") or key.endswith("_rads"):
            raise ConfigError(f"{key}: configs take plain Hz "
                              f"(use {key.split('_rad')[0]}_hz)")
        if key in _HZ_KEYS:
            _require_number(key, value)
            kwargs[_HZ_KEYS[key]] = 2 * np.pi * float(value)
        elif key == "power_khz":
            _require_number(key, value)
            kwargs["flux"] = 2 * np.pi * 1e3 * float(value)
        elif key in _RANGE_KEYS:
            kwargs[key] = _parse_range(key, value)
        elif key == "phi_over_pi":
            kwargs[key] = tuple(float(v) for v in _require_list(key, value))
        elif key == "manifolds":
            kwargs[key] = _parse_manifolds(value)
        elif key in _PLAIN_KEYS:
            kwargs[key] = value
        else:
            raise ConfigError(f"{key}: unknown configuration field")
    if "experiment" not in kwargs:
        raise ConfigError("experiment: missing (one of "
                          + ", ".join(EXPERIMENTS) + ")")
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _require_number(key, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")


def _require_list(key, value):
    if not isinstance(value, (list, tuple)):
        raise ConfigError(f"{key}: expected a list, got {value!r}")
    return value


def _parse_range(key, value) -> tuple[float, float, int]:
    value = _require_list(key, value)
    if len(value) != 3:
        raise ConfigError(f"{key}: expected [start, stop, points]")
    return (float(value[0]), float(value[1]), int(value[2]))


def _parse_manifolds(value) -> tuple[int, ...]:
    if isinstance(value, str):
        if ".." in value:
            lo, _, hi = value.partition("..")
            try:
                return tuple(range(int(lo), int(hi) + 1))
            except ValueError as exc:
                raise ConfigError(f"manifolds: bad range {value!r}") from exc
        try:
            return (int(value),)
        except ValueError as exc:
            raise ConfigError(f"manifolds: bad value {value!r}") from exc
    value = _require_list("manifolds", value)
    return tuple(int(v) for v in value)


def _site(cfg: RunConfig) -> SiteModel:
    anharm = 0.0 if cfg.model == "harmonic" else cfg.anharmonicity
    return SiteModel(cfg.model, cfg.omega0, anharm)


def _grid(rng: tuple[float, float, int], scale: float,
          offset: float = 0.0) -> np.ndarray:
    lo, hi, n = rng
    return offset + scale * np.linspace(lo, hi, n)


def _write(out_map: ObservableMap, cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, name)
    out_map.metadata["resolved_config"] = cfg.resolved()
    out_map.write(path)
    return path


def _run_spectrum(cfg: RunConfig) -> str:
    top = max(cfg.manifolds)
    d = 2 if cfg.model == "qubit" else max(cfg.levels, top + 1)
    site = _site(cfg)
    layout = uniform_layout(cfg.sites, site, cfg.gamma, 0.0)
    basis = enumerate_basis(cfg.sites, d, at_most=top)
    tables = coupling_tables(layout, d)
    h = build_h_eff(basis, layout, tables)
    spectrum = diagonalize(h)
    wanted = np.isin(spectrum.manifolds, cfg.manifolds)
    idx = np.flatnonzero(wanted)
    spectrum = BiorthogonalSpectrum(
        spectrum.eigenvalues[idx], spectrum.right[:, idx],
        spectrum.left[:, idx], spectrum.norms[idx], spectrum.basis,
        spectrum.manifolds[idx])
    labels = classify(spectrum, gamma_ref=cfg.gamma)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "spectrum.csv")
    export_spectrum_csv(spectrum, path, labels)
    with open(path + ".meta.json", "w") as fh:
        json.dump({"toolkit_version": __version__,
                   "experiment": "spectrum",
                   "resolved_config": cfg.resolved()},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _run_burst(cfg: RunConfig) -> str:
    t_grid = np.linspace(0.0, cfg.t_max_over_gamma / cfg.gamma, cfg.points)
    result = superradiant_burst(_site(cfg), cfg.sites, (1,) * cfg.sites,
                                t_grid, cfg.gamma)
    out_map = result.as_map(model=cfg.model, gamma_rad_s=cfg.gamma)
    return _write(out_map, cfg, "burst.csv")


def _run_transmission(cfg: RunConfig) -> str:
    deltas = _grid(cfg.delta_range, cfg.gamma)
    omega_d = _grid(cfg.detuning_range, -cfg.gamma, cfg.omega0)[::-1]
    out_map = transmission_sweep(
        deltas, omega_d, cfg.flux, kind=cfg.model, omega0=cfg.omega0,
        gamma=cfg.gamma, j_cap=cfg.capacitive_j,
        anharmonicity=cfg.anharmonicity, kappa=cfg.bulk_kappa,
        d=cfg.levels, at_most=cfg.at_most or 2, n_jobs=cfg.n_jobs)
    return _write(out_map, cfg, "transmission.csv")


def _run_power_spectrum(cfg: RunConfig) -> str:
    result = power_spectrum(
        cfg.delta_over_gamma * cfg.gamma, cfg.flux, kind=cfg.model,
        omega0=cfg.omega0, gamma=cfg.gamma, j_cap=cfg.capacitive_j,
        anharmonicity=cfg.anharmonicity, kappa=cfg.bulk_kappa,
        d=cfg.levels, at_most=cfg.at_most or 2, n_tau=cfg.n_tau)
    return _write(result.as_map(), cfg, "power_spectrum.csv")


def _run_pulsed(cfg: RunConfig) -> str:
    dark = cfg.omega0 + cfg.capacitive_j
    omega_p = _grid(cfg.probe_range, cfg.gamma, dark)
    phi = tuple(np.pi * v for v in cfg.phi_over_pi)
    out_map = pulsed_spectroscopy(
        phi, omega_p, kind=cfg.model, omega0=cfg.omega0, gamma=cfg.gamma,
        j_cap=cfg.capacitive_j, anharmonicity=cfg.anharmonicity,
        kappa=cfg.bulk_kappa, at_most=cfg.at_most or 3,
        n_jobs=cfg.n_jobs)
    return _write(out_map, cfg, "pulsed_spec.csv")


def _run_steady_state(cfg: RunConfig) -> str:
    delta = cfg.delta_over_gamma * cfg.gamma
    omega_d = cfg.omega0 - cfg.gamma * cfg.detuning_over_gamma
    layout, basis, tables, cap = _two_pair(
        delta, kind=cfg.model, omega0=cfg.omega0, gamma=cfg.gamma,
        j_cap=cfg.capacitive_j, anharmonicity=cfg.anharmonicity,
        d=cfg.levels, at_most=cfg.at_most or 2)
    h = build_h_eff(basis, layout, tables, cap, frame_frequency=omega_d)
    drive = drive_operator(basis, layout, cfg.flux, omega_d)
    liou = build_liouvillian(h, tables, bulk_kappa=cfg.bulk_kappa,
                             extra_hermitian=drive)
    rho = devectorize(steady_state(liou))
    t_amp = transmission_amplitude(rho, basis, layout, cfg.flux)
    populations = np.real(np.diag(rho))
    states = ["".join(str(n) for n in s) for s in basis.states]
    out_map = ObservableMap(
        coords={"state": np.arange(basis.size)},
        values={"population": populations},
        metadata={"experiment": "steady_state",
                  "state_labels": states,
                  "omega_d_rad_s": omega_d,
                  "transmission_re": float(t_amp.real),
                  "transmission_im": float(t_amp.imag),
                  "transmission_sq": float(abs(t_amp) ** 2)})
    return _write(out_map, cfg, "steady_state.csv")


_RUNNERS = {
    "spectrum": _run_spectrum,
    "burst": _run_burst,
    "transmission": _run_transmission,
    "power-spectrum": _run_power_spectrum,
    "pulsed-spec": _run_pulsed,
    "steady-state": _run_steady_state,
}


def _load_config_file(config_path: str) -> dict:
    try:
        with open(config_path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file line {exc.lineno}: {exc.msg}"
                          ) from exc
    if not isinstance(data, dict):
        raise ConfigError("top level: expected a JSON object")
    return data


def _report(producer) -> int:
    """Run a config producer + executor, mapping failures to exit codes."""
    try:
        data = producer()
        cfg = config_from_dict(data)
        path = _RUNNERS[cfg.experiment](cfg)
    except (ConfigError, CapacityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, DiagonalizationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    print(path)
    return 0


def run(config_path: str) -> int:
    """Execute the experiment described by a JSON config file.

    Returns a process exit status: 0 success, 2 config error, 3 solver
    error.  Artifacts land in the config's output_dir.
    """
    return _report(lambda: _load_config_file(config_path))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wavemon",
        description="Waveguide-coupled emitter array simulations")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file; flags override")
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="named parameter set")
        p.add_argument("--model", choices=("qubit", "transmon", "harmonic"))
        p.add_argument("--sites", type=int)
        p.add_argument("--levels", type=int)
        p.add_argument("--at-most", type=int, dest="at_most")
        p.add_argument("--power-khz", type=float, dest="power_khz",
                       help="input power P/2pi in kHz")
        p.add_argument("--workers", type=int,
                       help="sweep worker pool size (default: all cores)")
        p.add_argument("--output-dir", dest="output_dir")
        if name == "spectrum":
            p.add_argument("--manifolds",
                           help="excitation manifolds, e.g. 0..2 or 3")
        if name == "burst":
            p.add_argument("--t-max-over-gamma", type=float,
                           dest="t_max_over_gamma")
            p.add_argument("--points", type=int)
        if name in ("power-spectrum", "steady-state"):
            p.add_argument("--delta-over-gamma", type=float,
                           dest="delta_over_gamma")
        if name == "power-spectrum":
            p.add_argument("--n-tau", type=int, dest="n_tau")
        if name == "steady-state":
            p.add_argument("--detuning-over-gamma", type=float,
                           dest="detuning_over_gamma")
        if name == "transmission":
            p.add_argument("--delta-range", nargs=3, type=float,
                           metavar=("LO", "HI", "N"), dest="delta_range")
            p.add_argument("--detuning-range", nargs=3, type=float,
                           metavar=("LO", "HI", "N"), dest="detuning_range")
        if name == "pulsed-spec":
            p.add_argument("--probe-range", nargs=3, type=float,
                           metavar=("LO", "HI", "N"), dest="probe_range")
            p.add_argument("--phi-over-pi", dest="phi_over_pi",
                           help="comma-separated probe phases in pi units")
    return parser


def _dict_from_args(args: argparse.Namespace) -> dict:
    data = _load_config_file(args.config) if args.config else {}
    data["experiment"] = args.experiment
    for key in ("preset", "model", "sites", "levels", "at_most",
                "power_khz", "workers", "output_dir", "manifolds",
                "t_max_over_gamma", "points", "delta_over_gamma",
                "detuning_over_gamma", "n_tau"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    for key in ("delta_range", "detuning_range", "probe_range"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = [value[0], value[1], int(value[2])]
    phi = getattr(args, "phi_over_pi", None)
    if phi is not None:
        try:
            data["phi_over_pi"] = [float(v) for v in phi.split(",")]
        except ValueError as exc:
            raise ConfigError(f"phi_over_pi: bad value {phi!r}") from exc
    return data


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    return _report(lambda: _dict_from_args(args))


if __name__ == "__main__":
    sys.exit(main())
