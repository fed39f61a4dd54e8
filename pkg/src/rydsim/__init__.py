"""Simulation and pulse optimization for GHZ-state preparation in chains of
Rydberg-dressed atoms.

Units: times in us, frequencies and energies in rad/us (use
:func:`rydsim.model.mhz` to convert from MHz), lengths in um.
"""

__version__ = "0.1.0"

from .model import ConfigError, NoiseParams, PhysicalParams, derive_sigma_doppler, load_params, mhz, to_mhz  # noqa: E402
from .hilbert import BasisSet, SpaceKind, enumerate_full, enumerate_restricted, restricted_dimension  # noqa: E402
from .dressed import dressed_angle, dressed_energy, stark_shifts  # noqa: E402
from .propagator import TimeGrid, evolve  # noqa: E402
from .grape import GrapeConfig, PulseSchedule, grape_optimize, initial_pulses  # noqa: E402
from .analysis import GhzTarget, fidelity_ghz, fit_scaling, t2_from_curve  # noqa: E402
from .noise import coherence_decay_scan, run_ensemble, sample_realization  # noqa: E402

__all__ = [
    "ConfigError", "NoiseParams", "PhysicalParams", "derive_sigma_doppler", "load_params", "mhz", "to_mhz",
    "BasisSet", "SpaceKind", "enumerate_full", "enumerate_restricted", "restricted_dimension",
    "dressed_angle", "dressed_energy", "stark_shifts", "TimeGrid", "evolve",
    "GrapeConfig", "PulseSchedule", "grape_optimize", "initial_pulses",
    "GhzTarget", "fidelity_ghz", "fit_scaling", "t2_from_curve",
    "coherence_decay_scan", "run_ensemble", "sample_realization",
]
