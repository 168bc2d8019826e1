"""Numerical laboratory for the perturbed ferromagnetic chain (PFC) gadget.

Classical structure and transfer-matrix thermodynamics, dense transverse-field
spectra, semi-classical landscapes, spin-vector Monte Carlo annealing and
closed/open-system density-matrix dynamics.
"""
from importlib.metadata import PackageNotFoundError, version as _version

try:
    __version__ = _version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .ising import (AnnealSchedule, DEFAULT_SCHEDULE, IsingProblem, PfcParams, build_pfc,
                    classical_energy, low_energy_census)

__all__ = ["AnnealSchedule", "DEFAULT_SCHEDULE", "IsingProblem", "PfcParams", "build_pfc",
           "classical_energy", "low_energy_census", "__version__"]
