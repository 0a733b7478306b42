"""Sawtooth-map quantum algorithm on an imperfect qubit register.

Gate-level simulation, Floquet spectra and the diagnostics used to study
how static hardware imperfections mix the eigenstates of the simulated map.
"""

__version__ = "0.1.0"

from .core import MapParams, SeedPlan, StateVector, basis_state, inner_product
from .imperfect import DisorderRealization, ImperfectionSpec, sample_realization
from .sawtooth import circuit_kick, ideal_kick
from .floquet import build_floquet_matrix, eigendecompose, sweep_spectrum
from .diagnostics import entropy_scan, fidelity_series, find_threshold, husimi, predict

__all__ = [
    "MapParams",
    "SeedPlan",
    "StateVector",
    "basis_state",
    "inner_product",
    "DisorderRealization",
    "ImperfectionSpec",
    "sample_realization",
    "circuit_kick",
    "ideal_kick",
    "build_floquet_matrix",
    "eigendecompose",
    "sweep_spectrum",
    "entropy_scan",
    "fidelity_series",
    "find_threshold",
    "husimi",
    "predict",
]
