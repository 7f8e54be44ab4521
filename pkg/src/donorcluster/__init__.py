"""Simulation and gate compilation for nuclear spins in donor clusters."""

from __future__ import annotations

from .spins import GAMMA_E_MHZ_PER_T, GAMMA_N_MHZ_PER_T, Cluster, InvalidSystemError, SpinBasisLabel, SpinSystem

__version__ = "0.1.0"

__all__ = [
    "GAMMA_E_MHZ_PER_T",
    "GAMMA_N_MHZ_PER_T",
    "Cluster",
    "InvalidSystemError",
    "SpinBasisLabel",
    "SpinSystem",
    "__version__",
]
