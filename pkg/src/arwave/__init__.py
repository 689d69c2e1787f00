"""Arithmetic random waves on the flat torus: nodal length, chaos and tails."""
from .errors import ArwaveError
from .lattice import LatticeSet, decompose, lattice_table, moments, mu_hat4, pick_level, search_eta
from .wavefield import FieldGrid, WaveCoefficients, evaluate, evaluate_grid, sample_coefficients

__all__ = [
    "ArwaveError",
    "FieldGrid",
    "LatticeSet",
    "WaveCoefficients",
    "decompose",
    "evaluate",
    "evaluate_grid",
    "lattice_table",
    "moments",
    "mu_hat4",
    "pick_level",
    "sample_coefficients",
    "search_eta",
]
__version__ = "0.1.0"
