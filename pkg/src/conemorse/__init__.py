"""Mapping-cone Morse theory: exact Thom-Smale cone complexes and their
discretized instanton counterparts on flat tori."""

from conemorse.linalg_q import RationalMatrix, kernel_basis, rank_q
from conemorse.complex_core import (
    ChainMapPair,
    GradedComplex,
    cohomology_dims,
    decompose_cohomology,
    induced_cohomology_map,
    mapping_cone,
    morse_equalities,
    morse_inequalities,
)
from conemorse.morse_model import CriticalPoint, MorseData, builtin, load, save, validate

__version__ = "0.1.0"

__all__ = [
    "RationalMatrix",
    "rank_q",
    "kernel_basis",
    "GradedComplex",
    "ChainMapPair",
    "cohomology_dims",
    "mapping_cone",
    "induced_cohomology_map",
    "decompose_cohomology",
    "morse_equalities",
    "morse_inequalities",
    "CriticalPoint",
    "MorseData",
    "builtin",
    "load",
    "save",
    "validate",
]
