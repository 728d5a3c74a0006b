"""Downfolded active-space Hamiltonians from CCSD amplitudes, plus a
classical generalized-UCCSD variational eigensolver."""

from .determinants import Determinant, DeterminantSpace
from .operators import (
    BARE_VACUUM,
    AntiHermitianGenerator,
    FermiVacuum,
    NormalOrderedOperator,
    commutator_truncated,
    fluctuation_part,
    fock_part,
    generator_from_cluster,
    normal_order,
    to_bare_vacuum,
)

__version__ = "0.1.0"

__all__ = [
    "BARE_VACUUM",
    "AntiHermitianGenerator",
    "Determinant",
    "DeterminantSpace",
    "FermiVacuum",
    "NormalOrderedOperator",
    "commutator_truncated",
    "fluctuation_part",
    "fock_part",
    "generator_from_cluster",
    "normal_order",
    "to_bare_vacuum",
    "__version__",
]
