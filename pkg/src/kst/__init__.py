"""Koopman and Perron-Frobenius spectral tools for driven incompressible flows on T^2."""
from __future__ import annotations

__version__ = "0.1.0"

from .analytic import GeneratorMatrix, VortexParams, assemble_generator_analytic
from .core import EigenPair, MultiIndex, SparseComplexMatrix, TruncationParams, flatten_index, unflatten_index
from .eigs import build_h1_system, koopman_eigs, order_and_normalize, solve_gevp
from .errors import KstError
from .kernel import MarkovBasis, SnapshotSet, compute_basis
from .leja import LejaPropagator, expm_action, step_sequence

__all__ = [
    "__version__", "GeneratorMatrix", "VortexParams", "assemble_generator_analytic", "EigenPair",
    "MultiIndex", "SparseComplexMatrix", "TruncationParams", "flatten_index", "unflatten_index",
    "build_h1_system", "koopman_eigs", "order_and_normalize", "solve_gevp", "KstError", "MarkovBasis",
    "SnapshotSet", "compute_basis", "LejaPropagator", "expm_action", "step_sequence",
]
