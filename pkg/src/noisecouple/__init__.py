"""Couplings of standard-Gaussian noise batches: construction, sampling,
statistical validation, closed-form diversity analysis, and coupling
optimization against gallery-level objectives."""

from . import analysis, container, generators, optimize, validation
from .core import (
    CouplingError,
    CouplingKind,
    CouplingMatrix,
    CouplingSpec,
    FeasibilityError,
    NoiseBatch,
    NotPSDError,
    RankError,
    SampleCorrelation,
    SubspaceCorrelation,
    SubspaceSpec,
    correlation_of,
    effective_correlation,
    equicorrelated_matrix,
    factor_correlation,
    feasible_interval,
)
from .samplers import RandomStream, sample, sample_block, sample_many

__version__ = "0.1.0"

__all__ = [
    "analysis",
    "container",
    "generators",
    "optimize",
    "validation",
    "CouplingError",
    "CouplingKind",
    "CouplingMatrix",
    "CouplingSpec",
    "FeasibilityError",
    "NoiseBatch",
    "NotPSDError",
    "RankError",
    "SampleCorrelation",
    "SubspaceCorrelation",
    "SubspaceSpec",
    "RandomStream",
    "correlation_of",
    "effective_correlation",
    "equicorrelated_matrix",
    "factor_correlation",
    "feasible_interval",
    "sample",
    "sample_block",
    "sample_many",
    "__version__",
]
