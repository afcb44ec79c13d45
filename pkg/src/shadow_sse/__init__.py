"""Shadow subspace expansion (SSE)."""

from .core import (
    FilterResult,
    MixedSymmetryError,
    PipelineConfig,
    RegularizationConfig,
    SseError,
    SseMatrices,
    SseResult,
    assemble_matrices,
    local_filter,
    reconstruct_observable,
    regularized_gevp,
    run_pipeline,
    symmetry_project,
)
from .pauli import ObservableSum, PauliString, PhasedPauli, commutes, enumerate_up_to_weight, multiply
from .shadows import Estimator, Exact, GaussianEps, SampledShadows, ShadowSet, ShadowVariance, sample_shadows
from .sim import Circuit, DensityMatrix, NoiseModel, StateVector, build_spin_ring, exact_spectrum

__version__ = "0.1.0"

__all__ = [
    "Circuit",
    "DensityMatrix",
    "Estimator",
    "Exact",
    "FilterResult",
    "GaussianEps",
    "MixedSymmetryError",
    "NoiseModel",
    "ObservableSum",
    "PauliString",
    "PhasedPauli",
    "PipelineConfig",
    "RegularizationConfig",
    "SampledShadows",
    "ShadowSet",
    "ShadowVariance",
    "SseError",
    "SseMatrices",
    "SseResult",
    "StateVector",
    "assemble_matrices",
    "build_spin_ring",
    "commutes",
    "enumerate_up_to_weight",
    "exact_spectrum",
    "local_filter",
    "multiply",
    "reconstruct_observable",
    "regularized_gevp",
    "run_pipeline",
    "sample_shadows",
    "symmetry_project",
]
