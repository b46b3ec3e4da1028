"""State-space filtering laboratory: exact Gaussian recursions, Gibbs sampling,
and particle-filter protocols for the scalar local-level model, with
degeneracy diagnostics and a reproducible experiment harness."""

__version__ = "0.1.0"

from .model import (
    Ar1Params,
    LocalLevelParams,
    ObservationSeries,
    check_ar1_stationary,
    simulate_ar1,
    simulate_local_level,
)

__all__ = [
    "Ar1Params",
    "LocalLevelParams",
    "ObservationSeries",
    "check_ar1_stationary",
    "simulate_ar1",
    "simulate_local_level",
    "__version__",
]
