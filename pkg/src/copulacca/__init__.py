"""Rank-based latent correlation and sparse CCA for mixed-type data."""

from .bridge import PairKind, bridge, estimate_threshold, invert_bridge
from .data import MixedData, VariableType, check_mixed_data
from .kendall import kendall_tau_matrix, kendall_tau_pair
from .latent import (LatentCorrelation, LatentCorrelationEstimator,
                     estimate_latent_correlation, nearest_correlation, shrink_to_identity)
from .scca import CanonicalPair, MixedSparseCCA, SccaProblem, fit_pair, fit_pairs

__version__ = "0.1.0"

__all__ = [
    "PairKind",
    "bridge",
    "estimate_threshold",
    "invert_bridge",
    "MixedData",
    "VariableType",
    "check_mixed_data",
    "kendall_tau_matrix",
    "kendall_tau_pair",
    "LatentCorrelation",
    "LatentCorrelationEstimator",
    "estimate_latent_correlation",
    "nearest_correlation",
    "shrink_to_identity",
    "CanonicalPair",
    "MixedSparseCCA",
    "SccaProblem",
    "fit_pair",
    "fit_pairs",
    "__version__",
]
