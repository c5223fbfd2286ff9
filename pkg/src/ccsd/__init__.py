"""Conditional Cauchy-Schwarz divergence: kernel estimators, time-series
clustering and account-level fraud scoring."""

from .errors import CCSDError
from .estimator import (
    CcsdConfig,
    CcsdTerms,
    MixtureWeights,
    ccsd_mixture,
    ccsd_pair_series,
    ccsd_score,
    ccsd_terms,
    nw_weights,
)
from .kernels import effective_rank, gram, iqr_bandwidth, median_heuristic, rank_truncate, rbf

__version__ = "0.1.0"

__all__ = [
    "CCSDError",
    "CcsdConfig",
    "CcsdTerms",
    "MixtureWeights",
    "ccsd_mixture",
    "ccsd_pair_series",
    "ccsd_score",
    "ccsd_terms",
    "effective_rank",
    "gram",
    "iqr_bandwidth",
    "median_heuristic",
    "nw_weights",
    "rank_truncate",
    "rbf",
]
