"""Sparse spike-and-slab quasi-posteriors for logistic regression and Ising models.

Set QPOST_DISABLE_NUMBA=1 before import to run the pure-numpy kernels.
"""
from ._accel import USING_NUMBA
from .prior import PriorSpec
from .sampler import ChainConfig, PosteriorSummary, exact_posterior_oracle, run_chain

__version__ = "0.1.0"

__all__ = ["USING_NUMBA", "ChainConfig", "PosteriorSummary", "PriorSpec", "exact_posterior_oracle", "run_chain",
           "__version__"]
