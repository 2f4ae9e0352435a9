"""Bayesian inference for duplication-mutation-complementarity network growth.

Simulate graphs with their duplication forests, estimate the likelihood of
an observed ``(graph, forest)`` pair by backward SMC, and sample the
posterior of ``(p, p_c)`` with particle marginal Metropolis-Hastings.
"""

__version__ = "0.1.0"

from .dmc import DmcParams, GrowthHistory, GrowthStep, simulate
from .netcore import DuplicationForest, PpiGraph
from .pmmh import PmmhConfig, UniformPrior, pmmh_run, summarize
from .smc import SmcResult, smc_run

__all__ = [
    "DmcParams",
    "DuplicationForest",
    "GrowthHistory",
    "GrowthStep",
    "PmmhConfig",
    "PpiGraph",
    "SmcResult",
    "UniformPrior",
    "pmmh_run",
    "simulate",
    "smc_run",
    "summarize",
]
