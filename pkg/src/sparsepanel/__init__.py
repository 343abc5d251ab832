"""Bayesian dynamic panel-data estimation with spike-and-slab heterogeneity priors."""

from sparsepanel.rng import RngStream

__all__ = ["RngStream"]
__version__ = "0.1.0"
