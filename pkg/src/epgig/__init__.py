"""Sparse regression with exponential power / generalized inverse Gaussian priors."""

__version__ = "0.1.0"
