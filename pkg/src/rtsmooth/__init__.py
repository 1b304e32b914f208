"""Bayesian inference of time-varying reproduction numbers under Gaussian Markov priors."""

__version__ = "0.1.0"
