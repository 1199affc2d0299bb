"""Spectral estimation and Bayesian inference for reflected diffusions on [0, 1]
observed at a fixed sampling interval."""

__version__ = "0.1.0"
