"""Multi-objective Bayesian optimisation with mono- and multi-surrogate Tchebycheff acquisition."""

__version__ = "0.1.0"
