"""Behavior-tree planning plus Bayesian optimization of tree parameters."""

__version__ = "0.1.0"
