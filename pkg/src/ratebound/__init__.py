"""Exponential bounds for minimum contrast estimators: rate functions, bound
constants, confidence sets and a reproducible Monte Carlo harness."""

__version__ = "0.1.0"
