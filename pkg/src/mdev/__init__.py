"""Moderate-deviation probabilities and efficiency bounds for estimators."""

__version__ = "0.1.0"
