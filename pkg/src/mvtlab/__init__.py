"""Desk-scale verification of exponential-sum mean value theorems."""

__version__ = "0.1.0"
