"""Goodness-of-fit tests for the Poisson law built on the probability generating function."""

from .dist import CountSample, DistSpec, Family, parse_spec
from .gof import TestResult, fisher_id, select_k, w_stat, z_stat

__version__ = "0.1.0"

__all__ = [
    "CountSample",
    "DistSpec",
    "Family",
    "TestResult",
    "fisher_id",
    "parse_spec",
    "select_k",
    "w_stat",
    "z_stat",
]
