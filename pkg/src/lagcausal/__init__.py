"""Supervised discovery of lagged causal links in multivariate time series."""
from .core import CandidateLink, TemporalGraph, TimeSeriesMatrix
from .errors import LagCausalError

__version__ = "0.1.0"

__all__ = ["CandidateLink", "TemporalGraph", "TimeSeriesMatrix", "LagCausalError", "__version__"]
