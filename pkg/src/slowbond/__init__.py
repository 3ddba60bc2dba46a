"""Slow-bond exclusion process: simulation, semigroups and fluctuation covariances."""

__version__ = "0.1.0"
