"""Topology-optimization solvers, dataset tooling, and a numpy surrogate network."""

__version__ = "0.1.0"
