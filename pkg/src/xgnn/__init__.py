"""Adaptive neural + singular-enrichment basis construction for
least-squares variational formulations of boundary value problems on
domains with corners."""

__version__ = "0.1.0"
