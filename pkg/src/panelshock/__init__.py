"""Monetary-policy versus information shocks in panel SVARs and local projections."""

__version__ = "0.1.0"
