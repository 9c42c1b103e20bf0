"""Weakly-nonlinear WKB approximation of the semiclassical Maxwell-Dirac
system, validated against an independent split-step spectral solver."""

__version__ = "0.1.0"
