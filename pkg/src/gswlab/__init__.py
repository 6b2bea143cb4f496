"""Numerical laboratory for gauged nonlinear Dirac equations on
quaternionic targets: lattice discretization, deformation complex,
quotient-space curvature with a dual-route oracle, and frequency-function
compactness diagnostics."""

__version__ = "0.1.0"
