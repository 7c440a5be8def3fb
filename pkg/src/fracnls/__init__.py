"""Pseudospectral laboratory for nonlinear Schroedinger flows in
fractional-order spaces: exponent bookkeeping, Besov-type norms, local
solvers and continuous-dependence experiments on the periodic torus."""

__version__ = "0.1.0"
