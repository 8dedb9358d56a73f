"""Boundary-driven weakly asymmetric Blume-Capel dynamics: simulator,
hydrodynamic solver and large-deviation functionals."""

__version__ = "0.1.0"
