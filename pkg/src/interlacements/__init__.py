"""Random interlacements on Z^d, Brownian interlacements on R^d and Gaussian free fields.

Samplers, deterministic oracles and statistical checks for occupation-time
fields, their scaling limits and the isomorphism with the free field.
"""
from __future__ import annotations

__version__ = "0.1.0"

from .potential import (DomainError, EquilibriumData, GreenTable, build_green_table,
                        capacity_ball_continuum, equilibrium_measure_lattice, green_continuum,
                        green_lattice, hitting_kernel, solve_resolvent_lattice)
from .testfunctions import LatticeFunction, TestFunction, discretize

__all__ = [
    "DomainError", "EquilibriumData", "GreenTable", "LatticeFunction", "TestFunction",
    "build_green_table", "capacity_ball_continuum", "discretize", "equilibrium_measure_lattice",
    "green_continuum", "green_lattice", "hitting_kernel", "solve_resolvent_lattice",
]
