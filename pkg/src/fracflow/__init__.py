"""Numerical solver and certificate suite for doubly nonlinear fractional p-Laplacian evolutions."""

from .errors import (
    ConfigurationError,
    DomainError,
    EvolutionError,
    FracflowError,
    GateError,
    NumericalError,
)
from .grid import Box, Disk, Interval, build_grid, build_kernel
from .nonlinearity import Perturbation, Phi
from .resolvent import ResolventConfig, resolvent_step
from .semigroup import EvolutionConfig, Forcing, ProblemSpec, evolve

__version__ = "0.1.0"

__all__ = [
    "Box",
    "ConfigurationError",
    "Disk",
    "DomainError",
    "EvolutionConfig",
    "EvolutionError",
    "Forcing",
    "FracflowError",
    "GateError",
    "Interval",
    "NumericalError",
    "Perturbation",
    "Phi",
    "ProblemSpec",
    "ResolventConfig",
    "build_grid",
    "build_kernel",
    "evolve",
    "resolvent_step",
]
