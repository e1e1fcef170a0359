"""Numerics for the fourth-order nonlinear Schrodinger equation on
waveguide manifolds R^d x T^n: spectral propagation, Morawetz
diagnostics, weight-derivative algebra and Strichartz exponent solvers.
"""

from .grid import Grid, GridError, GridSpec, WaveNumberTable, make_grid
from .field import ComplexField, SpectralField, make_gaussian, make_plane_wave, to_physical, to_spectral
from .propagator import BlowupError, ResolutionError, SolverConfig, SolverState, evolve, wrap_time
from .diagnostics import DiagnosticsRecord, Recorder

__all__ = [
    "BlowupError",
    "ComplexField",
    "DiagnosticsRecord",
    "Grid",
    "GridError",
    "GridSpec",
    "Recorder",
    "ResolutionError",
    "SolverConfig",
    "SolverState",
    "SpectralField",
    "WaveNumberTable",
    "evolve",
    "make_gaussian",
    "make_grid",
    "make_plane_wave",
    "to_physical",
    "to_spectral",
    "wrap_time",
]
