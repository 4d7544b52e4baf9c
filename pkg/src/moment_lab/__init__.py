"""Moment dynamics of a quantum particle in a time-dependent harmonic well."""

__version__ = "0.1.0"

from .classical import FrequencyProfile, SystemParams, TrajectoryPair, solve_classical, q2_from_q1
from .gaussian import GaussianState, PotentialSpec, evolve_gaussian, gaussian_moments
from .moments import MomentLayer, MomentState, evolve_layers, closed_form_moment, fit_basis
from .oracle import GridWavefunction, init_gaussian, run_oracle, grid_moment

__all__ = [
    "FrequencyProfile", "SystemParams", "TrajectoryPair", "solve_classical", "q2_from_q1",
    "GaussianState", "PotentialSpec", "evolve_gaussian", "gaussian_moments",
    "MomentLayer", "MomentState", "evolve_layers", "closed_form_moment", "fit_basis",
    "GridWavefunction", "init_gaussian", "run_oracle", "grid_moment",
]
