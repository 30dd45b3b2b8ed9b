"""Thermodynamics of driven open quantum systems with detailed-balance Lindbladians.

The package covers the refined quantum Brownian oscillator and a thermal
qubit: Lindblad evolution, full counting statistics of work and heat,
reduced second-moment dynamics, and the thermodynamic-length geometry of
slow driving.
"""
from .geometry import metric, optimal_protocol, table1_protocol, thermodynamic_length
from .lindblad import Protocol, evolve, exponential_protocol, linear_protocol, steady_state
from .models import QBMModel, QubitModel
from .moments import evolve_gamma, gamma_equilibrium, moment_generator, work_functionals

__all__ = [
    "Protocol",
    "QBMModel",
    "QubitModel",
    "evolve",
    "evolve_gamma",
    "exponential_protocol",
    "gamma_equilibrium",
    "linear_protocol",
    "metric",
    "moment_generator",
    "optimal_protocol",
    "steady_state",
    "table1_protocol",
    "thermodynamic_length",
    "work_functionals",
]

__version__ = "0.1.0"
