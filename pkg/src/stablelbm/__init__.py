"""Stable linear BGK lattice-Boltzmann operators for the 3D linearized Euler equations.

Construction pipeline (``stability``), periodic stream-collide simulator
(``simulator``) and convergence / stability-domain studies (``analysis``).
"""

from stablelbm.errors import ConfigurationError, ConstructionError, Infeasible, InputError
from stablelbm.lattice import MomentMatrix, VelocitySet, build_m1_d3q33, build_velocity_set
from stablelbm.equilibrium import PRESETS, BackgroundState, lee_equilibrium_map
from stablelbm.stability import CollisionOperator, StabilityCertificate, certify

__all__ = [
    "BackgroundState",
    "CollisionOperator",
    "ConfigurationError",
    "ConstructionError",
    "Infeasible",
    "InputError",
    "MomentMatrix",
    "PRESETS",
    "StabilityCertificate",
    "VelocitySet",
    "build_m1_d3q33",
    "build_velocity_set",
    "certify",
    "lee_equilibrium_map",
]

__version__ = "0.1.0"
