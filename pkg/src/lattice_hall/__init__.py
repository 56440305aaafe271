"""Hall conductance and flux-anyon braiding checks on finite lattice windows."""

from .filter import FilterFunction, SwitchProfile, build_filter, verify_filter
from .geometry import AB, AD, LAMBDA1, LAMBDA2, LAMBDA3, Cone, DecayFunction, LatticeWindow, Region, boundary
from .hall import HallContext, current_J, current_J0, k_gamma, qbar
from .interaction import Interaction, ChargeInteraction

__all__ = [
    "AB",
    "AD",
    "ChargeInteraction",
    "Cone",
    "DecayFunction",
    "FilterFunction",
    "HallContext",
    "Interaction",
    "LAMBDA1",
    "LAMBDA2",
    "LAMBDA3",
    "LatticeWindow",
    "Region",
    "SwitchProfile",
    "boundary",
    "build_filter",
    "current_J",
    "current_J0",
    "k_gamma",
    "qbar",
    "verify_filter",
]

__version__ = "0.1.0"
