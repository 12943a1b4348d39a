"""Spherical analysis and wave propagation on Damek-Ricci spaces."""

from .htype import (
    DamekRicciSpace,
    GroupPoint,
    heisenberg,
    parse_space,
    quaternionic,
)
from .special import c_function, plancherel_density, spherical_phi, spherical_phi_dr

__version__ = "0.1.0"

__all__ = [
    "DamekRicciSpace",
    "GroupPoint",
    "heisenberg",
    "quaternionic",
    "parse_space",
    "spherical_phi",
    "spherical_phi_dr",
    "c_function",
    "plancherel_density",
]
