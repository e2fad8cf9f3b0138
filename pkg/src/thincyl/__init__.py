"""Spectral laboratory for thin cylinders and waveguides with distorted ends."""

__version__ = "0.1.0"

from .profiles import Profile, fourier_profile, table_profile, zero_profile
from .domains import (
    BoundaryTag,
    StraightCylinder,
    DistortedCylinder,
    Trapezoid,
    SemiCylinder,
    HalfSemiCylinder,
    Dumbbell,
    HeadSpec,
)
from .mesh import Mesh, build_mesh, refine_uniform, mesh_stats
from .fem import BC, AssembledSystem, FieldVector, assemble_system, rayleigh_quotient, interpolate_function

__all__ = [
    "__version__",
    "Profile",
    "fourier_profile",
    "table_profile",
    "zero_profile",
    "BoundaryTag",
    "StraightCylinder",
    "DistortedCylinder",
    "Trapezoid",
    "SemiCylinder",
    "HalfSemiCylinder",
    "Dumbbell",
    "HeadSpec",
    "Mesh",
    "build_mesh",
    "refine_uniform",
    "mesh_stats",
    "BC",
    "AssembledSystem",
    "FieldVector",
    "assemble_system",
    "rayleigh_quotient",
    "interpolate_function",
]
