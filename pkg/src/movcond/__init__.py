"""Finite-element solver for a conducting slab moving through a localized field.

Compares Galerkin, Coulomb-gauged SU/PG and gauge-free SU/PG weak forms on
a 2D slab-in-air benchmark.
"""

from .mesh import Discretization, SlabGeometry, build_slab_mesh
from .schemes import Material, Scheme, SchemeConfig, SourceField, assemble, velocity_for_peclet
from .solve import solve_case

__all__ = [
    "Discretization",
    "Material",
    "Scheme",
    "SchemeConfig",
    "SlabGeometry",
    "SourceField",
    "assemble",
    "build_slab_mesh",
    "solve_case",
    "velocity_for_peclet",
]
