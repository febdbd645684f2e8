"""Specimen geometry, meshing and the implicit plane-stress solver."""
from .geometry import GEOMETRY_KINDS, Region, SpecimenGeometry, geometry_from_dict, with_features
from .mesh import BOUNDARY_SETS, Mesh, generate_mesh, mesh_region
from .solver import (
    Constraint,
    FieldHistory,
    Load,
    Protocol,
    ReactionCurve,
    Solver,
    protocol_from_dict,
    reaction_curve,
    solve,
    write_fields_csv,
    write_reactions_csv,
)

__all__ = [
    "BOUNDARY_SETS",
    "Constraint",
    "FieldHistory",
    "GEOMETRY_KINDS",
    "Load",
    "Mesh",
    "Protocol",
    "ReactionCurve",
    "Region",
    "Solver",
    "SpecimenGeometry",
    "generate_mesh",
    "geometry_from_dict",
    "mesh_region",
    "protocol_from_dict",
    "reaction_curve",
    "solve",
    "with_features",
    "write_fields_csv",
    "write_reactions_csv",
]
