"""Finite element laboratory for shear-dependent Stokes flow with
(p, delta)-structure stress on the unit square."""

from .nfunc import PStructure, SingularEvaluation
from .meshing import Mesh, build_structured
from .fem import FeSystem, Field, AnalyticVector

__all__ = [
    "PStructure",
    "SingularEvaluation",
    "Mesh",
    "build_structured",
    "FeSystem",
    "Field",
    "AnalyticVector",
]

__version__ = "0.1.0"
