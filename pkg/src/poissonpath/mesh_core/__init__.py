"""Triangle meshes, curvature and analytic test surfaces."""

from .curvature import CurvatureField, estimate_curvature, normal_curvature
from .io import load_mesh, write_obj, write_stl
from .mesh import SurfacePoint, TriMesh
from .surfaces import analytic_height_field, analytic_test_surface, icosahedron, regular_tetrahedron

__all__ = [
    "CurvatureField",
    "SurfacePoint",
    "TriMesh",
    "analytic_height_field",
    "analytic_test_surface",
    "estimate_curvature",
    "icosahedron",
    "load_mesh",
    "normal_curvature",
    "regular_tetrahedron",
    "write_obj",
    "write_stl",
]
