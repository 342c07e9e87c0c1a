from .io import load_mesh, read_triangles, save_obj, save_stl
from .mesh import (DEFAULT_MIN_T, EPS_PLANE, GoalRegion, MeshError, MeshParseError, Ray,
                   RepairReport, SurfacePoint, TopologyError, TriangleMesh)
from .queries import (BoundaryEdgeError, NoContactError, adjacent_face_in_direction,
                      closest_point, exit_edge, inside_anatomy, is_valid_surface_point,
                      lumen_winding_number, project_to_closest_surface, ray_intersect,
                      resolve_start, sample_point_on_anatomy)

__all__ = [
    "DEFAULT_MIN_T", "EPS_PLANE", "GoalRegion", "MeshError", "MeshParseError", "Ray",
    "RepairReport", "SurfacePoint", "TopologyError", "TriangleMesh", "BoundaryEdgeError",
    "NoContactError", "adjacent_face_in_direction", "closest_point", "exit_edge",
    "inside_anatomy", "is_valid_surface_point", "load_mesh", "lumen_winding_number",
    "project_to_closest_surface", "ray_intersect", "read_triangles", "resolve_start",
    "sample_point_on_anatomy", "save_obj", "save_stl",
]
