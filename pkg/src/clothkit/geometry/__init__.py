from .kernels import BACKEND
from .mesh import Mesh
from .normals import compute_vertex_normals, face_normals, with_computed_normals
from .objio import load_obj, load_point_cloud, save_obj, save_point_cloud
from .spatial import (
    BarycentricHit,
    PointIndex,
    SurfaceIndex,
    closest_point_on_mesh,
    closest_points_bruteforce,
)

__all__ = [
    "BACKEND",
    "BarycentricHit",
    "Mesh",
    "PointIndex",
    "SurfaceIndex",
    "closest_point_on_mesh",
    "closest_points_bruteforce",
    "compute_vertex_normals",
    "face_normals",
    "load_obj",
    "load_point_cloud",
    "save_obj",
    "save_point_cloud",
    "with_computed_normals",
]
