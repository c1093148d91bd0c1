"""Face and vertex normal computation (area-weighted, deterministic)."""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from .mesh import Mesh

_ZERO_TOL = 1e-20


def face_normals(mesh: Mesh, normalize: bool = True) -> np.ndarray:
    """Per-face normals; zero rows for geometrically degenerate faces.

    Unnormalized rows have magnitude 2 * face area, which is what the
    area weighting of vertex normals relies on.
    """
    tri = mesh.face_corners()
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    if not normalize:
        return n
    lens = np.linalg.norm(n, axis=1)
    out = np.zeros_like(n)
    ok = lens > _ZERO_TOL
    out[ok] = n[ok] / lens[ok, None]
    return out


def compute_vertex_normals(mesh: Mesh):
    """Area-weighted average of incident face normals.

    Returns (normals, valid): unit rows where valid, zero rows (the no-data
    marker) where the vertex has no incident face area.
    """
    if mesh.n_faces < 1:
        raise DataError("compute_vertex_normals needs at least one face")
    weighted = face_normals(mesh, normalize=False)
    acc = np.zeros((mesh.n_vertices, 3), dtype=np.float64)
    for c in range(3):
        np.add.at(acc, mesh.faces[:, c], weighted)
    lens = np.linalg.norm(acc, axis=1)
    valid = lens > _ZERO_TOL
    normals = np.zeros_like(acc)
    normals[valid] = acc[valid] / lens[valid, None]
    return normals, valid


def with_computed_normals(mesh: Mesh) -> Mesh:
    normals, _ = compute_vertex_normals(mesh)
    return mesh.with_vertex_normals(normals)
