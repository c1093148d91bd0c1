"""Baking normal maps into the template UV atlas.

LR maps interpolate the reconstruction's own vertex normals per texel
(no detail beyond the mesh). HR maps project each covered texel's surface
point onto the scan and sample the scan's normals there, so detail at scan
resolution lands in the map; texels farther than the cutoff from the scan
become no-data.
"""

from __future__ import annotations

import numpy as np

from ..errors import AtlasError, DataError
from ..geometry import kernels
from ..geometry.mesh import Mesh
from ..geometry.normals import compute_vertex_normals
from ..geometry.spatial import SurfaceIndex
from .image import GLOBAL_FRAME, NormalMap, from_vectors

DEFAULT_RESOLUTION = 256
DEFAULT_HR_CUTOFF = 0.02  # meters


def rasterize_atlas(mesh: Mesh, width: int, height: int):
    """(face_idx, bary) per texel center; raises on overlapping islands."""
    if mesh.uvs is None:
        raise DataError("mesh has no UV atlas")
    face_idx, bary, overlaps = kernels.rasterize(
        np.ascontiguousarray(mesh.uvs), width, height
    )
    if overlaps > 0:
        raise AtlasError(f"UV atlas has {overlaps} interior-overlapping texels")
    return face_idx, bary


def _interpolated_vertex_normals(mesh, face_idx, bary):
    covered = face_idx >= 0
    vec = np.zeros(face_idx.shape + (3,), dtype=np.float64)
    tri = mesh.faces[face_idx[covered]]  # (t, 3) vertex ids
    nrm = mesh.vertex_normals[tri]  # (t, 3, 3)
    vec[covered] = np.einsum("tc,tca->ta", bary[covered], nrm)
    return vec, covered


def bake_lr(mesh: Mesh, resolution: int = DEFAULT_RESOLUTION) -> NormalMap:
    """Interpolate vertex normals over the atlas (global frame)."""
    if mesh.vertex_normals is None:
        raise DataError("bake_lr needs vertex normals on the mesh")
    face_idx, bary = rasterize_atlas(mesh, resolution, resolution)
    vec, covered = _interpolated_vertex_normals(mesh, face_idx, bary)
    return from_vectors(vec, covered, GLOBAL_FRAME)


def bake_hr(
    scan: Mesh,
    reconstruction: Mesh,
    resolution: int = DEFAULT_RESOLUTION,
    cutoff: float = DEFAULT_HR_CUTOFF,
    scan_index: SurfaceIndex | None = None,
) -> NormalMap:
    """Transfer scan normals onto the reconstruction's atlas (global frame)."""
    if scan.n_faces < 1:
        raise DataError("empty scan")
    face_idx, bary = rasterize_atlas(reconstruction, resolution, resolution)
    covered = face_idx >= 0
    tri = reconstruction.faces[face_idx[covered]]
    pos = np.einsum("tc,tca->ta", bary[covered], reconstruction.vertices[tri])
    index = scan_index if scan_index is not None else SurfaceIndex(scan)
    if scan.vertex_normals is not None:
        scan_vn = scan.vertex_normals
    else:
        scan_vn, _ = compute_vertex_normals(scan)
    hit_faces, hit_bary, _, hit_d2 = index.closest_points_arrays(pos)
    ok = (hit_faces >= 0) & (np.sqrt(hit_d2) <= cutoff)
    sampled = np.zeros_like(pos)
    stri = scan.faces[hit_faces[ok]]
    sampled[ok] = np.einsum("tc,tca->ta", hit_bary[ok], scan_vn[stri])
    vec = np.zeros(face_idx.shape + (3,), dtype=np.float64)
    texel_ok = np.zeros(face_idx.shape, dtype=bool)
    vec[covered] = sampled
    texel_ok[covered] = ok
    return from_vectors(vec, texel_ok, GLOBAL_FRAME)
