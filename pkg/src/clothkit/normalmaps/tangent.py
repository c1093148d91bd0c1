"""Global <-> tangent frame conversion for normal maps.

Per texel the frame is (T, B, N) with N the interpolated vertex normal of
the covering face, T the UV-derivative tangent orthonormalized against N,
and B = N x T signed by the atlas handedness. Using the interpolated normal
as N makes an LR self-bake exactly (0,0,1) in tangent space, which is the
point of rebaking details relative to the smooth surface.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..geometry.mesh import Mesh
from .bake import rasterize_atlas
from .image import GLOBAL_FRAME, TANGENT_FRAME, NormalMap, from_vectors


def _face_tangents(mesh: Mesh):
    """Per-face raw tangent/bitangent from UV derivatives; zero rows when degenerate."""
    tri = mesh.face_corners()
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]
    duv1 = mesh.uvs[:, 1] - mesh.uvs[:, 0]
    duv2 = mesh.uvs[:, 2] - mesh.uvs[:, 0]
    det = duv1[:, 0] * duv2[:, 1] - duv2[:, 0] * duv1[:, 1]
    ok = np.abs(det) > 1e-18
    r = np.zeros(len(tri))
    r[ok] = 1.0 / det[ok]
    t = (e1 * duv2[:, 1, None] - e2 * duv1[:, 1, None]) * r[:, None]
    b = (e2 * duv1[:, 0, None] - e1 * duv2[:, 0, None]) * r[:, None]
    return t, b, ok


def texel_frames(mesh: Mesh, width: int, height: int):
    """(T, B, N, valid) arrays of shape (h, w, 3) / (h, w)."""
    if mesh.vertex_normals is None:
        raise DataError("tangent frames need vertex normals on the mesh")
    face_idx, bary = rasterize_atlas(mesh, width, height)
    covered = face_idx >= 0
    n = np.zeros(face_idx.shape + (3,), dtype=np.float64)
    tri = mesh.faces[face_idx[covered]]
    n[covered] = np.einsum("tc,tca->ta", bary[covered], mesh.vertex_normals[tri])
    lens = np.linalg.norm(n, axis=-1)
    valid = covered & (lens > 1e-12)
    n[valid] /= lens[valid, None]

    ft, fb, fok = _face_tangents(mesh)
    valid &= np.where(covered, fok[np.maximum(face_idx, 0)], False)
    traw = np.zeros_like(n)
    braw = np.zeros_like(n)
    traw[valid] = ft[face_idx[valid]]
    braw[valid] = fb[face_idx[valid]]
    # Gram-Schmidt against the interpolated normal
    t = traw - np.einsum("...a,...a->...", traw, n)[..., None] * n
    tl = np.linalg.norm(t, axis=-1)
    valid &= tl > 1e-12
    t[valid] /= tl[valid, None]
    t[~valid] = 0.0
    b = np.cross(n, t)
    handed = np.sign(np.einsum("...a,...a->...", b, braw))
    handed[handed == 0.0] = 1.0
    b *= handed[..., None]
    return t, b, n, valid


def to_tangent(nm: NormalMap, mesh: Mesh) -> NormalMap:
    if nm.frame != GLOBAL_FRAME:
        raise DataError("to_tangent expects a global-frame map")
    t, b, n, valid = texel_frames(mesh, nm.width, nm.height)
    out = np.stack(
        [
            np.einsum("...a,...a->...", nm.data, t),
            np.einsum("...a,...a->...", nm.data, b),
            np.einsum("...a,...a->...", nm.data, n),
        ],
        axis=-1,
    )
    return from_vectors(out, nm.defined & valid, TANGENT_FRAME)


def to_global(nm: NormalMap, mesh: Mesh) -> NormalMap:
    if nm.frame != TANGENT_FRAME:
        raise DataError("to_global expects a tangent-frame map")
    t, b, n, valid = texel_frames(mesh, nm.width, nm.height)
    out = nm.data[..., 0:1] * t + nm.data[..., 1:2] * b + nm.data[..., 2:3] * n
    return from_vectors(out, nm.defined & valid, GLOBAL_FRAME)
