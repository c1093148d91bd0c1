"""Indexed triangle mesh with optional per-corner UVs and per-vertex normals.

Conventions
-----------
* positions are meters, float64, shape (n, 3)
* faces are vertex-index triples, shape (m, 3); a mesh with zero faces is a
  point cloud (used for scan boundary markers)
* UVs are stored per face corner, shape (m, 3, 2), in [0, 1]^2, so seams in
  the atlas are representable
* vertex normals are unit rows; an exactly-zero row marks "no data"
  (isolated vertex, zero-area star)

Meshes are immutable after construction; derive new ones with the
``with_*`` helpers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError

_UNIT_TOL = 1e-6


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray
    faces: np.ndarray
    uvs: np.ndarray | None = None
    vertex_normals: np.ndarray | None = None
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        v = _freeze(np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3))
        f = _freeze(np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.uvs is not None:
            uv = _freeze(np.asarray(self.uvs, dtype=np.float64).reshape(-1, 3, 2))
            object.__setattr__(self, "uvs", uv)
        if self.vertex_normals is not None:
            vn = _freeze(np.asarray(self.vertex_normals, dtype=np.float64).reshape(-1, 3))
            object.__setattr__(self, "vertex_normals", vn)
        if self.validate:
            self._check()

    def _check(self):
        v, f = self.vertices, self.faces
        if not np.all(np.isfinite(v)):
            raise DataError("mesh has non-finite vertex positions")
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise DataError(
                    f"face index out of range (vertex count {len(v)}, "
                    f"max index {f.max() if f.size else -1})"
                )
            degen = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if degen.any():
                raise DataError(f"degenerate faces (repeated index): {np.flatnonzero(degen)[:8]}")
        if self.uvs is not None:
            if len(self.uvs) != len(f):
                raise DataError("uvs must have one entry per face corner triple")
            if self.uvs.size and (self.uvs.min() < -1e-9 or self.uvs.max() > 1 + 1e-9):
                raise DataError("UV coordinates outside [0,1]^2")
        if self.vertex_normals is not None:
            vn = self.vertex_normals
            if len(vn) != len(v):
                raise DataError("vertex_normals length mismatch")
            norms = np.linalg.norm(vn, axis=1)
            bad = (np.abs(norms - 1.0) > _UNIT_TOL) & (norms != 0.0)
            if bad.any():
                raise DataError(f"non-unit vertex normals at {np.flatnonzero(bad)[:8]}")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bbox(self):
        """(min, max) corners of the axis-aligned bounding box."""
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def face_corners(self) -> np.ndarray:
        """Per-face corner positions, shape (m, 3, 3)."""
        return self.vertices[self.faces]

    def with_vertices(self, vertices, vertex_normals=None) -> "Mesh":
        """Same topology and UVs, new positions (normals dropped unless given)."""
        return Mesh(vertices, self.faces, uvs=self.uvs, vertex_normals=vertex_normals)

    def with_vertex_normals(self, vertex_normals) -> "Mesh":
        return Mesh(self.vertices, self.faces, uvs=self.uvs, vertex_normals=vertex_normals)

    def same_topology(self, other: "Mesh") -> bool:
        return (
            self.n_vertices == other.n_vertices
            and self.faces.shape == other.faces.shape
            and np.array_equal(self.faces, other.faces)
        )
