"""Spatial acceleration: exact nearest neighbors and closest point on mesh.

Both indexes return exactly what a brute-force scan would (lowest index on
ties). Point queries use a kd-tree plus an exact re-scan of the tie ball;
surface queries prune triangles with a vertex kd-tree (ball radius =
nearest-vertex distance + largest triangle diameter, a strict upper bound)
and hand the exact per-triangle tests to the active kernel backend.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ..errors import DataError
from . import kernels
from .mesh import Mesh
from .normals import face_normals

_PAD = 1e-12


@dataclass(frozen=True)
class BarycentricHit:
    """Closest-surface-point query result."""

    face: int
    bary: np.ndarray
    point: np.ndarray
    signed_distance: float


def _expand_balls(balls, n_queries):
    """Flatten cKDTree.query_ball_point output -> (query_ids, member_ids)."""
    lens = np.fromiter((len(b) for b in balls), dtype=np.int64, count=n_queries)
    total = int(lens.sum())
    flat = np.fromiter((v for b in balls for v in b), dtype=np.int64, count=total)
    qid = np.repeat(np.arange(n_queries, dtype=np.int64), lens)
    return qid, flat


class PointIndex:
    """Exact nearest neighbor over a fixed point set."""

    def __init__(self, points):
        pts = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise DataError("PointIndex needs at least one point")
        self.points = pts
        self._tree = cKDTree(pts)

    def nearest_many(self, queries):
        """(indices, distances); ties broken by lowest point index."""
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        d, _ = self._tree.query(q, k=1)
        r = d * (1.0 + _PAD) + 1e-300
        balls = self._tree.query_ball_point(q, r)
        qid, vid = _expand_balls(balls, len(q))
        diff = self.points[vid] - q[qid]
        d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
        order = np.lexsort((vid, d2, qid))
        uniq, first = np.unique(qid[order], return_index=True)
        winners = order[first]
        idx = np.empty(len(q), dtype=np.int64)
        dist = np.empty(len(q), dtype=np.float64)
        idx[uniq] = vid[winners]
        dist[uniq] = np.sqrt(d2[winners])
        return idx, dist

    def nearest(self, query):
        idx, dist = self.nearest_many(np.asarray(query, dtype=np.float64).reshape(1, 3))
        return int(idx[0]), float(dist[0])


class SurfaceIndex:
    """Exact closest point on a triangle mesh."""

    def __init__(self, mesh: Mesh):
        if mesh.n_faces < 1:
            raise DataError("SurfaceIndex needs a mesh with at least one face")
        self.mesh = mesh
        tri = mesh.face_corners()
        self._tri_a = np.ascontiguousarray(tri[:, 0])
        self._tri_b = np.ascontiguousarray(tri[:, 1])
        self._tri_c = np.ascontiguousarray(tri[:, 2])
        self._face_normals = face_normals(mesh)
        # prune with referenced vertices only; isolated vertices are not on
        # the surface and would break the distance upper bound
        ref = np.unique(mesh.faces)
        self._ref_vertices = ref
        self._tree = cKDTree(mesh.vertices[ref])
        # referenced-vertex -> incident faces, CSR over the 'ref' ordering
        remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
        remap[ref] = np.arange(len(ref))
        flat_v = remap[mesh.faces.reshape(-1)]
        order = np.argsort(flat_v, kind="stable")
        self._v2f = (order // 3).astype(np.int64)
        counts = np.bincount(flat_v, minlength=len(ref))
        self._v2f_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        edges = np.concatenate(
            [tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 1], tri[:, 0] - tri[:, 2]]
        )
        self._max_diam = float(np.sqrt((edges * edges).sum(axis=1).max()))

    def _candidates(self, queries):
        nq = len(queries)
        d, _ = self._tree.query(queries, k=1)
        r = (d + self._max_diam) * (1.0 + _PAD) + 1e-300
        balls = self._tree.query_ball_point(queries, r)
        qid, vid = _expand_balls(balls, nq)
        fcounts = self._v2f_start[vid + 1] - self._v2f_start[vid]
        total = int(fcounts.sum())
        cum = np.cumsum(fcounts)
        offsets = np.arange(total, dtype=np.int64) - np.repeat(cum - fcounts, fcounts)
        fids = self._v2f[np.repeat(self._v2f_start[vid], fcounts) + offsets]
        pair_q = np.repeat(qid, fcounts)
        keys = np.unique(pair_q * np.int64(self.mesh.n_faces) + fids)
        cand_faces = (keys % self.mesh.n_faces).astype(np.int64)
        key_q = keys // self.mesh.n_faces
        counts = np.bincount(key_q, minlength=nq).astype(np.int64)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        return starts, counts, cand_faces

    def closest_points_arrays(self, queries):
        """(faces, bary, points, dist2) for a batch of query points."""
        q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
        starts, counts, cand = self._candidates(q)
        return kernels.closest_points(
            self._tri_a, self._tri_b, self._tri_c, q, starts, counts, cand
        )

    def signed_distances(self, queries, faces, points):
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        delta = q - points
        dist = np.linalg.norm(delta, axis=1)
        side = np.sign(np.einsum("ij,ij->i", delta, self._face_normals[faces]))
        side[side == 0.0] = 1.0
        return dist * side

    def closest_point(self, query) -> BarycentricHit:
        q = np.asarray(query, dtype=np.float64).reshape(1, 3)
        faces, bary, points, _ = self.closest_points_arrays(q)
        sd = self.signed_distances(q, faces, points)
        return BarycentricHit(
            face=int(faces[0]),
            bary=bary[0].copy(),
            point=points[0].copy(),
            signed_distance=float(sd[0]),
        )


def closest_point_on_mesh(index: SurfaceIndex, query) -> BarycentricHit:
    return index.closest_point(query)


def closest_points_bruteforce(mesh: Mesh, queries):
    """Unpruned scan over all faces with the same kernel primitive."""
    q = np.ascontiguousarray(queries, dtype=np.float64).reshape(-1, 3)
    m = mesh.n_faces
    nq = len(q)
    tri = mesh.face_corners()
    starts = (np.arange(nq, dtype=np.int64) * m).astype(np.int64)
    counts = np.full(nq, m, dtype=np.int64)
    cand = np.tile(np.arange(m, dtype=np.int64), nq)
    return kernels.closest_points(
        np.ascontiguousarray(tri[:, 0]),
        np.ascontiguousarray(tri[:, 1]),
        np.ascontiguousarray(tri[:, 2]),
        q,
        starts,
        counts,
        cand,
    )
