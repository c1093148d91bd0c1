"""Wavefront OBJ reader/writer (ASCII, triangles only).

Positions are printed with 17 significant digits so a save/load round trip
reproduces float64 coordinates bit-identically. UVs are written per face
corner (``f v/vt`` style) with exact-value deduplication of ``vt`` records.
Vertex normals, when present on the mesh, are written one per vertex and
referenced as ``f v/vt/v``; on load they are attached only when they index
consistently with the vertex indices.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import MeshFormatError
from ..io_utils import atomic_write_text
from .mesh import Mesh


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def save_obj(mesh: Mesh, path) -> None:
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    write_normals = mesh.vertex_normals is not None
    if write_normals:
        for n in mesh.vertex_normals:
            lines.append(f"vn {_fmt(n[0])} {_fmt(n[1])} {_fmt(n[2])}")
    uv_index: dict = {}
    uv_refs = None
    if mesh.uvs is not None:
        uv_refs = np.empty((mesh.n_faces, 3), dtype=np.int64)
        uv_lines = []
        for fi in range(mesh.n_faces):
            for ci in range(3):
                key = (float(mesh.uvs[fi, ci, 0]), float(mesh.uvs[fi, ci, 1]))
                idx = uv_index.get(key)
                if idx is None:
                    idx = len(uv_index)
                    uv_index[key] = idx
                    uv_lines.append(f"vt {_fmt(key[0])} {_fmt(key[1])}")
                uv_refs[fi, ci] = idx
        lines.extend(uv_lines)
    for fi, face in enumerate(mesh.faces):
        parts = []
        for ci in range(3):
            v = face[ci] + 1
            if uv_refs is not None and write_normals:
                parts.append(f"{v}/{uv_refs[fi, ci] + 1}/{v}")
            elif uv_refs is not None:
                parts.append(f"{v}/{uv_refs[fi, ci] + 1}")
            elif write_normals:
                parts.append(f"{v}//{v}")
            else:
                parts.append(str(v))
        lines.append("f " + " ".join(parts))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_obj(path) -> Mesh:
    path = Path(path)
    verts: list = []
    uvs_pool: list = []
    normals_pool: list = []
    face_v: list = []
    face_vt: list = []
    face_vn: list = []
    face_lines: list = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tag, _, rest = line.partition(" ")
            if tag == "v":
                verts.append(_parse_floats(path, lineno, rest, 3))
            elif tag == "vt":
                uvs_pool.append(_parse_floats(path, lineno, rest, 2))
            elif tag == "vn":
                normals_pool.append(_parse_floats(path, lineno, rest, 3))
            elif tag == "f":
                corners = rest.split()
                if len(corners) != 3:
                    raise MeshFormatError(
                        path, lineno, f"only triangle faces supported, got {len(corners)} corners"
                    )
                vv, tt, nn = [], [], []
                for c in corners:
                    vi, ti, ni = _parse_corner(path, lineno, c)
                    vv.append(vi)
                    tt.append(ti)
                    nn.append(ni)
                face_v.append(vv)
                face_vt.append(tt)
                face_vn.append(nn)
                face_lines.append(lineno)
            # other record types (o, g, s, usemtl, mtllib, l, p) are ignored
    vertices = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(face_v, dtype=np.int64).reshape(-1, 3)
    if faces.size:
        bad_rows = np.flatnonzero((faces < 0).any(axis=1) | (faces >= len(vertices)).any(axis=1))
        if bad_rows.size:
            row = int(bad_rows[0])
            raise MeshFormatError(
                path,
                face_lines[row],
                f"face references vertex {faces[row].max() + 1} of {len(vertices)}",
            )
    uvs = None
    if face_vt and all(t is not None for row in face_vt for t in row):
        vt_idx = np.asarray(face_vt, dtype=np.int64)
        if vt_idx.size and (vt_idx.min() < 0 or vt_idx.max() >= len(uvs_pool)):
            raise MeshFormatError(path, 0, "vt index out of range")
        pool = np.asarray(uvs_pool, dtype=np.float64).reshape(-1, 2)
        uvs = pool[vt_idx]
    elif face_vt and any(t is not None for row in face_vt for t in row):
        raise MeshFormatError(path, 0, "mixed faces with and without vt indices")
    vertex_normals = None
    if normals_pool and len(normals_pool) == len(verts) and face_vn:
        consistent = all(
            n is None or n == v for row_n, row_v in zip(face_vn, face_v) for n, v in zip(row_n, row_v)
        )
        has_any = any(n is not None for row in face_vn for n in row)
        if consistent and has_any:
            vertex_normals = np.asarray(normals_pool, dtype=np.float64).reshape(-1, 3)
    return Mesh(vertices, faces, uvs=uvs, vertex_normals=vertex_normals)


def _parse_floats(path, lineno, text, count):
    parts = text.split()
    if len(parts) < count:
        raise MeshFormatError(path, lineno, f"expected {count} numbers, got {len(parts)}")
    try:
        return [float(p) for p in parts[:count]]
    except ValueError as exc:
        raise MeshFormatError(path, lineno, f"bad number: {exc}") from exc


def _parse_corner(path, lineno, token):
    """Parse `v`, `v/vt`, `v//vn`, `v/vt/vn` into 0-based indices."""
    fields = token.split("/")
    if len(fields) > 3:
        raise MeshFormatError(path, lineno, f"malformed face corner '{token}'")
    out = []
    for fld in fields:
        if fld == "":
            out.append(None)
            continue
        try:
            idx = int(fld)
        except ValueError as exc:
            raise MeshFormatError(path, lineno, f"bad index '{fld}'") from exc
        if idx < 0:
            raise MeshFormatError(path, lineno, "negative (relative) indices unsupported")
        out.append(idx - 1)
    while len(out) < 3:
        out.append(None)
    if out[0] is None:
        raise MeshFormatError(path, lineno, f"face corner missing vertex index: '{token}'")
    return out[0], out[1], out[2]


def save_point_cloud(points: np.ndarray, path) -> None:
    """OBJ with only `v` records (scan boundary markers)."""
    mesh = Mesh(np.asarray(points, dtype=np.float64).reshape(-1, 3), np.zeros((0, 3), dtype=np.int64))
    save_obj(mesh, path)


def load_point_cloud(path) -> np.ndarray:
    return load_obj(path).vertices
