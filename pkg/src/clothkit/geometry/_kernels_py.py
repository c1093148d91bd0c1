"""Pure-numpy implementations of the hot kernels.

Twin of the compiled extension ``_kernels``; both expose

* ``closest_points``: exact closest point on candidate triangles per query,
  lowest face index on distance ties
* ``rasterize``: UV-space triangle coverage of texel centers with
  barycentric coordinates and interior-overlap detection

The arithmetic mirrors the scalar routines in the compiled twin expression
by expression so both backends agree to the last few ulps.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _closest_on_triangles(a, b, c, p):
    """Closest point on each triangle (a,b,c) to each point p, vectorized.

    Region classification follows the classic vertex/edge/interior case
    chain; conditions are evaluated in the same priority order as the
    scalar code so region selection is identical.
    """
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = ab[:, 0] * ap[:, 0] + ab[:, 1] * ap[:, 1] + ab[:, 2] * ap[:, 2]
    d2 = ac[:, 0] * ap[:, 0] + ac[:, 1] * ap[:, 1] + ac[:, 2] * ap[:, 2]
    bp = p - b
    d3 = ab[:, 0] * bp[:, 0] + ab[:, 1] * bp[:, 1] + ab[:, 2] * bp[:, 2]
    d4 = ac[:, 0] * bp[:, 0] + ac[:, 1] * bp[:, 1] + ac[:, 2] * bp[:, 2]
    cp = p - c
    d5 = ab[:, 0] * cp[:, 0] + ab[:, 1] * cp[:, 1] + ab[:, 2] * cp[:, 2]
    d6 = ac[:, 0] * cp[:, 0] + ac[:, 1] * cp[:, 1] + ac[:, 2] * cp[:, 2]
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = d1 / (d1 - d3)
        w_ac = d2 / (d2 - d6)
        w_bc = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        denom = 1.0 / (va + vb + vc)
        v_in = vb * denom
        w_in = vc * denom
    zero = np.zeros_like(d1)
    one = np.ones_like(d1)
    conds = [
        (d1 <= 0.0) & (d2 <= 0.0),
        (d3 >= 0.0) & (d4 <= d3),
        (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0),
        (d6 >= 0.0) & (d5 <= d6),
        (vb <= 0.0) & (d2 >= 0.0) & (d6 <= 0.0),
        (va <= 0.0) & ((d4 - d3) >= 0.0) & ((d5 - d6) >= 0.0),
    ]
    b0 = np.select(conds, [one, zero, 1.0 - v_ab, zero, 1.0 - w_ac, zero], 1.0 - v_in - w_in)
    b1 = np.select(conds, [zero, one, v_ab, zero, zero, 1.0 - w_bc], v_in)
    b2 = np.select(conds, [zero, zero, zero, one, w_ac, w_bc], w_in)
    point = np.empty_like(p)
    for k in range(3):
        point[:, k] = np.select(
            conds,
            [
                a[:, k],
                b[:, k],
                a[:, k] + v_ab * ab[:, k],
                c[:, k],
                a[:, k] + w_ac * ac[:, k],
                b[:, k] + w_bc * (c[:, k] - b[:, k]),
            ],
            a[:, k] + ab[:, k] * v_in + ac[:, k] * w_in,
        )
    bary = np.stack([b0, b1, b2], axis=1)
    return bary, point


def closest_points(tri_a, tri_b, tri_c, queries, cand_starts, cand_counts, cand_faces):
    """Per query, exact closest point over its candidate faces.

    Candidates must be sorted ascending per query; ties in squared distance
    keep the first (lowest) face. Queries with no candidates return face -1.
    """
    nq = len(queries)
    face_out = np.full(nq, -1, dtype=np.int64)
    bary_out = np.zeros((nq, 3), dtype=np.float64)
    point_out = np.zeros((nq, 3), dtype=np.float64)
    dist2_out = np.full(nq, np.inf, dtype=np.float64)
    npairs = len(cand_faces)
    if npairs == 0:
        return face_out, bary_out, point_out, dist2_out
    seg = np.repeat(np.arange(nq, dtype=np.int64), cand_counts)
    a = tri_a[cand_faces]
    b = tri_b[cand_faces]
    c = tri_c[cand_faces]
    p = queries[seg]
    bary, point = _closest_on_triangles(a, b, c, p)
    dx = p[:, 0] - point[:, 0]
    dy = p[:, 1] - point[:, 1]
    dz = p[:, 2] - point[:, 2]
    dist2 = dx * dx + dy * dy + dz * dz
    # first row per segment after (seg, dist2, position) ordering = strict-<
    # scan in candidate order
    order = np.lexsort((np.arange(npairs), dist2, seg))
    seg_sorted = seg[order]
    uniq, first = np.unique(seg_sorted, return_index=True)
    winners = order[first]
    face_out[uniq] = cand_faces[winners]
    bary_out[uniq] = bary[winners]
    point_out[uniq] = point[winners]
    dist2_out[uniq] = dist2[winners]
    return face_out, bary_out, point_out, dist2_out


def rasterize(uv, width, height, edge_eps=1e-9, interior_eps=1e-4):
    """Assign UV triangles to texel centers.

    Texel (ix, iy) has center ((ix+0.5)/width, (iy+0.5)/height); rows run
    bottom-up in UV space. Faces processed in ascending order, first
    assignment wins. Returns (face_idx (h,w) int32 with -1 for uncovered,
    bary (h,w,3), interior_overlap_count).
    """
    uv = np.asarray(uv, dtype=np.float64)
    face_idx = np.full((height, width), -1, dtype=np.int32)
    bary = np.zeros((height, width, 3), dtype=np.float64)
    assigned_min = np.full((height, width), -1.0)
    overlaps = 0
    for fi in range(len(uv)):
        cx = uv[fi, :, 0] * width - 0.5
        cy = uv[fi, :, 1] * height - 0.5
        det = (cx[1] - cx[0]) * (cy[2] - cy[0]) - (cx[2] - cx[0]) * (cy[1] - cy[0])
        if det == 0.0 or abs(det) < 1e-18:
            continue
        x0 = max(0, int(np.ceil(cx.min() - 1e-9)))
        x1 = min(width - 1, int(np.floor(cx.max() + 1e-9)))
        y0 = max(0, int(np.ceil(cy.min() - 1e-9)))
        y1 = min(height - 1, int(np.floor(cy.max() + 1e-9)))
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1, dtype=np.float64)
        ys = np.arange(y0, y1 + 1, dtype=np.float64)
        gx, gy = np.meshgrid(xs, ys)
        b1 = ((gx - cx[0]) * (cy[2] - cy[0]) - (gy - cy[0]) * (cx[2] - cx[0])) / det
        b2 = ((cx[1] - cx[0]) * (gy - cy[0]) - (cy[1] - cy[0]) * (gx - cx[0])) / det
        b0 = 1.0 - b1 - b2
        covered = (b0 >= -edge_eps) & (b1 >= -edge_eps) & (b2 >= -edge_eps)
        if not covered.any():
            continue
        sub_face = face_idx[y0 : y1 + 1, x0 : x1 + 1]
        sub_min = assigned_min[y0 : y1 + 1, x0 : x1 + 1]
        new_min = np.minimum(np.minimum(b0, b1), b2)
        fresh = covered & (sub_face == -1)
        clash = covered & (sub_face != -1) & (new_min > interior_eps) & (sub_min > interior_eps)
        overlaps += int(clash.sum())
        if fresh.any():
            sub_face[fresh] = fi
            sub_min[fresh] = new_min[fresh]
            sub_bary = bary[y0 : y1 + 1, x0 : x1 + 1]
            sub_bary[..., 0][fresh] = b0[fresh]
            sub_bary[..., 1][fresh] = b1[fresh]
            sub_bary[..., 2][fresh] = b2[fresh]
    return face_idx, bary, overlaps
