# cython: boundscheck=False, wraparound=False, cdivision=True
# Compiled twin of _kernels_py. Same region-selection order and arithmetic.

import numpy as np

cimport numpy as cnp

BACKEND_NAME = "compiled"


cdef inline double _tri_closest(double ax, double ay, double az,
                                double bx, double by, double bz,
                                double cx, double cy, double cz,
                                double px, double py, double pz,
                                double* out) noexcept nogil:
    # out[0:3] = barycentric, out[3:6] = closest point; returns squared distance
    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double acx = cx - ax, acy = cy - ay, acz = cz - az
    cdef double apx = px - ax, apy = py - ay, apz = pz - az
    cdef double d1 = abx * apx + aby * apy + abz * apz
    cdef double d2 = acx * apx + acy * apy + acz * apz
    cdef double bpx, bpy, bpz, cpx, cpy, cpz
    cdef double d3, d4, d5, d6, vc, vb, va, v, w, denom
    cdef double qx, qy, qz, dx, dy, dz
    if d1 <= 0.0 and d2 <= 0.0:
        out[0] = 1.0; out[1] = 0.0; out[2] = 0.0
        qx = ax; qy = ay; qz = az
    else:
        bpx = px - bx; bpy = py - by; bpz = pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            out[0] = 0.0; out[1] = 1.0; out[2] = 0.0
            qx = bx; qy = by; qz = bz
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                v = d1 / (d1 - d3)
                out[0] = 1.0 - v; out[1] = v; out[2] = 0.0
                qx = ax + v * abx; qy = ay + v * aby; qz = az + v * abz
            else:
                cpx = px - cx; cpy = py - cy; cpz = pz - cz
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    out[0] = 0.0; out[1] = 0.0; out[2] = 1.0
                    qx = cx; qy = cy; qz = cz
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        w = d2 / (d2 - d6)
                        out[0] = 1.0 - w; out[1] = 0.0; out[2] = w
                        qx = ax + w * acx; qy = ay + w * acy; qz = az + w * acz
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            out[0] = 0.0; out[1] = 1.0 - w; out[2] = w
                            qx = bx + w * (cx - bx); qy = by + w * (cy - by); qz = bz + w * (cz - bz)
                        else:
                            denom = 1.0 / (va + vb + vc)
                            v = vb * denom
                            w = vc * denom
                            out[0] = 1.0 - v - w; out[1] = v; out[2] = w
                            qx = ax + abx * v + acx * w
                            qy = ay + aby * v + acy * w
                            qz = az + abz * v + acz * w
    out[3] = qx; out[4] = qy; out[5] = qz
    dx = px - qx; dy = py - qy; dz = pz - qz
    return dx * dx + dy * dy + dz * dz


def closest_points(const double[:, ::1] tri_a, const double[:, ::1] tri_b, const double[:, ::1] tri_c,
                   const double[:, ::1] queries,
                   const long long[::1] cand_starts, const long long[::1] cand_counts,
                   const long long[::1] cand_faces):
    cdef Py_ssize_t nq = queries.shape[0]
    face_out = np.full(nq, -1, dtype=np.int64)
    bary_out = np.zeros((nq, 3), dtype=np.float64)
    point_out = np.zeros((nq, 3), dtype=np.float64)
    dist2_out = np.full(nq, np.inf, dtype=np.float64)
    cdef long long[::1] face_v = face_out
    cdef double[:, ::1] bary_v = bary_out
    cdef double[:, ::1] point_v = point_out
    cdef double[::1] dist2_v = dist2_out
    cdef Py_ssize_t i, j
    cdef long long f, best_f, start, count
    cdef double px, py, pz, d2, best_d2
    cdef double buf[6]
    cdef double best[6]
    with nogil:
        for i in range(nq):
            start = cand_starts[i]
            count = cand_counts[i]
            if count == 0:
                continue
            px = queries[i, 0]; py = queries[i, 1]; pz = queries[i, 2]
            best_d2 = -1.0
            best_f = -1
            for j in range(count):
                f = cand_faces[start + j]
                d2 = _tri_closest(tri_a[f, 0], tri_a[f, 1], tri_a[f, 2],
                                  tri_b[f, 0], tri_b[f, 1], tri_b[f, 2],
                                  tri_c[f, 0], tri_c[f, 1], tri_c[f, 2],
                                  px, py, pz, buf)
                if best_f < 0 or d2 < best_d2:
                    best_d2 = d2
                    best_f = f
                    best[0] = buf[0]; best[1] = buf[1]; best[2] = buf[2]
                    best[3] = buf[3]; best[4] = buf[4]; best[5] = buf[5]
            face_v[i] = best_f
            dist2_v[i] = best_d2
            bary_v[i, 0] = best[0]; bary_v[i, 1] = best[1]; bary_v[i, 2] = best[2]
            point_v[i, 0] = best[3]; point_v[i, 1] = best[4]; point_v[i, 2] = best[5]
    return face_out, bary_out, point_out, dist2_out


def rasterize(const double[:, :, ::1] uv, int width, int height,
              double edge_eps=1e-9, double interior_eps=1e-4):
    cdef Py_ssize_t m = uv.shape[0]
    face_out = np.full((height, width), -1, dtype=np.int32)
    bary_out = np.zeros((height, width, 3), dtype=np.float64)
    min_out = np.full((height, width), -1.0, dtype=np.float64)
    cdef int[:, ::1] face_v = face_out
    cdef double[:, :, ::1] bary_v = bary_out
    cdef double[:, ::1] min_v = min_out
    cdef Py_ssize_t fi
    cdef long overlaps = 0
    cdef double c0x, c0y, c1x, c1y, c2x, c2y, det
    cdef double xmin, xmax, ymin, ymax
    cdef Py_ssize_t x0, x1, y0, y1, ix, iy
    cdef double gx, gy, b0, b1, b2, bmin
    with nogil:
        for fi in range(m):
            c0x = uv[fi, 0, 0] * width - 0.5
            c0y = uv[fi, 0, 1] * height - 0.5
            c1x = uv[fi, 1, 0] * width - 0.5
            c1y = uv[fi, 1, 1] * height - 0.5
            c2x = uv[fi, 2, 0] * width - 0.5
            c2y = uv[fi, 2, 1] * height - 0.5
            det = (c1x - c0x) * (c2y - c0y) - (c2x - c0x) * (c1y - c0y)
            if det == 0.0 or (det < 1e-18 and det > -1e-18):
                continue
            xmin = c0x
            if c1x < xmin: xmin = c1x
            if c2x < xmin: xmin = c2x
            xmax = c0x
            if c1x > xmax: xmax = c1x
            if c2x > xmax: xmax = c2x
            ymin = c0y
            if c1y < ymin: ymin = c1y
            if c2y < ymin: ymin = c2y
            ymax = c0y
            if c1y > ymax: ymax = c1y
            if c2y > ymax: ymax = c2y
            x0 = <Py_ssize_t>_ceil(xmin - 1e-9)
            if x0 < 0: x0 = 0
            x1 = <Py_ssize_t>_floor(xmax + 1e-9)
            if x1 > width - 1: x1 = width - 1
            y0 = <Py_ssize_t>_ceil(ymin - 1e-9)
            if y0 < 0: y0 = 0
            y1 = <Py_ssize_t>_floor(ymax + 1e-9)
            if y1 > height - 1: y1 = height - 1
            if x1 < x0 or y1 < y0:
                continue
            for iy in range(y0, y1 + 1):
                gy = <double>iy
                for ix in range(x0, x1 + 1):
                    gx = <double>ix
                    b1 = ((gx - c0x) * (c2y - c0y) - (gy - c0y) * (c2x - c0x)) / det
                    b2 = ((c1x - c0x) * (gy - c0y) - (c1y - c0y) * (gx - c0x)) / det
                    b0 = 1.0 - b1 - b2
                    if b0 >= -edge_eps and b1 >= -edge_eps and b2 >= -edge_eps:
                        bmin = b0
                        if b1 < bmin: bmin = b1
                        if b2 < bmin: bmin = b2
                        if face_v[iy, ix] == -1:
                            face_v[iy, ix] = <int>fi
                            min_v[iy, ix] = bmin
                            bary_v[iy, ix, 0] = b0
                            bary_v[iy, ix, 1] = b1
                            bary_v[iy, ix, 2] = b2
                        elif bmin > interior_eps and min_v[iy, ix] > interior_eps:
                            overlaps += 1
    return face_out, bary_out, int(overlaps)


cdef extern from "math.h":
    double ceil(double) nogil
    double floor(double) nogil


cdef inline double _ceil(double x) noexcept nogil:
    return ceil(x)


cdef inline double _floor(double x) noexcept nogil:
    return floor(x)
