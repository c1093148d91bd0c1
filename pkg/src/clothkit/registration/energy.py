"""Registration energy terms, residuals, and analytic Jacobians.

Total objective:

    E = E_data + w_r * E_rigid + w_s * E_smooth + w_b * E_bound

* E_data: sum of squared point-to-plane distances from deformed template
  vertices to their nearest scan surface points (point-to-point when the
  scan has no normals), pruned by distance and normal-compatibility cutoffs
* E_rigid: mean over nodes of ||A^T A - I||_F^2 + (det A - 1)^2
* E_smooth: mean over ordered neighbor node pairs (k, l) of
  ||A_k (g_l - g_k) + g_k + t_k - (g_l + t_l)||^2
* E_bound: sum of squared distances of deformed boundary vertices to their
  matched scan boundary points

The regularizers are means, not sums, so the data/regularizer balance at
the default weights does not depend on the graph resolution.

Unknown layout: per node, 9 row-major entries of A then 3 of t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import NumericalError
from .graph import DeformationGraph, RegistrationConfig


@dataclass
class Correspondences:
    vertex_indices: np.ndarray  # (C,)
    targets: np.ndarray  # (C, 3)
    target_normals: np.ndarray | None  # (C, 3) unit rows; None -> point-to-point

    @property
    def count(self) -> int:
        return len(self.vertex_indices)


@dataclass
class BoundaryPairs:
    template_vertex_indices: np.ndarray  # (B,) indices into template vertices
    scan_targets: np.ndarray  # (B, 3)

    @property
    def count(self) -> int:
        return len(self.template_vertex_indices)


@dataclass
class EnergyTerms:
    data: float
    rigid: float
    smooth: float
    bound: float
    total: float

    def as_dict(self):
        return {
            "data": self.data,
            "rigid": self.rigid,
            "smooth": self.smooth,
            "bound": self.bound,
            "total": self.total,
        }


def _deformed_bound_vertices(graph, verts, idx):
    g = graph.nodes[graph.binding_nodes[idx]]
    a = graph.affines[graph.binding_nodes[idx]]
    t = graph.translations[graph.binding_nodes[idx]]
    local = np.einsum("ckab,ckb->cka", a, verts[idx][:, None, :] - g) + g + t
    return np.einsum("ck,cka->ca", graph.binding_weights[idx], local)


def _point_rows(graph, verts, idx, targets, with_jac):
    """Residuals v'(x) - c, three rows per correspondence."""
    if len(idx) == 0:
        empty = (np.zeros(0), None)
        return (np.zeros(0), ([], [], [])) if with_jac else empty
    diff = _deformed_bound_vertices(graph, verts, idx) - targets
    r = diff.reshape(-1)
    if not with_jac:
        return r, None
    c = len(idx)
    w = graph.binding_weights[idx]  # (C, 8)
    kn = graph.binding_nodes[idx]  # (C, 8)
    g = graph.nodes[kn]
    v = verts[idx]
    a_vals = w[:, :, None] * (v[:, None, :] - g)  # (C, 8, 3)
    vals = np.empty((c, 8, 3, 4))
    vals[..., 0:3] = a_vals[:, :, None, :]
    vals[..., 3] = w[:, :, None]
    cols = np.empty((c, 8, 3, 4), dtype=np.int64)
    base = 12 * kn  # (C, 8)
    arange3 = np.arange(3, dtype=np.int64)
    cols[..., 0:3] = base[:, :, None, None] + 3 * arange3[None, None, :, None] + arange3
    cols[..., 3] = base[:, :, None] + 9 + arange3[None, None, :]
    rows = (3 * np.arange(c, dtype=np.int64)[:, None, None, None] + arange3[None, None, :, None])
    rows = np.broadcast_to(rows, vals.shape)
    return r, (rows.reshape(-1), cols.reshape(-1), vals.reshape(-1))


def _plane_rows(graph, verts, corr: Correspondences, with_jac):
    """Residuals n . (v'(x) - c), one row per correspondence."""
    idx = corr.vertex_indices
    if len(idx) == 0:
        return (np.zeros(0), ([], [], [])) if with_jac else (np.zeros(0), None)
    n = corr.target_normals
    diff = _deformed_bound_vertices(graph, verts, idx) - corr.targets
    r = np.einsum("ca,ca->c", n, diff)
    if not with_jac:
        return r, None
    c = len(idx)
    w = graph.binding_weights[idx]
    kn = graph.binding_nodes[idx]
    g = graph.nodes[kn]
    v = verts[idx]
    a_vals = (
        w[:, :, None, None] * n[:, None, :, None] * (v[:, None, None, :] - g[:, :, None, :])
    )  # (C, 8, 3, 3) indexed [c, slot, a, b]
    t_vals = w[:, :, None] * n[:, None, :]  # (C, 8, 3)
    vals = np.concatenate([a_vals.reshape(c, 8, 9), t_vals], axis=2)  # (C, 8, 12)
    base = 12 * kn
    cols = base[:, :, None] + np.arange(12, dtype=np.int64)[None, None, :]
    rows = np.broadcast_to(np.arange(c, dtype=np.int64)[:, None, None], vals.shape)
    return r, (rows.reshape(-1), cols.reshape(-1), vals.reshape(-1))


def _data_rows(graph, verts, corr: Correspondences, with_jac):
    if corr.target_normals is not None:
        return _plane_rows(graph, verts, corr, with_jac)
    return _point_rows(graph, verts, corr.vertex_indices, corr.targets, with_jac)


def _rigid_rows(graph, with_jac):
    """Per node: 9 rows of A^T A - I (row-major) then det(A) - 1.

    Rows carry a 1/sqrt(K) factor so the squared sum is the node mean.
    """
    a = graph.affines  # (K, 3, 3)
    k = len(a)
    scale = 1.0 / np.sqrt(k)
    gram = np.einsum("kca,kcb->kab", a, a) - np.eye(3)
    cof = np.stack(
        [
            np.cross(a[:, 1], a[:, 2]),
            np.cross(a[:, 2], a[:, 0]),
            np.cross(a[:, 0], a[:, 1]),
        ],
        axis=1,
    )  # (K, 3, 3) cofactor matrix
    det = np.einsum("kb,kb->k", a[:, 0], cof[:, 0])
    r = scale * np.concatenate([gram.reshape(k, 9), (det - 1.0)[:, None]], axis=1).reshape(-1)
    if not with_jac:
        return r, None
    eye = np.eye(3)
    # d(gram[a,b]) / dA[e,f] = I[f,a] A[e,b] + I[f,b] A[e,a]
    jm = np.einsum("fa,keb->kabef", eye, a) + np.einsum("fb,kea->kabef", eye, a)  # (K,3,3,3,3)
    vals_m = scale * jm.reshape(k, 9, 9)
    rows_m = (10 * np.arange(k, dtype=np.int64))[:, None, None] + np.arange(9)[None, :, None]
    cols_m = (12 * np.arange(k, dtype=np.int64))[:, None, None] + np.arange(9)[None, None, :]
    rows_m = np.broadcast_to(rows_m, vals_m.shape)
    cols_m = np.broadcast_to(cols_m, vals_m.shape)
    vals_d = scale * cof.reshape(k, 9)
    rows_d = np.broadcast_to(
        (10 * np.arange(k, dtype=np.int64) + 9)[:, None], vals_d.shape
    )
    cols_d = (12 * np.arange(k, dtype=np.int64))[:, None] + np.arange(9)[None, :]
    rows = np.concatenate([rows_m.reshape(-1), rows_d.reshape(-1)])
    cols = np.concatenate([cols_m.reshape(-1), cols_d.reshape(-1)])
    vals = np.concatenate([vals_m.reshape(-1), vals_d.reshape(-1)])
    return r, (rows, cols, vals)


def _smooth_rows(graph, with_jac):
    """Neighbor-consistency rows, scaled 1/sqrt(P) so the energy is the pair mean."""
    pairs = graph.neighbor_pairs
    if len(pairs) == 0:
        return (np.zeros(0), ([], [], [])) if with_jac else (np.zeros(0), None)
    k, l = pairs[:, 0], pairs[:, 1]
    p = len(pairs)
    scale = 1.0 / np.sqrt(p)
    gk, gl = graph.nodes[k], graph.nodes[l]
    d = gl - gk
    r = scale * (
        np.einsum("pab,pb->pa", graph.affines[k], d)
        + gk
        + graph.translations[k]
        - gl
        - graph.translations[l]
    ).reshape(-1)
    if not with_jac:
        return r, None
    arange3 = np.arange(3, dtype=np.int64)
    vals = np.empty((p, 3, 5))
    vals[..., 0:3] = scale * d[:, None, :]
    vals[..., 3] = scale
    vals[..., 4] = -scale
    cols = np.empty((p, 3, 5), dtype=np.int64)
    cols[..., 0:3] = (12 * k)[:, None, None] + 3 * arange3[None, :, None] + arange3
    cols[..., 3] = (12 * k)[:, None] + 9 + arange3[None, :]
    cols[..., 4] = (12 * l)[:, None] + 9 + arange3[None, :]
    rows = np.broadcast_to(
        (3 * np.arange(p, dtype=np.int64))[:, None, None] + arange3[None, :, None], vals.shape
    )
    return r, (rows.reshape(-1), cols.reshape(-1), vals.reshape(-1))


def _bound_rows(graph, verts, bpairs: BoundaryPairs | None, with_jac):
    if bpairs is None or bpairs.count == 0:
        return (np.zeros(0), ([], [], [])) if with_jac else (np.zeros(0), None)
    return _point_rows(graph, verts, bpairs.template_vertex_indices, bpairs.scan_targets, with_jac)


_TERMS = ("data", "rigid", "smooth", "bound")


def term_residuals(graph, template_vertices, corr, bpairs, with_jac=False):
    """Raw (unweighted) residuals per term, optionally with COO Jacobians."""
    out = {}
    out["data"] = _data_rows(graph, template_vertices, corr, with_jac)
    out["rigid"] = _rigid_rows(graph, with_jac)
    out["smooth"] = _smooth_rows(graph, with_jac)
    out["bound"] = _bound_rows(graph, template_vertices, bpairs, with_jac)
    return out


def evaluate_energy(
    graph: DeformationGraph,
    template_vertices: np.ndarray,
    corr: Correspondences,
    bpairs: BoundaryPairs | None,
    config: RegistrationConfig,
) -> EnergyTerms:
    res = term_residuals(graph, template_vertices, corr, bpairs, with_jac=False)
    vals = {}
    for name in _TERMS:
        r, _ = res[name]
        e = float(np.dot(r, r))
        if not np.isfinite(e):
            raise NumericalError(f"non-finite energy in term '{name}'")
        vals[name] = e
    total = (
        vals["data"]
        + config.omega_rigid * vals["rigid"]
        + config.omega_smooth * vals["smooth"]
        + config.omega_boundary * vals["bound"]
    )
    return EnergyTerms(vals["data"], vals["rigid"], vals["smooth"], vals["bound"], total)


def energy_gradient(graph, template_vertices, corr, bpairs, config):
    """Per-term gradients of the raw term energies wrt the parameter vector."""
    res = term_residuals(graph, template_vertices, corr, bpairs, with_jac=True)
    grads = {}
    n = graph.n_params
    for name in _TERMS:
        r, (rows, cols, vals) = res[name]
        j = sp.coo_matrix((vals, (rows, cols)), shape=(len(r), n)).tocsr()
        grads[name] = 2.0 * (j.T @ r)
    return grads


def assemble_system(graph, template_vertices, corr, bpairs, config):
    """Weighted Gauss-Newton system: (J^T J, J^T r) for the total energy."""
    res = term_residuals(graph, template_vertices, corr, bpairs, with_jac=True)
    weights = {
        "data": 1.0,
        "rigid": config.omega_rigid,
        "smooth": config.omega_smooth,
        "bound": config.omega_boundary,
    }
    rows_all, cols_all, vals_all, r_all = [], [], [], []
    offset = 0
    for name in _TERMS:
        r, (rows, cols, vals) = res[name]
        w = np.sqrt(weights[name])
        r_all.append(w * r)
        rows_all.append(np.asarray(rows, dtype=np.int64) + offset)
        cols_all.append(np.asarray(cols, dtype=np.int64))
        vals_all.append(w * np.asarray(vals, dtype=np.float64))
        offset += len(r)
    r = np.concatenate(r_all)
    j = sp.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(offset, graph.n_params),
    ).tocsr()
    return (j.T @ j).tocsc(), j.T @ r
