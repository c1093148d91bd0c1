"""Non-rigid ICP: correspondence search + damped Gauss-Newton on the graph.

One outer iteration = recompute correspondences (surface and boundary) at
the current deformed state, then take one damped Gauss-Newton step on that
fixed correspondence set. A step is never accepted if it increases the
energy of its own correspondence set. A correspondence refresh can raise
the objective (the boundary matcher deliberately picks far representatives),
so iterations are *accepted* only when their post-step energy improves on
the best seen so far; the best iterate is returned and the accepted-energy
history is non-increasing by construction. The solver stops when the
relative change between consecutive post-step energies falls below the
tolerance or at the iteration cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import DataError, SolverError
from ..geometry.mesh import Mesh
from ..geometry.normals import compute_vertex_normals, with_computed_normals
from ..geometry.spatial import SurfaceIndex
from .boundary import BoundarySets, match_boundary
from .energy import (
    BoundaryPairs,
    Correspondences,
    EnergyTerms,
    assemble_system,
    evaluate_energy,
)
from .graph import DeformationGraph, RegistrationConfig, build_graph


@dataclass
class RegistrationResult:
    mesh: Mesh
    energy: float
    terms: dict
    iterations: int
    converged: bool
    energy_history: list = field(default_factory=list)
    graph: DeformationGraph | None = None


def graph_from_skinning(graph: DeformationGraph, template: Mesh, weights, skeleton, pose):
    """Initialize node transforms from the skinning field.

    Each node adopts the blended skinning transform of its nearest template
    vertex, so the initial deformation reproduces the skinned template up to
    the skinning blend's spatial variation. The graph structure (built on
    the rest template) is shared across frames, which keeps sequential
    initialization valid.
    """
    from ..geometry.spatial import PointIndex
    from ..skinning import skinning_matrices

    mats = skinning_matrices(skeleton, pose)  # (j, 4, 4)
    nearest, _ = PointIndex(template.vertices).nearest_many(graph.nodes)
    blend = np.einsum("nk,nkab->nab", weights.weights[nearest], mats[weights.joints[nearest]])
    lin = blend[:, :3, :3]
    off = blend[:, :3, 3]
    out = DeformationGraph(
        nodes=graph.nodes,
        spacing=graph.spacing,
        binding_nodes=graph.binding_nodes,
        binding_weights=graph.binding_weights,
        neighbor_pairs=graph.neighbor_pairs,
        affines=lin.copy(),
        translations=np.einsum("nab,nb->na", lin, graph.nodes) + off - graph.nodes,
    )
    return out


def compute_correspondences(
    deformed_vertices: np.ndarray,
    deformed_normals: np.ndarray,
    scan_index: SurfaceIndex,
    scan_vertex_normals: np.ndarray | None,
    config: RegistrationConfig,
) -> Correspondences:
    """Nearest scan surface points, pruned by distance and normal angle."""
    faces, bary, points, dist2 = scan_index.closest_points_arrays(deformed_vertices)
    dist = np.sqrt(dist2)
    keep = (faces >= 0) & (dist <= config.correspondence_cutoff)
    if scan_vertex_normals is not None:
        tri = scan_index.mesh.faces[faces]
        hit_n = np.einsum("cb,cba->ca", bary, scan_vertex_normals[tri])
        lens = np.linalg.norm(hit_n, axis=1)
        ok = lens > 1e-12
        hit_n[ok] = hit_n[ok] / lens[ok, None]
    else:
        hit_n = scan_index._face_normals[faces]
        ok = np.linalg.norm(hit_n, axis=1) > 1e-12
    keep &= ok
    cos_cut = np.cos(np.deg2rad(config.normal_cutoff_degrees))
    tnorm_len = np.linalg.norm(deformed_normals, axis=1)
    has_tn = tnorm_len > 1e-12
    cosang = np.einsum("ca,ca->c", deformed_normals, hit_n)
    keep &= ~has_tn | (cosang >= cos_cut)
    idx = np.flatnonzero(keep)
    normals = hit_n[idx] if config.point_to_plane else None
    return Correspondences(
        vertex_indices=idx.astype(np.int64),
        targets=points[idx],
        target_normals=normals,
    )


def _boundary_pairs(deformed_vertices, boundaries: BoundarySets | None):
    if boundaries is None or len(boundaries.template_indices) == 0:
        return None
    t_pts = deformed_vertices[boundaries.template_indices]
    t_ids, s_ids = match_boundary(t_pts, boundaries.scan_points)
    return BoundaryPairs(
        template_vertex_indices=boundaries.template_indices[t_ids],
        scan_targets=boundaries.scan_points[s_ids],
    )


def _block_jacobi(a, block: int):
    """Inverse of the 12x12 node-diagonal blocks as a LinearOperator."""
    n = a.shape[0]
    nb = n // block
    bsr = a.tobsr(blocksize=(block, block))
    blocks = np.tile(np.eye(block), (nb, 1, 1))
    indptr, indices, data = bsr.indptr, bsr.indices, bsr.data
    for i in range(nb):
        row = indices[indptr[i] : indptr[i + 1]]
        hit = np.flatnonzero(row == i)
        if hit.size:
            blocks[i] = data[indptr[i] + hit[0]]
    inv = np.linalg.inv(blocks)

    def apply(x):
        return np.einsum("bij,bj->bi", inv, x.reshape(nb, block)).reshape(-1)

    return spla.LinearOperator((n, n), matvec=apply)


def _solve_normal_equations(a_csc, rhs):
    """Block-Jacobi CG for large systems, direct LU for small ones."""
    n = a_csc.shape[0]
    if n <= 2000:
        return spla.spsolve(a_csc, rhs)
    a_csr = a_csc.tocsr()
    try:
        m = _block_jacobi(a_csr, 12)
    except np.linalg.LinAlgError:
        diag = a_csc.diagonal()
        m = sp.diags(np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0))
    x, info = spla.cg(a_csr, rhs, rtol=1e-10, atol=0.0, maxiter=10 * n, M=m)
    if info != 0:
        return spla.spsolve(a_csc, rhs)
    return x


def _gauss_newton_step(graph, verts, corr, bpairs, config, e_pre: EnergyTerms, damping):
    """One damped step; returns (accepted, new damping, post energy)."""
    h, g = assemble_system(graph, verts, corr, bpairs, config)
    if not np.all(np.isfinite(g)):
        raise SolverError("non-finite gradient in Gauss-Newton system")
    saved_a, saved_t = graph.copy_transforms()
    x0 = graph.params_vector()
    eye = sp.identity(graph.n_params, format="csc")
    mu = damping
    for _ in range(config.max_damping_retries):
        try:
            delta = _solve_normal_equations((h + mu * eye).tocsc(), -g)
        except RuntimeError as exc:
            raise SolverError(f"linear solve failed: {exc}") from exc
        if np.all(np.isfinite(delta)):
            graph.set_params_vector(x0 + delta)
            e_new = evaluate_energy(graph, verts, corr, bpairs, config)
            if e_new.total <= e_pre.total:
                return True, max(mu / 2.0, 1e-12), e_new
            graph.affines, graph.translations = saved_a.copy(), saved_t.copy()
        mu *= 10.0
    return False, mu, e_pre


def register(
    template: Mesh,
    scan: Mesh,
    boundaries: BoundarySets | None,
    config: RegistrationConfig | None = None,
    init: DeformationGraph | None = None,
) -> RegistrationResult:
    """Align the clothing template to one scan frame.

    The returned mesh shares the template topology and UVs; recomputed
    vertex normals are attached. `init` reuses a previous frame's graph
    (sequential mode); otherwise an identity graph is built.
    """
    config = config or RegistrationConfig()
    if template.uvs is None:
        raise DataError("template must carry a UV atlas")
    if scan.n_faces < 1:
        raise DataError("scan must have at least one face")
    graph = init if init is not None else build_graph(template.vertices, config.grid_spacing)
    scan_index = SurfaceIndex(scan)
    if scan.vertex_normals is not None:
        scan_vn = scan.vertex_normals
    else:
        scan_vn, _ = compute_vertex_normals(scan)
    verts = template.vertices
    faces = template.faces

    history = []  # accepted (best-improving) energies, non-increasing
    best_terms = None
    best_state = graph.copy_transforms()
    damping = config.damping_init
    converged = False
    iterations = 0
    stalled = 0
    for it in range(config.max_iterations):
        deformed = graph.deform(verts)
        dnormals, _ = compute_vertex_normals(Mesh(deformed, faces, validate=False))
        corr = compute_correspondences(deformed, dnormals, scan_index, scan_vn, config)
        bpairs = _boundary_pairs(deformed, boundaries)
        e_pre = evaluate_energy(graph, verts, corr, bpairs, config)
        if best_terms is None:
            # baseline: the init state scored on the first correspondence set
            best_terms = e_pre
            history.append(e_pre.total)
            best_state = graph.copy_transforms()
        stepped, damping, e_post = _gauss_newton_step(
            graph, verts, corr, bpairs, config, e_pre, damping
        )
        iterations = it + 1
        improved = e_post.total <= history[-1] * (1.0 - config.convergence_tolerance)
        if e_post.total <= history[-1]:
            history.append(e_post.total)
            best_terms = e_post
            best_state = graph.copy_transforms()
        if not stepped:
            converged = True
            break
        if e_post.total <= 1e-24:  # ~1e-12 m residuals; exact-match fast path
            converged = True
            break
        if improved:
            stalled = 0
        else:
            stalled += 1
            if stalled >= config.stall_patience:
                converged = True
                break
    graph.affines, graph.translations = best_state
    deformed = graph.deform(verts)
    dnormals, _ = compute_vertex_normals(Mesh(deformed, faces, validate=False))
    out_mesh = Mesh(deformed, faces, uvs=template.uvs, vertex_normals=dnormals)
    if best_terms is None:
        best_terms = evaluate_energy(
            graph,
            verts,
            compute_correspondences(deformed, dnormals, scan_index, scan_vn, config),
            _boundary_pairs(deformed, boundaries),
            config,
        )
        history.append(best_terms.total)
    return RegistrationResult(
        mesh=out_mesh,
        energy=best_terms.total,
        terms=best_terms.as_dict(),
        iterations=iterations,
        converged=converged,
        energy_history=history,
        graph=graph,
    )
