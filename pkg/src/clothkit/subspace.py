"""Linear blend-shape model over pose-normalized registrations.

Frames are stacked as 3v-vectors; the model is the mean plus the top-k left
singular vectors of the centered stack. Coefficients are projections of
offsets from the mean, so reconstruction is mean + basis @ coeffs, followed
by skinning when a pose is given.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .geometry.mesh import Mesh
from .io_utils import read_array_container, topology_hash, write_array_container
from .skinning import Pose, Skeleton, SkinWeights, skin

MODEL_FORMAT = "clothkit-subspace@1"


@dataclass(frozen=True)
class SubspaceModel:
    mean: np.ndarray  # (3v,)
    basis: np.ndarray  # (3v, k), orthonormal columns
    singular_values: np.ndarray  # (k,), non-increasing
    faces: np.ndarray  # template topology
    uvs: np.ndarray | None
    frame_count: int

    def __post_init__(self):
        if self.basis.shape[0] != self.mean.shape[0]:
            raise DataError("basis/mean dimension mismatch")
        if self.basis.shape[1] != len(self.singular_values):
            raise DataError("basis/singular value count mismatch")

    @property
    def vertex_count(self) -> int:
        return self.mean.shape[0] // 3

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @property
    def topology_hash(self) -> str:
        return topology_hash(self.faces, self.uvs)

    def mean_mesh(self) -> Mesh:
        return Mesh(self.mean.reshape(-1, 3), self.faces, uvs=self.uvs)


def _stack(frames) -> np.ndarray:
    first = frames[0]
    cols = []
    for f in frames:
        if not first.same_topology(f):
            raise DataError("training frames must share template topology")
        cols.append(f.vertices.reshape(-1))
    return np.stack(cols, axis=1)  # (3v, n)


def fit(frames, k: int) -> SubspaceModel:
    """PCA fit of pose-normalized frames; keeps the top-k deformation modes."""
    if len(frames) < 2:
        raise DataError("need at least two frames to fit a subspace")
    x = _stack(frames)
    n = x.shape[1]
    if not 1 <= k <= min(n, x.shape[0]):
        raise ConfigError(f"k={k} out of range (1..{min(n, x.shape[0])})")
    mean = x.mean(axis=1)
    offsets = x - mean[:, None]
    u, s, _ = np.linalg.svd(offsets, full_matrices=False)
    basis = u[:, :k].copy()
    # deterministic sign: largest-magnitude entry of each column positive
    for i in range(k):
        j = int(np.argmax(np.abs(basis[:, i])))
        if basis[j, i] < 0:
            basis[:, i] = -basis[:, i]
    return SubspaceModel(
        mean=mean,
        basis=basis,
        singular_values=s[:k].copy(),
        faces=frames[0].faces,
        uvs=frames[0].uvs,
        frame_count=n,
    )


def project(model: SubspaceModel, mesh: Mesh) -> np.ndarray:
    """Coefficients of a pose-normalized mesh: basis^T (x - mean)."""
    if mesh.n_vertices != model.vertex_count or not np.array_equal(mesh.faces, model.faces):
        raise DataError("mesh topology does not match the model")
    return model.basis.T @ (mesh.vertices.reshape(-1) - model.mean)


def reconstruct(
    model: SubspaceModel,
    coefficients: np.ndarray,
    pose: Pose | None = None,
    weights: SkinWeights | None = None,
    skeleton: Skeleton | None = None,
) -> Mesh:
    """Blend-shape synthesis; posed through skinning when a pose is given."""
    lam = np.asarray(coefficients, dtype=np.float64).reshape(-1)
    if lam.shape[0] != model.k:
        raise DataError(f"expected {model.k} coefficients, got {lam.shape[0]}")
    verts = (model.mean + model.basis @ lam).reshape(-1, 3)
    mesh = Mesh(verts, model.faces, uvs=model.uvs)
    if pose is None:
        return mesh
    if weights is None or skeleton is None:
        raise DataError("posing a reconstruction needs skin weights and the skeleton")
    return skin(mesh, weights, skeleton, pose)


def retarget_mean(model: SubspaceModel, body_offsets: np.ndarray) -> SubspaceModel:
    """Replace the mean by mean + offsets (body-shape transfer); basis unchanged."""
    o = np.asarray(body_offsets, dtype=np.float64).reshape(-1)
    if o.shape[0] != model.mean.shape[0]:
        raise DataError(
            f"offset vector length {o.shape[0]} != {model.mean.shape[0]} (3 * vertex count)"
        )
    return SubspaceModel(
        mean=model.mean + o,
        basis=model.basis,
        singular_values=model.singular_values,
        faces=model.faces,
        uvs=model.uvs,
        frame_count=model.frame_count,
    )


def save_model(model: SubspaceModel, path) -> None:
    header = {
        "format": MODEL_FORMAT,
        "k": model.k,
        "vertex_count": model.vertex_count,
        "frame_count": model.frame_count,
        "topology_hash": model.topology_hash,
        "has_uvs": model.uvs is not None,
    }
    arrays = {
        "mean": model.mean,
        "basis": model.basis,
        "singular_values": model.singular_values,
        "faces": model.faces,
    }
    if model.uvs is not None:
        arrays["uvs"] = model.uvs
    write_array_container(path, header, arrays)


def load_model(path) -> SubspaceModel:
    header, arrays = read_array_container(path)
    if header.get("format") != MODEL_FORMAT:
        raise DataError(f"{path}: not a subspace model file")
    return SubspaceModel(
        mean=arrays["mean"],
        basis=arrays["basis"],
        singular_values=arrays["singular_values"],
        faces=arrays["faces"],
        uvs=arrays.get("uvs"),
        frame_count=int(header["frame_count"]),
    )
