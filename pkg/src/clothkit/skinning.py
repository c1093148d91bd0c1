"""Skeletons, poses, linear blend skinning and its exact inverse.

A pose holds one unit quaternion per joint, a root translation, and
optional per-bone length scales. The posed local transform of joint j is

    local_j = Trans(scale_j * rest_offset_j) @ Rot(rest_rotation_j) @ Rot(q_j)

with the root translation prepended at the root, so the identity pose
reproduces the rest (bind) configuration exactly. Inverse skinning inverts
each vertex's *blended* affine transform, which makes unskin(skin(x)) exact
up to floating point.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, SingularTransformError
from .geometry.mesh import Mesh
from .io_utils import read_json, write_json

_QUAT_TOL = 1e-9


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_multiply(q1, q2):
    w1, x1, y1, z1 = np.moveaxis(np.asarray(q1, dtype=np.float64), -1, 0)
    w2, x2, y2, z2 = np.moveaxis(np.asarray(q2, dtype=np.float64), -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_to_matrix(q):
    """Unit quaternion (w, x, y, z) -> 3x3 rotation matrix. Batched."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = np.moveaxis(q, -1, 0)
    mat = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    mat[..., 0, 0] = 1 - 2 * (y * y + z * z)
    mat[..., 0, 1] = 2 * (x * y - w * z)
    mat[..., 0, 2] = 2 * (x * z + w * y)
    mat[..., 1, 0] = 2 * (x * y + w * z)
    mat[..., 1, 1] = 1 - 2 * (x * x + z * z)
    mat[..., 1, 2] = 2 * (y * z - w * x)
    mat[..., 2, 0] = 2 * (x * z - w * y)
    mat[..., 2, 1] = 2 * (y * z + w * x)
    mat[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return mat


def quat_about_axis(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int  # -1 for the root
    rest_rotation: np.ndarray  # unit quaternion (w, x, y, z)
    rest_offset: np.ndarray  # translation from parent, meters

    def __post_init__(self):
        object.__setattr__(self, "rest_rotation", np.asarray(self.rest_rotation, dtype=np.float64))
        object.__setattr__(self, "rest_offset", np.asarray(self.rest_offset, dtype=np.float64))


@dataclass(frozen=True)
class Skeleton:
    joints: tuple

    def __post_init__(self):
        object.__setattr__(self, "joints", tuple(self.joints))
        roots = [i for i, j in enumerate(self.joints) if j.parent < 0]
        if len(roots) != 1 or roots[0] != 0:
            raise DataError("skeleton must have exactly one root at index 0")
        for i, j in enumerate(self.joints):
            if j.parent >= i:
                raise DataError(f"joint {i} parent {j.parent} not topologically sorted")

    @property
    def n_joints(self) -> int:
        return len(self.joints)


@dataclass(frozen=True)
class Pose:
    rotations: np.ndarray  # (j, 4) unit quaternions, (w, x, y, z)
    root_translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bone_scales: np.ndarray | None = None

    def __post_init__(self):
        rot = np.asarray(self.rotations, dtype=np.float64).reshape(-1, 4)
        norms = np.linalg.norm(rot, axis=1)
        if np.any(np.abs(norms - 1.0) > _QUAT_TOL):
            raise DataError("pose quaternions must be unit norm")
        object.__setattr__(self, "rotations", rot)
        object.__setattr__(
            self, "root_translation", np.asarray(self.root_translation, dtype=np.float64).reshape(3)
        )
        if self.bone_scales is not None:
            s = np.asarray(self.bone_scales, dtype=np.float64).reshape(-1)
            if np.any(s <= 0):
                raise DataError("bone scales must be positive")
            object.__setattr__(self, "bone_scales", s)

    @classmethod
    def identity(cls, n_joints: int) -> "Pose":
        rot = np.zeros((n_joints, 4))
        rot[:, 0] = 1.0
        return cls(rot)


@dataclass(frozen=True)
class SkinWeights:
    """Per vertex, up to 4 (joint, weight) pairs; weights sum to 1."""

    joints: np.ndarray  # (n, 4) int64, padded with 0
    weights: np.ndarray  # (n, 4) float64, padded with 0

    def __post_init__(self):
        j = np.asarray(self.joints, dtype=np.int64).reshape(-1, 4)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1, 4)
        if j.shape != w.shape:
            raise DataError("joint/weight array shapes differ")
        if np.any(w < 0):
            raise DataError("skin weights must be nonnegative")
        if np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-9):
            raise DataError("skin weights must sum to 1 per vertex")
        object.__setattr__(self, "joints", j)
        object.__setattr__(self, "weights", w)

    @property
    def n_vertices(self) -> int:
        return len(self.joints)


def _local_matrices(skeleton: Skeleton, pose: Pose) -> np.ndarray:
    n = skeleton.n_joints
    if pose.rotations.shape[0] != n:
        raise DataError("pose joint count does not match skeleton")
    scales = pose.bone_scales if pose.bone_scales is not None else np.ones(n)
    if len(scales) != n:
        raise DataError("bone scale count does not match skeleton")
    rest_rot = quat_to_matrix(np.stack([j.rest_rotation for j in skeleton.joints]))
    pose_rot = quat_to_matrix(pose.rotations)
    local = np.zeros((n, 4, 4))
    local[:, 3, 3] = 1.0
    local[:, :3, :3] = rest_rot @ pose_rot
    for i, joint in enumerate(skeleton.joints):
        local[i, :3, 3] = scales[i] * joint.rest_offset
    local[0, :3, 3] += pose.root_translation
    return local


def joint_world_matrices(skeleton: Skeleton, pose: Pose) -> np.ndarray:
    local = _local_matrices(skeleton, pose)
    world = np.empty_like(local)
    world[0] = local[0]
    for i, joint in enumerate(skeleton.joints):
        if i == 0:
            continue
        world[i] = world[joint.parent] @ local[i]
    return world


def _inverse_bind_matrices(skeleton: Skeleton) -> np.ndarray:
    """Analytic inverses of the bind-pose world transforms."""
    n = skeleton.n_joints
    inv_local = np.zeros((n, 4, 4))
    inv_local[:, 3, 3] = 1.0
    for i, joint in enumerate(skeleton.joints):
        r = quat_to_matrix(joint.rest_rotation)
        inv_local[i, :3, :3] = r.T
        inv_local[i, :3, 3] = -(r.T @ joint.rest_offset)
    inv = np.empty_like(inv_local)
    inv[0] = inv_local[0]
    for i, joint in enumerate(skeleton.joints):
        if i == 0:
            continue
        inv[i] = inv_local[i] @ inv[joint.parent]
    return inv


def skinning_matrices(skeleton: Skeleton, pose: Pose) -> np.ndarray:
    """Per-joint matrices mapping rest-pose points to posed points."""
    return joint_world_matrices(skeleton, pose) @ _inverse_bind_matrices(skeleton)


def _blended_matrices(weights: SkinWeights, mats: np.ndarray) -> np.ndarray:
    return np.einsum("nk,nkab->nab", weights.weights, mats[weights.joints])


def skin(mesh: Mesh, weights: SkinWeights, skeleton: Skeleton, pose: Pose) -> Mesh:
    """Pose a rest-pose mesh; topology, UVs unchanged, normals dropped."""
    if weights.n_vertices != mesh.n_vertices:
        raise DataError(
            f"skin weights cover {weights.n_vertices} vertices, mesh has {mesh.n_vertices}"
        )
    blend = _blended_matrices(weights, skinning_matrices(skeleton, pose))
    v = np.einsum("nab,nb->na", blend[:, :3, :3], mesh.vertices) + blend[:, :3, 3]
    return mesh.with_vertices(v)


def unskin(mesh: Mesh, weights: SkinWeights, skeleton: Skeleton, pose: Pose) -> Mesh:
    """Exact pose normalization: invert each vertex's blended transform."""
    if weights.n_vertices != mesh.n_vertices:
        raise DataError(
            f"skin weights cover {weights.n_vertices} vertices, mesh has {mesh.n_vertices}"
        )
    blend = _blended_matrices(weights, skinning_matrices(skeleton, pose))
    lin = blend[:, :3, :3]
    dets = np.linalg.det(lin)
    bad = np.abs(dets) < 1e-12
    if bad.any():
        raise SingularTransformError(np.flatnonzero(bad))
    rhs = mesh.vertices - blend[:, :3, 3]
    v = np.linalg.solve(lin, rhs[..., None])[..., 0]
    return mesh.with_vertices(v)


# --- serialization -----------------------------------------------------------

POSE_DOC_FORMAT = "clothkit-pose-sequence@1"
WEIGHTS_FORMAT = "clothkit-skin-weights@1"


def save_pose_sequence(path, skeleton: Skeleton, poses, frame_rate: float) -> None:
    doc = {
        "format": POSE_DOC_FORMAT,
        "frame_rate": float(frame_rate),
        "skeleton": {
            "joints": [
                {
                    "name": j.name,
                    "parent": int(j.parent),
                    "rest_rotation": [float(x) for x in j.rest_rotation],
                    "rest_offset": [float(x) for x in j.rest_offset],
                }
                for j in skeleton.joints
            ]
        },
        "frames": [
            {
                "rotations": [[float(x) for x in q] for q in p.rotations],
                "root_translation": [float(x) for x in p.root_translation],
                "bone_scales": None
                if p.bone_scales is None
                else [float(x) for x in p.bone_scales],
            }
            for p in poses
        ],
    }
    write_json(path, doc)


def load_pose_sequence(path):
    doc = read_json(path)
    if doc.get("format") != POSE_DOC_FORMAT:
        raise ConfigError(f"{path}: not a pose sequence document")
    joints = [
        Joint(j["name"], int(j["parent"]), j["rest_rotation"], j["rest_offset"])
        for j in doc["skeleton"]["joints"]
    ]
    skeleton = Skeleton(tuple(joints))
    poses = [
        Pose(
            np.asarray(f["rotations"], dtype=np.float64),
            np.asarray(f["root_translation"], dtype=np.float64),
            None if f.get("bone_scales") is None else np.asarray(f["bone_scales"]),
        )
        for f in doc["frames"]
    ]
    return skeleton, poses, float(doc["frame_rate"])


def save_skin_weights(path, weights: SkinWeights) -> None:
    write_json(
        path,
        {
            "format": WEIGHTS_FORMAT,
            "joints": weights.joints.tolist(),
            "weights": weights.weights.tolist(),
        },
    )


def load_skin_weights(path) -> SkinWeights:
    doc = read_json(path)
    if doc.get("format") != WEIGHTS_FORMAT:
        raise ConfigError(f"{path}: not a skin weights document")
    return SkinWeights(np.asarray(doc["joints"]), np.asarray(doc["weights"]))
