"""Regular-grid deformation graph: nodes, trilinear bindings, neighbor pairs.

Each node k carries an affine transform (A_k, t_k); a bound vertex v moves to

    sum_k w_k [ A_k (v - g_k) + g_k + t_k ]

Nodes live on a regular lattice covering the template bounding box plus one
cell of margin; only lattice points referenced by some vertex binding are
kept. Neighbor pairs (both directions) connect retained nodes one lattice
step apart.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from ..io_utils import read_json


@dataclass
class RegistrationConfig:
    omega_rigid: float = 500.0
    omega_smooth: float = 500.0
    omega_boundary: float = 10.0
    max_iterations: int = 30
    correspondence_cutoff: float = 0.05  # meters
    normal_cutoff_degrees: float = 60.0
    convergence_tolerance: float = 1e-5
    point_to_plane: bool = True
    grid_spacing: float | None = None  # None -> bbox diagonal / 20
    damping_init: float = 0.1
    max_damping_retries: int = 12
    stall_patience: int = 3  # stop after this many refreshes without improvement

    def __post_init__(self):
        if min(self.omega_rigid, self.omega_smooth, self.omega_boundary) < 0:
            raise ConfigError("energy weights must be nonnegative")
        if self.correspondence_cutoff <= 0 or self.normal_cutoff_degrees <= 0:
            raise ConfigError("cutoffs must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RegistrationConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown registration config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "RegistrationConfig":
        return cls.from_dict(read_json(path))


@dataclass
class DeformationGraph:
    nodes: np.ndarray  # (K, 3) lattice positions
    spacing: float
    binding_nodes: np.ndarray  # (n, 8) int64
    binding_weights: np.ndarray  # (n, 8) float64, rows sum to 1
    neighbor_pairs: np.ndarray  # (P, 2) int64, ordered pairs
    affines: np.ndarray = field(default=None)  # (K, 3, 3)
    translations: np.ndarray = field(default=None)  # (K, 3)

    def __post_init__(self):
        k = len(self.nodes)
        if self.affines is None:
            self.affines = np.tile(np.eye(3), (k, 1, 1))
        if self.translations is None:
            self.translations = np.zeros((k, 3))
        s = self.binding_weights.sum(axis=1)
        if np.any(self.binding_weights < -1e-12) or np.any(np.abs(s - 1.0) > 1e-9):
            raise DataError("graph binding weights must be nonnegative and sum to 1")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_params(self) -> int:
        return 12 * self.n_nodes

    def params_vector(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([self.affines.reshape(-1, 9), self.translations], axis=1).reshape(-1)]
        )

    def set_params_vector(self, x: np.ndarray) -> None:
        blocks = np.asarray(x, dtype=np.float64).reshape(-1, 12)
        if len(blocks) != self.n_nodes:
            raise DataError("parameter vector length mismatch")
        self.affines = blocks[:, :9].reshape(-1, 3, 3).copy()
        self.translations = blocks[:, 9:].copy()

    def copy_transforms(self):
        return self.affines.copy(), self.translations.copy()

    def deform(self, vertices: np.ndarray) -> np.ndarray:
        v = np.asarray(vertices, dtype=np.float64)
        g = self.nodes[self.binding_nodes]  # (n, 8, 3)
        a = self.affines[self.binding_nodes]  # (n, 8, 3, 3)
        t = self.translations[self.binding_nodes]  # (n, 8, 3)
        local = np.einsum("nkab,nkb->nka", a, v[:, None, :] - g) + g + t
        return np.einsum("nk,nka->na", self.binding_weights, local)


def build_graph(vertices: np.ndarray, spacing: float | None = None) -> DeformationGraph:
    """Lattice graph over the vertex bounding box with trilinear bindings."""
    v = np.asarray(vertices, dtype=np.float64)
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    if spacing is None:
        diag = float(np.linalg.norm(hi - lo))
        if diag == 0.0:
            raise DataError("degenerate bounding box")
        spacing = diag / 20.0
    origin = lo - spacing
    cell = np.floor((v - origin) / spacing).astype(np.int64)  # (n, 3)
    corner_offsets = np.array(
        [[i, j, k] for i in (0, 1) for j in (0, 1) for k in (0, 1)], dtype=np.int64
    )
    corners = cell[:, None, :] + corner_offsets[None, :, :]  # (n, 8, 3)
    flat = corners.reshape(-1, 3)
    # deterministic node ordering: lexicographic lattice coordinates
    uniq, inverse = np.unique(flat, axis=0, return_inverse=True)
    binding_nodes = inverse.reshape(-1, 8).astype(np.int64)
    frac = (v - origin) / spacing - cell  # in [0, 1)
    wx = np.stack([1.0 - frac[:, 0], frac[:, 0]], axis=1)
    wy = np.stack([1.0 - frac[:, 1], frac[:, 1]], axis=1)
    wz = np.stack([1.0 - frac[:, 2], frac[:, 2]], axis=1)
    weights = (
        wx[:, corner_offsets[:, 0]] * wy[:, corner_offsets[:, 1]] * wz[:, corner_offsets[:, 2]]
    )
    nodes = origin + uniq.astype(np.float64) * spacing
    # ordered lattice-neighbor pairs among retained nodes
    key = {tuple(c): i for i, c in enumerate(uniq)}
    pairs = []
    for i, c in enumerate(uniq):
        for axis in range(3):
            for step in (-1, 1):
                nb = list(c)
                nb[axis] += step
                j = key.get(tuple(nb))
                if j is not None:
                    pairs.append((i, j))
    neighbor_pairs = np.asarray(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    return DeformationGraph(
        nodes=nodes,
        spacing=float(spacing),
        binding_nodes=binding_nodes,
        binding_weights=weights,
        neighbor_pairs=neighbor_pairs,
    )


def single_node_graph(vertices: np.ndarray) -> DeformationGraph:
    """One node at the centroid, every vertex fully bound (rigid/affine fit)."""
    v = np.asarray(vertices, dtype=np.float64)
    center = v.mean(axis=0, keepdims=True)
    n = len(v)
    binding_nodes = np.zeros((n, 8), dtype=np.int64)
    weights = np.zeros((n, 8))
    weights[:, 0] = 1.0
    return DeformationGraph(
        nodes=center,
        spacing=1.0,
        binding_nodes=binding_nodes,
        binding_weights=weights,
        neighbor_pairs=np.zeros((0, 2), dtype=np.int64),
    )
