"""Boundary correspondence selection.

Every scan boundary point is assigned to its nearest template boundary
point (lowest template index on ties). Each template point that received at
least one scan point is then paired with the *farthest* member of its
cell, which spreads matches along the boundary and reaches into fold tips
that plain nearest-neighbor pairing misses. Template points with an empty
cell stay unpaired.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from ..geometry.spatial import PointIndex


@dataclass(frozen=True)
class BoundarySets:
    template_indices: np.ndarray  # ordered vertex indices into the template
    scan_points: np.ndarray  # (S, 3)

    def __post_init__(self):
        object.__setattr__(
            self, "template_indices", np.asarray(self.template_indices, dtype=np.int64).reshape(-1)
        )
        object.__setattr__(
            self, "scan_points", np.asarray(self.scan_points, dtype=np.float64).reshape(-1, 3)
        )


def match_boundary(template_points, scan_points):
    """Pair template boundary points with far representatives of their cells.

    Returns (template_ids, scan_ids): parallel index arrays into the two
    input sets. Farthest-distance ties keep the lowest scan index.
    """
    t = np.asarray(template_points, dtype=np.float64).reshape(-1, 3)
    s = np.asarray(scan_points, dtype=np.float64).reshape(-1, 3)
    if len(t) == 0 or len(s) == 0:
        raise DataError("boundary sets must be non-empty")
    assigned, _ = PointIndex(t).nearest_many(s)
    diff = s - t[assigned]
    d2 = diff[:, 0] * diff[:, 0] + diff[:, 1] * diff[:, 1] + diff[:, 2] * diff[:, 2]
    s_idx = np.arange(len(s), dtype=np.int64)
    order = np.lexsort((s_idx, -d2, assigned))
    uniq_t, first = np.unique(assigned[order], return_index=True)
    winners = order[first]
    return uniq_t.astype(np.int64), s_idx[winners]
