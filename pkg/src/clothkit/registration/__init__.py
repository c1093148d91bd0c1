from .boundary import BoundarySets, match_boundary
from .energy import (
    BoundaryPairs,
    Correspondences,
    EnergyTerms,
    energy_gradient,
    evaluate_energy,
)
from .graph import DeformationGraph, RegistrationConfig, build_graph, single_node_graph
from .solver import (
    RegistrationResult,
    compute_correspondences,
    graph_from_skinning,
    register,
)

__all__ = [
    "BoundaryPairs",
    "BoundarySets",
    "Correspondences",
    "DeformationGraph",
    "EnergyTerms",
    "RegistrationConfig",
    "RegistrationResult",
    "build_graph",
    "compute_correspondences",
    "energy_gradient",
    "evaluate_energy",
    "graph_from_skinning",
    "match_boundary",
    "register",
    "single_node_graph",
]
