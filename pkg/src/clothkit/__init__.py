"""clothkit: clothing deformation capture and reconstruction pipeline.

Stages: synthetic 4D sequence generation, non-rigid template registration,
blend-shape subspace fitting, pose-to-shape regression, normal-map baking
and temporally aware evaluation metrics.
"""

__version__ = "0.1.0"

from .geometry import BACKEND as kernel_backend  # noqa: F401
