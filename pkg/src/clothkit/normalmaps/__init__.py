from .bake import DEFAULT_HR_CUTOFF, DEFAULT_RESOLUTION, bake_hr, bake_lr, rasterize_atlas
from .image import (
    GLOBAL_FRAME,
    TANGENT_FRAME,
    NormalMap,
    decode_rgb,
    encode_rgb,
    from_vectors,
    load_normal_map,
    mask_path_for,
    save_normal_map,
)
from .loss import TemporalLossReport, sequence_temporal_loss, temporal_loss
from .tangent import texel_frames, to_global, to_tangent

__all__ = [
    "DEFAULT_HR_CUTOFF",
    "DEFAULT_RESOLUTION",
    "GLOBAL_FRAME",
    "NormalMap",
    "TANGENT_FRAME",
    "TemporalLossReport",
    "bake_hr",
    "bake_lr",
    "decode_rgb",
    "encode_rgb",
    "from_vectors",
    "load_normal_map",
    "mask_path_for",
    "rasterize_atlas",
    "save_normal_map",
    "sequence_temporal_loss",
    "temporal_loss",
    "texel_frames",
    "to_global",
    "to_tangent",
]
