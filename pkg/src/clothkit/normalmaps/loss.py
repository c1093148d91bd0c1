"""Data and temporal discrepancy metrics between normal maps.

For generated frame G_t, target T_t and previous target T_{t-1}, all in
decoded normal space ([-1, 1] per channel):

    L_data = sum over pixels defined in both G_t and T_t of |G_t - T_t|
             (all three channels), divided by the defined pixel count
    L_temp = sum over channels c of | sum_pixels (G_t - T_{t-1})_c |

L_temp is the absolute value of the *sum*, not a sum of absolute values:
gains and losses at distant pixels cancel, which is the intended
"something appearing here should disappear nearby" behavior. Pixels
undefined in either map contribute zero to the temporal sum. The report
also carries the joint-sum variant (single absolute value over all
channels) for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .image import NormalMap


@dataclass(frozen=True)
class TemporalLossReport:
    l_data: float
    l_temp: float
    l_temp_joint: float
    defined_pixels: int
    per_channel_sums: tuple


def temporal_loss(
    generated: NormalMap, target: NormalMap, previous_target: NormalMap
) -> TemporalLossReport:
    if not (
        generated.data.shape == target.data.shape == previous_target.data.shape
    ):
        raise DataError("normal map dimensions differ")
    both = generated.defined & target.defined
    count = int(both.sum())
    if count > 0:
        l_data = float(np.abs(generated.data[both] - target.data[both]).sum() / count)
    else:
        l_data = 0.0
    temporal_mask = generated.defined & previous_target.defined
    diff = np.where(
        temporal_mask[..., None], generated.data - previous_target.data, 0.0
    )
    channel_sums = diff.reshape(-1, 3).sum(axis=0)
    l_temp = float(np.abs(channel_sums).sum())
    l_temp_joint = float(abs(channel_sums.sum()))
    return TemporalLossReport(
        l_data=l_data,
        l_temp=l_temp,
        l_temp_joint=l_temp_joint,
        defined_pixels=count,
        per_channel_sums=tuple(float(s) for s in channel_sums),
    )


def sequence_temporal_loss(generated_seq, target_seq):
    """Per-transition reports for aligned sequences (frames 1..n-1)."""
    if len(generated_seq) != len(target_seq):
        raise DataError("sequence lengths differ")
    if len(generated_seq) < 2:
        raise DataError("need at least two frames for temporal evaluation")
    reports = []
    for t in range(1, len(generated_seq)):
        reports.append(temporal_loss(generated_seq[t], target_seq[t], target_seq[t - 1]))
    return reports
