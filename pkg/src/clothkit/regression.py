"""Pose-to-shape prediction with a linear model.

Control vectors concatenate, in this fixed order:

    [quaternion (w,x,y,z) per selected joint]
    [root translation velocity, 3 entries, units m/frame]
    [root translation acceleration, 3 entries]
    [previous shape coefficients, h * k entries, newest first (optional)]
    [1]  (bias)

Velocities use central differences (forward/backward at the ends);
accelerations use the central second difference (one-sided copies at the
ends). The regressor stores per-entry normalization statistics; the bias
entry is never standardized. fit_linear itself is plain least squares via
the Moore-Penrose inverse so planted linear models are recovered exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .io_utils import read_array_container, write_array_container

REGRESSOR_FORMAT = "clothkit-regressor@1"
PINV_CUTOFF = 1e-10


@dataclass(frozen=True)
class ControlLayout:
    joint_indices: tuple
    history_length: int = 0
    coeff_count: int = 0  # k, only used when history_length > 0

    def __post_init__(self):
        if len(self.joint_indices) == 0:
            raise ConfigError("joint mask must select at least one joint")
        if self.history_length > 0 and self.coeff_count <= 0:
            raise ConfigError("history entries need the coefficient count")

    @property
    def dim(self) -> int:
        return 4 * len(self.joint_indices) + 6 + self.history_length * self.coeff_count + 1

    @property
    def bias_index(self) -> int:
        return self.dim - 1


def _finite_differences(x: np.ndarray):
    """(velocity, acceleration) of a (n, d) series, 1/frame units."""
    n = len(x)
    vel = np.empty_like(x)
    acc = np.empty_like(x)
    if n == 1:
        vel[:] = 0.0
        acc[:] = 0.0
        return vel, acc
    vel[0] = x[1] - x[0]
    vel[-1] = x[-1] - x[-2]
    if n > 2:
        vel[1:-1] = (x[2:] - x[:-2]) / 2.0
        acc[1:-1] = x[2:] - 2.0 * x[1:-1] + x[:-2]
        acc[0] = x[2] - 2.0 * x[1] + x[0]
        acc[-1] = x[-1] - 2.0 * x[-2] + x[-3]
    else:
        acc[:] = 0.0
    return vel, acc


def build_control_sequence(poses, layout: ControlLayout, coefficients=None):
    """Control matrix (dim, n_frames_out) and the frame ids it covers.

    With history h > 0, `coefficients` (k, n) must be given and the first h
    frames are dropped (no history available for them).
    """
    n = len(poses)
    h = layout.history_length
    if n < h + 2:
        raise DataError(f"need at least {h + 2} frames, got {n}")
    if h > 0 and coefficients is None:
        raise DataError("history entries request coefficients per frame")
    roots = np.stack([p.root_translation for p in poses])
    vel, acc = _finite_differences(roots)
    frame_ids = np.arange(h, n, dtype=np.int64)
    cols = []
    for t in frame_ids:
        parts = [poses[t].rotations[list(layout.joint_indices)].reshape(-1), vel[t], acc[t]]
        for back in range(1, h + 1):
            parts.append(np.asarray(coefficients)[:, t - back])
        parts.append([1.0])
        cols.append(np.concatenate(parts))
    theta = np.stack(cols, axis=1)
    if theta.shape[0] != layout.dim:
        raise DataError("control vector layout mismatch")
    if not np.all(np.isfinite(theta)):
        raise DataError("non-finite control vector entries")
    return theta, frame_ids


def standardization_stats(theta: np.ndarray, layout: ControlLayout):
    """Per-entry (mean, scale); bias row stays (0, 1), tiny scales clamp to 1."""
    mean = theta.mean(axis=1)
    scale = theta.std(axis=1)
    scale = np.where(scale < 1e-12, 1.0, scale)
    mean[layout.bias_index] = 0.0
    scale[layout.bias_index] = 1.0
    return mean, scale


def apply_standardization(theta, mean, scale):
    return (theta - np.asarray(mean)[:, None]) / np.asarray(scale)[:, None]


@dataclass(frozen=True)
class LinearShapeRegressor:
    matrix: np.ndarray  # (k, dim)
    layout: ControlLayout
    norm_mean: np.ndarray = None
    norm_scale: np.ndarray = None

    def __post_init__(self):
        d = self.matrix.shape[1]
        if self.norm_mean is None:
            object.__setattr__(self, "norm_mean", np.zeros(d))
        if self.norm_scale is None:
            object.__setattr__(self, "norm_scale", np.ones(d))
        if not np.all(np.isfinite(self.matrix)):
            raise DataError("regressor matrix has non-finite entries")

    @property
    def k(self) -> int:
        return self.matrix.shape[0]


def fit_linear(theta: np.ndarray, lam: np.ndarray, layout: ControlLayout,
               norm_mean=None, norm_scale=None) -> LinearShapeRegressor:
    """Least-squares F = lam @ pinv(theta); columns are frames.

    theta must already be standardized if standardization is wanted; the
    stats are only recorded so predict() can reproduce the transform.
    """
    theta = np.asarray(theta, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    if theta.ndim != 2 or lam.ndim != 2 or theta.shape[1] != lam.shape[1]:
        raise DataError("theta and lambda must be matrices with matching frame counts")
    if theta.shape[1] < 1:
        raise DataError("need at least one training frame")
    if not theta.any():
        raise DataError("degenerate all-zero control matrix")
    f = lam @ np.linalg.pinv(theta, rcond=PINV_CUTOFF)
    return LinearShapeRegressor(f, layout, norm_mean=norm_mean, norm_scale=norm_scale)


def fit_pose_regressor(poses, coefficients, layout: ControlLayout) -> LinearShapeRegressor:
    """build + standardize + fit, the trainer used by the CLI."""
    theta, frame_ids = build_control_sequence(poses, layout, coefficients)
    lam = np.asarray(coefficients, dtype=np.float64)[:, frame_ids]
    mean, scale = standardization_stats(theta, layout)
    theta_std = apply_standardization(theta, mean, scale)
    return fit_linear(theta_std, lam, layout, norm_mean=mean, norm_scale=scale)


def predict(regressor: LinearShapeRegressor, control) -> np.ndarray:
    """Shape coefficients for one raw control vector (or a (dim, n) batch)."""
    theta = np.asarray(control, dtype=np.float64)
    single = theta.ndim == 1
    if single:
        theta = theta[:, None]
    if theta.shape[0] != regressor.matrix.shape[1]:
        raise DataError(
            f"control dimension {theta.shape[0]} != regressor dimension "
            f"{regressor.matrix.shape[1]}"
        )
    out = regressor.matrix @ apply_standardization(theta, regressor.norm_mean, regressor.norm_scale)
    return out[:, 0] if single else out


def evaluate_mse(regressor: LinearShapeRegressor, theta, lam) -> float:
    """Mean over frames and coefficient dimensions of the squared error."""
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape[1] == 0:
        raise DataError("empty evaluation set")
    pred = predict(regressor, theta)
    return float(((pred - lam) ** 2).mean())


def vertex_rms(regressor: LinearShapeRegressor, theta, lam, vertex_count: int) -> float:
    """RMS per-vertex position error implied by coefficient errors.

    Valid because the subspace basis has orthonormal columns: the vertex
    position error norm equals the coefficient error norm.
    """
    pred = predict(regressor, theta)
    per_frame = np.linalg.norm(pred - np.asarray(lam), axis=0) / np.sqrt(vertex_count)
    return float(np.sqrt((per_frame**2).mean()))


def save_regressor(reg: LinearShapeRegressor, path) -> None:
    header = {
        "format": REGRESSOR_FORMAT,
        "joint_indices": list(reg.layout.joint_indices),
        "history_length": reg.layout.history_length,
        "coeff_count": reg.layout.coeff_count,
    }
    write_array_container(
        path,
        header,
        {"matrix": reg.matrix, "norm_mean": reg.norm_mean, "norm_scale": reg.norm_scale},
    )


def load_regressor(path) -> LinearShapeRegressor:
    header, arrays = read_array_container(path)
    if header.get("format") != REGRESSOR_FORMAT:
        raise DataError(f"{path}: not a regressor file")
    layout = ControlLayout(
        tuple(header["joint_indices"]),
        int(header["history_length"]),
        int(header["coeff_count"]),
    )
    return LinearShapeRegressor(
        arrays["matrix"], layout, norm_mean=arrays["norm_mean"], norm_scale=arrays["norm_scale"]
    )
