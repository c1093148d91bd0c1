"""Synthetic 4D sleeve sequences with full ground truth.

Stands in for a capture system: an articulated 3-joint arm wearing a
cylindrical sleeve. Per frame it emits a high-resolution scan (optionally
noisy, with punched holes), the pose, and scan boundary markers; once per
sequence it emits the clothing template (with UV atlas), skin weights, and
template boundary indices. Everything is a deterministic function of the
config seed.

Ground truth is available at every stage: the template-resolution clothing
mesh per frame (known registration), the analytic wrinkle amplitude as a
function of elbow angle (known pose-to-shape map), and analytic normals of
the displaced surface.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry.mesh import Mesh
from .io_utils import write_json
from .geometry.objio import save_obj, save_point_cloud
from .skinning import (
    Joint,
    Pose,
    Skeleton,
    SkinWeights,
    quat_about_axis,
    save_pose_sequence,
    save_skin_weights,
    skin,
)

MANIFEST_FORMAT = "clothkit-manifest@1"


@dataclass
class SynthConfig:
    frames: int = 100
    frame_rate: float = 60.0
    template_vertices: int = 2000
    scan_multiplier: int = 4  # >= 4, scan vertex count vs template
    ridge_count: int = 4
    wrinkle_amplitude: float = 0.01  # meters
    angular_gain: float = 1.0  # sharpness of the elbow-angle gating
    ripple_amplitude: float = 0.0015  # fine detail only on the scan
    ripple_wavelength: float = 0.008
    noise_amplitude: float = 0.0
    hole_probability: float = 0.0  # per candidate region per frame
    seed: int = 0
    upper_arm_length: float = 0.3
    forearm_length: float = 0.3
    sleeve_radius: float = 0.055
    sleeve_start: float = 0.05
    sleeve_end: float = 0.55
    elbow_max_angle: float = np.pi / 2
    swing_cycles: float = 3.0

    def __post_init__(self):
        if self.frames < 1:
            raise ConfigError("frames must be >= 1")
        if self.scan_multiplier < 4:
            raise ConfigError("scan resolution multiplier must be >= 4")
        if min(self.wrinkle_amplitude, self.ripple_amplitude, self.noise_amplitude) < 0:
            raise ConfigError("amplitudes must be nonnegative")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        return cls(**d)


def cylinder_sleeve(
    rings: int, segments: int, x_start: float, x_end: float, radius: float, uv_margin: float = 0.02
) -> Mesh:
    """Open cylinder along +x with a seam-duplicated strip UV atlas.

    Vertices are shared around the circumference; the UV seam is realized
    through per-corner coordinates, so the atlas is bijective.
    """
    xs = np.linspace(x_start, x_end, rings)
    phis = np.linspace(0.0, 2.0 * np.pi, segments, endpoint=False)
    gx, gphi = np.meshgrid(xs, phis, indexing="ij")
    verts = np.stack(
        [gx, radius * np.cos(gphi), radius * np.sin(gphi)], axis=-1
    ).reshape(-1, 3)

    def vid(i, j):
        return i * segments + (j % segments)

    faces = []
    corner_u = []  # per corner: (ring fraction, angle fraction possibly 1.0)
    for i in range(rings - 1):
        for j in range(segments):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces.append([a, b, c])
            corner_u.append([(i, j), (i + 1, j), (i + 1, j + 1)])
            faces.append([a, c, d])
            corner_u.append([(i, j), (i + 1, j + 1), (i, j + 1)])
    faces = np.asarray(faces, dtype=np.int64)
    lo = uv_margin
    hi = 1.0 - uv_margin
    uvs = np.empty((len(faces), 3, 2))
    for fi, corners in enumerate(corner_u):
        for ci, (ri, ji) in enumerate(corners):
            uvs[fi, ci, 0] = lo + (hi - lo) * (ji / segments)  # angle -> u, seam at j=segments
            uvs[fi, ci, 1] = lo + (hi - lo) * (ri / (rings - 1))
    return Mesh(verts, faces, uvs=uvs)


def sleeve_resolution(target_vertices: int, length: float, radius: float):
    """(rings, segments) with roughly isotropic edge lengths."""
    circumference = 2.0 * np.pi * radius
    segments = max(8, int(round(np.sqrt(target_vertices * circumference / length))))
    rings = max(4, int(round(target_vertices / segments)))
    return rings, segments


def make_arm_skeleton(upper: float, fore: float) -> Skeleton:
    return Skeleton(
        (
            Joint("shoulder", -1, np.array([1.0, 0, 0, 0]), np.zeros(3)),
            Joint("elbow", 0, np.array([1.0, 0, 0, 0]), np.array([upper, 0.0, 0.0])),
            Joint("wrist", 1, np.array([1.0, 0, 0, 0]), np.array([fore, 0.0, 0.0])),
        )
    )


def _smoothstep(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def nearest_bone_weights(vertices: np.ndarray, elbow_x: float, blend_half_width: float) -> SkinWeights:
    """Shoulder-bone vs forearm-bone weights with a smooth elbow blend."""
    x = np.asarray(vertices)[:, 0]
    w_fore = _smoothstep((x - (elbow_x - blend_half_width)) / (2.0 * blend_half_width))
    joints = np.zeros((len(x), 4), dtype=np.int64)
    joints[:, 1] = 1
    weights = np.zeros((len(x), 4))
    weights[:, 0] = 1.0 - w_fore
    weights[:, 1] = w_fore
    return SkinWeights(joints, weights)


@dataclass
class WrinkleField:
    """Analytic pose-gated radial displacement on the sleeve surface."""

    harmonics: np.ndarray  # (R,) integer angular frequencies
    phases: np.ndarray  # (R,)
    amplitudes: np.ndarray  # (R,) normalized, sum 1
    center_x: float
    sigma_x: float
    amplitude: float
    angular_gain: float
    ripple_amplitude: float = 0.0
    ripple_wavelength: float = 0.008
    ripple_harmonic: int = 8

    def gate(self, elbow_angle: float) -> float:
        s = np.sin(np.clip(elbow_angle, 0.0, np.pi / 2))
        return float(s ** (2.0 * self.angular_gain))

    def pattern(self, x, phi):
        envelope = np.exp(-((x - self.center_x) ** 2) / (2.0 * self.sigma_x**2))
        waves = sum(
            a * np.sin(m * phi + p)
            for a, m, p in zip(self.amplitudes, self.harmonics, self.phases)
        )
        return envelope * waves

    def displacement(self, x, phi, elbow_angle: float, with_ripple: bool):
        d = self.amplitude * self.gate(elbow_angle) * self.pattern(x, phi)
        if with_ripple and self.ripple_amplitude > 0:
            d = d + self.ripple_amplitude * np.sin(
                2.0 * np.pi * x / self.ripple_wavelength
            ) * np.cos(self.ripple_harmonic * phi)
        return d


def displace_sleeve(mesh: Mesh, radius: float, field: WrinkleField, elbow_angle, with_ripple):
    """Apply the radial displacement field to sleeve-topology vertices."""
    v = mesh.vertices
    phi = np.arctan2(v[:, 2], v[:, 1])
    d = field.displacement(v[:, 0], phi, elbow_angle, with_ripple)
    radial = np.stack([np.zeros_like(phi), np.cos(phi), np.sin(phi)], axis=1)
    return mesh.with_vertices(v + d[:, None] * radial)


@dataclass
class SynthResult:
    config: SynthConfig
    template: Mesh
    skeleton: Skeleton
    weights: SkinWeights
    poses: list
    scans: list  # high-resolution posed meshes
    boundary_template: np.ndarray  # template vertex indices (both end rings)
    boundary_scans: list  # per frame (S, 3) points
    gt_clothing: list  # template-resolution posed ground truth meshes
    wrinkles: WrinkleField = None
    scan_rings: int = 0
    scan_segments: int = 0
    template_rings: int = 0
    template_segments: int = 0
    elbow_angles: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _ring_indices(rings: int, segments: int):
    first = np.arange(segments, dtype=np.int64)
    last = np.arange((rings - 1) * segments, rings * segments, dtype=np.int64)
    return np.concatenate([first, last])


def _geodesic_ball(vertices, faces, center: int, radius: float):
    """Vertex indices within graph-geodesic radius of center (Dijkstra)."""
    n = len(vertices)
    adj = {}
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            d = float(np.linalg.norm(vertices[a] - vertices[b]))
            adj.setdefault(int(a), []).append((int(b), d))
            adj.setdefault(int(b), []).append((int(a), d))
    dist = {center: 0.0}
    heap = [(0.0, center)]
    hit = set()
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist.get(u, np.inf) or d > radius:
            continue
        hit.add(u)
        for v, w in adj.get(u, []):
            nd = d + w
            if nd <= radius and nd < dist.get(v, np.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    mask = np.zeros(n, dtype=bool)
    mask[list(hit)] = True
    return mask


def generate(config: SynthConfig) -> SynthResult:
    rng = np.random.default_rng(np.random.PCG64(config.seed))
    length = config.sleeve_end - config.sleeve_start
    t_rings, t_segs = sleeve_resolution(
        config.template_vertices, length, config.sleeve_radius
    )
    mult = int(np.ceil(np.sqrt(config.scan_multiplier)))
    s_rings, s_segs = t_rings * mult, t_segs * mult
    template = cylinder_sleeve(
        t_rings, t_segs, config.sleeve_start, config.sleeve_end, config.sleeve_radius
    )
    scan_base = cylinder_sleeve(
        s_rings, s_segs, config.sleeve_start, config.sleeve_end, config.sleeve_radius
    )
    skeleton = make_arm_skeleton(config.upper_arm_length, config.forearm_length)
    blend = 0.1 * length
    weights_t = nearest_bone_weights(template.vertices, config.upper_arm_length, blend)
    weights_s = nearest_bone_weights(scan_base.vertices, config.upper_arm_length, blend)

    harmonics = rng.integers(2, 6, size=config.ridge_count)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=config.ridge_count)
    amps = rng.uniform(0.5, 1.0, size=config.ridge_count)
    amps = amps / amps.sum()
    field_ = WrinkleField(
        harmonics=harmonics,
        phases=phases,
        amplitudes=amps,
        center_x=config.upper_arm_length,
        sigma_x=0.16 * length,
        amplitude=config.wrinkle_amplitude,
        angular_gain=config.angular_gain,
        ripple_amplitude=config.ripple_amplitude,
        ripple_wavelength=config.ripple_wavelength,
    )

    t = np.arange(config.frames, dtype=np.float64)
    phase = 2.0 * np.pi * config.swing_cycles * t / max(config.frames - 1, 1)
    elbow = config.elbow_max_angle * 0.5 * (1.0 - np.cos(phase))
    root_swing = 0.15 * np.sin(phase / 2.0)
    root_shift = np.stack(
        [0.02 * np.sin(phase / 3.0), 0.01 * np.cos(phase / 2.0), np.zeros_like(phase)], axis=1
    )

    poses = []
    scans = []
    boundary_scans = []
    gt_clothing = []
    hole_centers = rng.integers(0, scan_base.n_vertices, size=12)
    b_scan_idx = _ring_indices(s_rings, s_segs)
    for i in range(config.frames):
        rot = np.zeros((3, 4))
        rot[0] = quat_about_axis([0, 0, 1], root_swing[i])
        rot[1] = quat_about_axis([0, 0, 1], elbow[i])
        rot[2] = np.array([1.0, 0, 0, 0])
        pose = Pose(rot, root_shift[i])
        poses.append(pose)

        gt_rest = displace_sleeve(template, config.sleeve_radius, field_, elbow[i], False)
        gt_clothing.append(skin(gt_rest, weights_t, skeleton, pose))

        scan_rest = displace_sleeve(scan_base, config.sleeve_radius, field_, elbow[i], True)
        scan_posed = skin(scan_rest, weights_s, skeleton, pose)
        sv = scan_posed.vertices.copy()
        if config.noise_amplitude > 0:
            sv = sv + rng.normal(scale=config.noise_amplitude, size=sv.shape)
        faces = scan_posed.faces
        if config.hole_probability > 0:
            punched = np.zeros(scan_base.n_vertices, dtype=bool)
            for c in hole_centers:
                if rng.uniform() < config.hole_probability:
                    r = rng.uniform(0.015, 0.03)
                    punched |= _geodesic_ball(scan_base.vertices, scan_base.faces, int(c), r)
            # keep boundary rings intact so markers stay valid
            punched[b_scan_idx] = False
            keep = ~punched[faces].all(axis=1)
            faces = faces[keep]
        scan = Mesh(sv, faces, uvs=None)
        scans.append(scan)
        boundary_scans.append(sv[b_scan_idx].copy())

    return SynthResult(
        config=config,
        template=template,
        skeleton=skeleton,
        weights=weights_t,
        poses=poses,
        scans=scans,
        boundary_template=_ring_indices(t_rings, t_segs),
        boundary_scans=boundary_scans,
        gt_clothing=gt_clothing,
        wrinkles=field_,
        scan_rings=s_rings,
        scan_segments=s_segs,
        template_rings=t_rings,
        template_segments=t_segs,
        elbow_angles=elbow,
    )


def write_sequence(result: SynthResult, outdir) -> Path:
    """Write the sequence in the formats the pipeline consumes; returns manifest path."""
    out = Path(outdir)
    (out / "scans").mkdir(parents=True, exist_ok=True)
    (out / "boundaries").mkdir(exist_ok=True)
    (out / "gt").mkdir(exist_ok=True)
    save_obj(result.template, out / "template.obj")
    save_skin_weights(out / "weights.json", result.weights)
    save_pose_sequence(out / "poses.json", result.skeleton, result.poses, result.config.frame_rate)
    btxt = "\n".join(str(int(i)) for i in result.boundary_template) + "\n"
    (out / "boundary_template.txt").write_text(btxt)
    frames = []
    for i, (scan, bpts, gt) in enumerate(
        zip(result.scans, result.boundary_scans, result.gt_clothing)
    ):
        scan_p = f"scans/scan_{i:06d}.obj"
        bnd_p = f"boundaries/boundary_{i:06d}.obj"
        gt_p = f"gt/clothing_{i:06d}.obj"
        save_obj(scan, out / scan_p)
        save_point_cloud(bpts, out / bnd_p)
        save_obj(gt, out / gt_p)
        frames.append({"index": i, "scan": scan_p, "boundary_scan": bnd_p, "ground_truth": gt_p})
    manifest = {
        "format": MANIFEST_FORMAT,
        "frame_rate": result.config.frame_rate,
        "template": "template.obj",
        "weights": "weights.json",
        "poses": "poses.json",
        "boundary_template": "boundary_template.txt",
        "frames": frames,
    }
    write_json(out / "manifest.json", manifest)
    return out / "manifest.json"


def load_boundary_indices(path) -> np.ndarray:
    lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    return np.asarray([int(x) for x in lines], dtype=np.int64)
