"""Normal map raster: unit normals per texel plus a no-data mask.

Encoding is RGB = round(255 * (n + 1) / 2) in 8-bit PNG; no-data texels are
painted gray (128,128,128), which collides with an encoded near-zero
normal, so a 1-bit mask PNG is always written alongside (`<name>.mask.png`)
and is authoritative. In-memory rows are bottom-up in UV space (row 0 is
v~0); PNG rows are flipped to the usual top-down orientation on save/load.

On save, one ring of texels around each island is flood-filled with the
average neighbor color to hide bilinear seam artifacts; those texels stay
no-data in the mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import DataError
from ..io_utils import atomic_write_bytes

GLOBAL_FRAME = "global"
TANGENT_FRAME = "tangent"

_UNIT_TOL = 1e-3


@dataclass(frozen=True)
class NormalMap:
    data: np.ndarray  # (h, w, 3) float64, unit rows where defined, 0 elsewhere
    defined: np.ndarray  # (h, w) bool
    frame: str = GLOBAL_FRAME

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=np.float64)
        m = np.ascontiguousarray(self.defined, dtype=bool)
        if d.ndim != 3 or d.shape[2] != 3 or m.shape != d.shape[:2]:
            raise DataError("normal map shape mismatch")
        if self.frame not in (GLOBAL_FRAME, TANGENT_FRAME):
            raise DataError(f"unknown frame tag '{self.frame}'")
        d = d.copy()
        d[~m] = 0.0
        norms = np.linalg.norm(d[m], axis=-1)
        if norms.size and np.any(np.abs(norms - 1.0) > _UNIT_TOL):
            raise DataError("defined texels must hold unit normals")
        d.setflags(write=False)
        m.setflags(write=False)
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "defined", m)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


def from_vectors(vectors, defined, frame=GLOBAL_FRAME) -> NormalMap:
    """Build a map from raw vectors, renormalizing; zero vectors go undefined."""
    v = np.asarray(vectors, dtype=np.float64)
    m = np.asarray(defined, dtype=bool).copy()
    lens = np.linalg.norm(v, axis=-1)
    m &= lens > 1e-12
    out = np.zeros_like(v)
    out[m] = v[m] / lens[m, None]
    return NormalMap(out, m, frame)


def encode_rgb(nm: NormalMap) -> np.ndarray:
    rgb = np.full((nm.height, nm.width, 3), 128, dtype=np.uint8)
    vals = np.round(255.0 * (nm.data[nm.defined] + 1.0) / 2.0)
    rgb[nm.defined] = np.clip(vals, 0, 255).astype(np.uint8)
    return rgb


def decode_rgb(rgb: np.ndarray, defined: np.ndarray, frame=GLOBAL_FRAME) -> NormalMap:
    vec = np.asarray(rgb, dtype=np.float64) / 255.0 * 2.0 - 1.0
    return from_vectors(vec, defined, frame)


def _dilate_ring(rgb: np.ndarray, defined: np.ndarray) -> np.ndarray:
    """Bleed one texel ring of averaged neighbor colors into undefined texels."""
    h, w, _ = rgb.shape
    acc = np.zeros((h, w, 3), dtype=np.float64)
    cnt = np.zeros((h, w), dtype=np.int64)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            ys = slice(max(dy, 0), h + min(dy, 0))
            xs = slice(max(dx, 0), w + min(dx, 0))
            yd = slice(max(-dy, 0), h + min(-dy, 0))
            xd = slice(max(-dx, 0), w + min(-dx, 0))
            src_def = defined[ys, xs]
            acc[yd, xd][src_def] += rgb[ys, xs][src_def]
            cnt[yd, xd] += src_def
    ring = (~defined) & (cnt > 0)
    out = rgb.copy()
    out[ring] = np.round(acc[ring] / cnt[ring, None]).astype(np.uint8)
    return out


def mask_path_for(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".mask.png")


def _png_bytes(img: Image.Image) -> bytes:
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def save_normal_map(nm: NormalMap, path, dilate: bool = True) -> None:
    rgb = encode_rgb(nm)
    if dilate:
        rgb = _dilate_ring(rgb, nm.defined)
    img = Image.fromarray(np.flipud(rgb), mode="RGB")
    atomic_write_bytes(path, _png_bytes(img))
    mask = Image.fromarray(np.flipud(nm.defined)).convert("1")
    atomic_write_bytes(mask_path_for(path), _png_bytes(mask))


def load_normal_map(path, frame=GLOBAL_FRAME) -> NormalMap:
    path = Path(path)
    rgb = np.flipud(np.asarray(Image.open(path).convert("RGB"))).copy()
    mp = mask_path_for(path)
    if not mp.exists():
        raise DataError(f"missing mask file {mp}")
    defined = np.flipud(np.asarray(Image.open(mp).convert("L")) > 127).copy()
    if defined.shape != rgb.shape[:2]:
        raise DataError(f"{mp}: mask size differs from image")
    return decode_rgb(rgb, defined, frame)
