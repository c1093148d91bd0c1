"""Deterministic file I/O helpers: atomic writes, JSON documents, array containers.

The array container is the on-disk format for learned models: a single JSON
header line followed by flat little-endian arrays (float64 / int64), in the
order listed in the header.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError

CONTAINER_MAGIC = "clothkit-arrays@1"


def atomic_write_bytes(path, data: bytes) -> None:
    """Write bytes to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def json_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1)


def write_json(path, obj) -> None:
    atomic_write_text(path, json_dumps(obj) + "\n")


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _canonical_array(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        return np.ascontiguousarray(arr, dtype="<f8")
    if arr.dtype.kind in "iu":
        return np.ascontiguousarray(arr, dtype="<i8")
    if arr.dtype.kind == "b":
        return np.ascontiguousarray(arr.astype("<i8"))
    raise DataError(f"unsupported array dtype {arr.dtype}")


def write_array_container(path, header: dict, arrays: dict) -> None:
    """Serialize named arrays with a JSON header line in front."""
    blobs = []
    entries = []
    for name, arr in arrays.items():
        canon = _canonical_array(arr)
        blobs.append(canon.tobytes())
        entries.append(
            {"name": name, "dtype": str(canon.dtype), "shape": list(canon.shape)}
        )
    full_header = dict(header)
    full_header["container"] = CONTAINER_MAGIC
    full_header["arrays"] = entries
    head = json.dumps(full_header, sort_keys=True).encode("utf-8") + b"\n"
    atomic_write_bytes(path, head + b"".join(blobs))


def read_array_container(path):
    """Inverse of write_array_container -> (header, {name: array})."""
    with open(path, "rb") as fh:
        head_line = fh.readline()
        try:
            header = json.loads(head_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(f"{path}: not an array container ({exc})") from exc
        if header.get("container") != CONTAINER_MAGIC:
            raise DataError(f"{path}: bad container magic")
        arrays = {}
        for entry in header["arrays"]:
            shape = tuple(entry["shape"])
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * dtype.itemsize)
            if len(raw) != count * dtype.itemsize:
                raise DataError(f"{path}: truncated array {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    return header, arrays


def topology_hash(faces: np.ndarray, uvs=None) -> str:
    """Stable hash of mesh connectivity (+ UV layout when present)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(faces, dtype="<i8").tobytes())
    if uvs is not None:
        h.update(np.ascontiguousarray(uvs, dtype="<f8").tobytes())
    return h.hexdigest()


def format_table(columns, rows) -> str:
    """Plain-text aligned table; every report gets a JSON twin next to it."""
    cells = [[str(c) for c in columns]]
    for row in rows:
        cells.append([_fmt_cell(v) for v in row])
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = []
    for i, row in enumerate(cells):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt_cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.9g}"
    return str(v)


def write_report(path, columns, rows, summary=None) -> None:
    """Write `<path>` as text table and `<path>.json` as machine twin."""
    path = Path(path)
    text = format_table(columns, rows)
    if summary:
        text += "\n" + "\n".join(f"{k}: {_fmt_cell(v)}" for k, v in sorted(summary.items())) + "\n"
    atomic_write_text(path, text)
    twin = {
        "columns": list(columns),
        "rows": [list(r) for r in rows],
        "summary": dict(summary or {}),
    }
    write_json(path.with_suffix(path.suffix + ".json"), twin)
