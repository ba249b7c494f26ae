"""Point-cloud file I/O.

Two interchangeable formats:
  * text CSV: one "x,y,z" line per point (meters); lines starting with
    '#' are comments/headers and are ignored
  * binary: little-endian, magic "PC3D", u32 count, then count * 3 * f32

The binary form round-trips bit-exactly.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .geometry import PointCloud

BINARY_MAGIC = b"PC3D"


class CloudFormatError(ValueError):
    """Malformed point-cloud file."""


def save_cloud_csv(cloud: PointCloud, path) -> None:
    with open(path, "w") as f:
        f.write("# x,y,z\n")
        for x, y, z in cloud.points:
            f.write(f"{float(x)!r},{float(y)!r},{float(z)!r}\n")


def load_cloud_csv(path, frame: str = "C") -> PointCloud:
    rows = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise CloudFormatError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            rows.append([float(v) for v in parts])
    return PointCloud(np.array(rows, dtype=np.float64).reshape(-1, 3), frame)


def save_cloud_binary(cloud: PointCloud, path) -> None:
    data = cloud.points.astype("<f4")
    with open(path, "wb") as f:
        f.write(BINARY_MAGIC)
        f.write(struct.pack("<I", data.shape[0]))
        f.write(data.tobytes())


def load_cloud_binary(path, frame: str = "C") -> PointCloud:
    raw = Path(path).read_bytes()
    if len(raw) < 8 or raw[:4] != BINARY_MAGIC:
        raise CloudFormatError(f"{path}: missing {BINARY_MAGIC!r} magic")
    (count,) = struct.unpack_from("<I", raw, 4)
    expected = 8 + count * 12
    if len(raw) != expected:
        raise CloudFormatError(f"{path}: expected {expected} bytes for {count} points, got {len(raw)}")
    pts = np.frombuffer(raw, dtype="<f4", offset=8).reshape(count, 3)
    return PointCloud(pts.astype(np.float64), frame)
