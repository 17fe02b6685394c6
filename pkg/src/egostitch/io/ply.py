"""ASCII PLY point clouds.

Coordinates are declared as doubles and printed with shortest round-trip
positional notation, so save -> load is bit-faithful for float64 points.
An optional uchar property carries the source chunk id.
"""

from __future__ import annotations

import numpy as np

from ..errors import FormatError
from ..geometry import PointCloud


def _fmt(value: float) -> str:
    return np.format_float_positional(value, unique=True, trim="-")


def save_pointcloud(cloud: PointCloud, path) -> None:
    with_ids = cloud.chunk_ids is not None
    if with_ids and len(cloud) and (cloud.chunk_ids.min() < 0 or cloud.chunk_ids.max() > 255):
        raise FormatError("chunk ids outside uchar range; drop them before saving")
    with open(path, "w", encoding="ascii") as f:
        f.write("ply\n")
        f.write("format ascii 1.0\n")
        f.write(f"element vertex {len(cloud)}\n")
        f.write("property double x\n")
        f.write("property double y\n")
        f.write("property double z\n")
        if with_ids:
            f.write("property uchar chunk\n")
        f.write("end_header\n")
        for i in range(len(cloud)):
            x, y, z = cloud.points[i]
            line = f"{_fmt(x)} {_fmt(y)} {_fmt(z)}"
            if with_ids:
                line += f" {int(cloud.chunk_ids[i])}"
            f.write(line + "\n")


def load_pointcloud(path) -> PointCloud:
    with open(path, "r", encoding="ascii") as f:
        if f.readline().strip() != "ply":
            raise FormatError(f"{path}: missing 'ply' magic")
        if f.readline().strip() != "format ascii 1.0":
            raise FormatError(f"{path}: only 'format ascii 1.0' is supported")
        count = None
        properties: list[str] = []
        while True:
            line = f.readline()
            if line == "":
                raise FormatError(f"{path}: header ended without end_header")
            line = line.strip()
            if line.startswith("comment"):
                continue
            if line.startswith("element"):
                parts = line.split()
                if parts[1] != "vertex":
                    raise FormatError(f"{path}: unsupported element {parts[1]!r}")
                count = int(parts[2])
            elif line.startswith("property"):
                properties.append(line.split()[-1])
            elif line == "end_header":
                break
        if count is None:
            raise FormatError(f"{path}: no vertex element declared")
        if properties[:3] != ["x", "y", "z"]:
            raise FormatError(f"{path}: vertex properties must start with x y z, got {properties}")
        has_chunk = "chunk" in properties[3:]
        points = np.empty((count, 3))
        ids = np.empty(count, dtype=np.int32) if has_chunk else None
        for i in range(count):
            parts = f.readline().split()
            if len(parts) != len(properties):
                raise FormatError(f"{path}: vertex {i} has {len(parts)} fields, expected {len(properties)}")
            points[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
            if has_chunk:
                ids[i] = int(parts[properties.index("chunk")])
    return PointCloud(points, ids)
