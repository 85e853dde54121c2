"""ASCII PLY import/export for point clouds.

Layout: x, y, z as 64-bit floats, optional nx, ny, nz, optional uchar mask.
Only the subset needed for cloud exchange is supported; faces are ignored.
"""

from __future__ import annotations

import os

import numpy as np

from .geometry import PointCloud


def write_ply(cloud: PointCloud, path: str | os.PathLike) -> None:
    n = len(cloud)
    header = ["ply", "format ascii 1.0", f"element vertex {n}"]
    header += [f"property double {axis}" for axis in ("x", "y", "z")]
    columns = [cloud.points]
    if cloud.normals is not None:
        header += [f"property double {axis}" for axis in ("nx", "ny", "nz")]
        columns.append(cloud.normals)
    if cloud.mask is not None:
        header.append("property uchar mask")
        columns.append(cloud.mask.astype(np.float64)[:, None])
    header.append("end_header")
    data = np.hstack(columns)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(header) + "\n")
        for row in data:
            fields = [repr(float(v)) for v in row[: 3 + (3 if cloud.normals is not None else 0)]]
            if cloud.mask is not None:
                fields.append(str(int(row[-1])))
            fh.write(" ".join(fields) + "\n")


def read_ply(path: str | os.PathLike) -> PointCloud:
    with open(path, "r", encoding="ascii") as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise ValueError(f"{path}: not a PLY file")
        n = None
        props: list[str] = []
        while True:
            line = fh.readline()
            if not line:
                raise ValueError(f"{path}: truncated header")
            line = line.strip()
            if line == "end_header":
                break
            parts = line.split()
            if parts[0] == "format" and parts[1] != "ascii":
                raise ValueError(f"{path}: only ascii PLY is supported")
            if parts[0] == "element":
                if parts[1] == "vertex":
                    n = int(parts[2])
                elif n is not None:
                    raise ValueError(f"{path}: unsupported element {parts[1]!r}")
            if parts[0] == "property" and n is not None:
                props.append(parts[2])
        if n is None:
            raise ValueError(f"{path}: no vertex element")
        for axis in ("x", "y", "z"):
            if axis not in props:
                raise ValueError(f"{path}: missing property {axis!r}")
        rows = np.loadtxt(fh, dtype=np.float64, max_rows=n, ndmin=2)
    if rows.shape != (n, len(props)):
        raise ValueError(f"{path}: expected {n} rows of {len(props)} values")
    col = {name: i for i, name in enumerate(props)}
    points = rows[:, [col["x"], col["y"], col["z"]]]
    normals = None
    if all(a in col for a in ("nx", "ny", "nz")):
        normals = rows[:, [col["nx"], col["ny"], col["nz"]]]
    mask = rows[:, col["mask"]].astype(bool) if "mask" in col else None
    return PointCloud(points, normals, mask)
