"""Minimal binary little-endian PLY reader/writer for labelled points and meshes."""

from __future__ import annotations

import numpy as np

_TYPES = {
    "float": "<f4", "double": "<f8", "uchar": "u1", "ushort": "<u2", "uint": "<u4",
    "int": "<i4", "short": "<i2", "char": "i1",
}
_NAMES = {np.dtype(v): k for k, v in _TYPES.items()}


class PlyError(ValueError):
    pass


def write_ply(path, vertex: dict[str, np.ndarray], faces: np.ndarray | None = None) -> None:
    """`vertex` maps property name -> 1D array (all the same length); dtypes pick the PLY types."""
    names = list(vertex)
    n = len(vertex[names[0]]) if names else 0
    dtype = np.dtype([(k, np.asarray(vertex[k]).dtype.newbyteorder("<")) for k in names])
    rows = np.empty(n, dtype=dtype)
    for k in names:
        rows[k] = vertex[k]
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {n}"]
    for k in names:
        header.append(f"property {_NAMES[np.dtype(dtype[k].str)]} {k}")
    if faces is not None:
        faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        header += [f"element face {len(faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(rows.tobytes())
        if faces is not None:
            packed = np.empty(len(faces), dtype=[("n", "u1"), ("v", "<i4", (3,))])
            packed["n"] = 3
            packed["v"] = faces
            fh.write(packed.tobytes())


def read_ply(path) -> tuple[dict[str, np.ndarray], np.ndarray | None]:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise PlyError(f"{path}: not a PLY file")
    lines = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in lines:
        raise PlyError(f"{path}: only binary little-endian PLY is supported")
    elements, current = [], None
    for line in lines:
        parts = line.split()
        if parts[0] == "element":
            current = [parts[1], int(parts[2]), []]
            elements.append(current)
        elif parts[0] == "property":
            if parts[1] == "list":
                current[2].append(("list", parts[2], parts[3], parts[4]))
            else:
                current[2].append((parts[2], _TYPES[parts[1]]))
    offset = end + len(b"end_header\n")
    vertex, faces = {}, None
    for name, count, props in elements:
        if name == "vertex":
            dtype = np.dtype(props)
            rows = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
            offset += dtype.itemsize * count
            vertex = {k: rows[k].copy() for k in dtype.names}
        elif name == "face":
            _, ctype, itype, _ = props[0]
            dtype = np.dtype([("n", _TYPES[ctype]), ("v", _TYPES[itype], (3,))])
            rows = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
            if count and np.any(rows["n"] != 3):
                raise PlyError(f"{path}: only triangle faces are supported")
            offset += dtype.itemsize * count
            faces = rows["v"].astype(np.int64)
        else:
            raise PlyError(f"{path}: unexpected element {name!r}")
    return vertex, faces
