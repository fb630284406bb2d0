"""Minimal PLY point reader/writer (vertex element only).

Supports ascii, binary_little_endian and binary_big_endian files with float
x/y/z, optional uchar red/green/blue and an optional int32 "label" property.
That subset covers every cloud file this package produces or ingests.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .errors import FormatError

_PROP_DTYPES = {
    "float": "f4",
    "float32": "f4",
    "double": "f8",
    "float64": "f8",
    "uchar": "u1",
    "uint8": "u1",
    "char": "i1",
    "int8": "i1",
    "short": "i2",
    "int16": "i2",
    "ushort": "u2",
    "uint16": "u2",
    "int": "i4",
    "int32": "i4",
    "uint": "u4",
    "uint32": "u4",
}


def _repr_f32(x: np.float32) -> str:
    # repr of the exact double value round-trips to the same float32
    return repr(float(x))


def write_ply(
    path: str | Path,
    positions: np.ndarray,
    colors: np.ndarray | None = None,
    labels: np.ndarray | None = None,
    binary: bool = True,
) -> None:
    """Write points (float32), optional uint8 colors and int32 labels."""
    pos = np.ascontiguousarray(positions, dtype=np.float32).reshape(-1, 3)
    n = len(pos)
    header = ["ply"]
    header.append("format binary_little_endian 1.0" if binary else "format ascii 1.0")
    header.append(f"element vertex {n}")
    header += ["property float x", "property float y", "property float z"]
    if colors is not None:
        colors = np.ascontiguousarray(colors, dtype=np.uint8).reshape(-1, 3)
        header += ["property uchar red", "property uchar green", "property uchar blue"]
    if labels is not None:
        labels = np.ascontiguousarray(labels, dtype=np.int32).reshape(-1)
        header.append("property int label")
    header.append("end_header")

    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
            if colors is not None:
                fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
            if labels is not None:
                fields.append(("label", "<i4"))
            rec = np.empty(n, dtype=np.dtype(fields))
            rec["x"], rec["y"], rec["z"] = pos[:, 0], pos[:, 1], pos[:, 2]
            if colors is not None:
                rec["red"], rec["green"], rec["blue"] = colors[:, 0], colors[:, 1], colors[:, 2]
            if labels is not None:
                rec["label"] = labels
            fh.write(rec.tobytes())
        else:
            out = io.StringIO()
            for i in range(n):
                parts = [_repr_f32(pos[i, 0]), _repr_f32(pos[i, 1]), _repr_f32(pos[i, 2])]
                if colors is not None:
                    parts += [str(int(c)) for c in colors[i]]
                if labels is not None:
                    parts.append(str(int(labels[i])))
                out.write(" ".join(parts) + "\n")
            fh.write(out.getvalue().encode("ascii"))


def read_ply(path: str | Path) -> dict[str, np.ndarray]:
    """Read a PLY point file.

    Returns:
        dict with "positions" (N,3) float32, and optionally "colors" (N,3)
        uint8 and "labels" (N,) int32 when the file carries them.

    Raises:
        FormatError: not a PLY file or an unsupported layout.
    """
    raw = Path(path).read_bytes()
    eol = raw.find(b"end_header")
    if not raw.startswith(b"ply") or eol < 0:
        raise FormatError(f"{path}: not a PLY file")
    body_start = raw.find(b"\n", eol) + 1
    header = raw[:eol].decode("ascii", errors="replace").splitlines()

    fmt = None
    n = None
    props: list[tuple[str, str]] = []
    in_vertex = False
    for line in header[1:]:
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            fmt = tok[1]
        elif tok[0] == "element":
            in_vertex = tok[1] == "vertex"
            if in_vertex:
                n = int(tok[2])
        elif tok[0] == "property" and in_vertex:
            if tok[1] == "list":
                raise FormatError(f"{path}: list properties are not supported")
            if tok[1] not in _PROP_DTYPES:
                raise FormatError(f"{path}: unsupported property type {tok[1]!r}")
            props.append((tok[2], _PROP_DTYPES[tok[1]]))
    if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
        raise FormatError(f"{path}: unsupported format {fmt!r}")
    if n is None:
        raise FormatError(f"{path}: no vertex element")
    names = [p[0] for p in props]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise FormatError(f"{path}: missing property {axis!r}")

    if fmt == "ascii":
        text = raw[body_start:].decode("ascii")
        table = np.loadtxt(io.StringIO(text), dtype=np.float64, ndmin=2)
        if table.shape != (n, len(props)):
            raise FormatError(f"{path}: expected {n}x{len(props)} values, got {table.shape}")
        cols = {name: table[:, i] for i, (name, _) in enumerate(props)}
        get = lambda name, dt: cols[name].astype(dt)
    else:
        order = "<" if fmt == "binary_little_endian" else ">"
        dtype = np.dtype([(name, order + dt) if dt != "u1" else (name, dt) for name, dt in props])
        body = raw[body_start : body_start + n * dtype.itemsize]
        if len(body) != n * dtype.itemsize:
            raise FormatError(f"{path}: truncated body ({len(body)} bytes, need {n * dtype.itemsize})")
        rec = np.frombuffer(body, dtype=dtype)
        get = lambda name, dt: rec[name].astype(dt)

    out: dict[str, np.ndarray] = {
        "positions": np.stack([get("x", np.float32), get("y", np.float32), get("z", np.float32)], axis=1)
    }
    if all(c in names for c in ("red", "green", "blue")):
        out["colors"] = np.stack([get("red", np.uint8), get("green", np.uint8), get("blue", np.uint8)], axis=1)
    if "label" in names:
        out["labels"] = get("label", np.int32)
    return out
