"""Point cloud file formats: ASCII PLY (x, y, z properties) and CSV.

Parsers raise ValueError with a line number on malformed input so the CLI can
exit nonzero with a useful diagnostic.
"""

from __future__ import annotations

import os

import numpy as np

from .clouds import as_points


def write_ply(points, path) -> None:
    """Write an ASCII PLY with float x/y/z properties."""
    pts = as_points(points)
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {pts.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        "end_header",
    ]
    body = ["%.9g %.9g %.9g" % (x, y, z) for x, y, z in pts]
    with open(path, "w") as fh:
        fh.write("\n".join(lines + body) + "\n")


def read_ply(path) -> np.ndarray:
    """Read an ASCII PLY containing at least x, y, z vertex properties."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw or raw[0].strip() != "ply":
        raise ValueError(f"{path}:1: not a PLY file (missing 'ply' magic)")
    n_vertex = None
    props: list[str] = []
    header_end = None
    in_vertex_element = False
    for i, line in enumerate(raw[1:], start=2):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise ValueError(f"{path}:{i}: only ascii PLY is supported, got {tok[1]!r}")
        elif tok[0] == "element":
            in_vertex_element = tok[1] == "vertex"
            if in_vertex_element:
                try:
                    n_vertex = int(tok[2])
                except (IndexError, ValueError):
                    raise ValueError(f"{path}:{i}: malformed element line {line!r}") from None
        elif tok[0] == "property" and in_vertex_element:
            props.append(tok[-1])
        elif tok[0] == "end_header":
            header_end = i
            break
    if header_end is None or n_vertex is None:
        raise ValueError(f"{path}:1: PLY header missing end_header or vertex element")
    try:
        cols = [props.index(c) for c in ("x", "y", "z")]
    except ValueError:
        raise ValueError(f"{path}:{header_end}: vertex element lacks x/y/z properties (has {props})") from None
    body = raw[header_end:header_end + n_vertex]
    if len(body) < n_vertex:
        raise ValueError(f"{path}:{len(raw)}: expected {n_vertex} vertex lines, found {len(body)}")
    out = np.empty((n_vertex, 3), dtype=np.float64)
    for j, line in enumerate(body):
        tok = line.split()
        try:
            out[j] = [float(tok[c]) for c in cols]
        except (IndexError, ValueError):
            raise ValueError(f"{path}:{header_end + 1 + j}: malformed vertex line {line!r}") from None
    if out.size and not np.isfinite(out).all():
        raise ValueError(f"{path}: vertex data contains non-finite values")
    return out


def write_csv(points, path) -> None:
    """Write one 'x,y,z' line per point."""
    pts = as_points(points)
    with open(path, "w") as fh:
        for x, y, z in pts:
            fh.write("%.9g,%.9g,%.9g\n" % (x, y, z))


def read_csv(path) -> np.ndarray:
    """Read 'x,y,z' lines; blank lines and an optional 'x,y,z' header are skipped."""
    rows = []
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            s = line.strip()
            if not s:
                continue
            if i == 1 and s.lower().replace(" ", "") == "x,y,z":
                continue
            parts = s.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{i}: expected 3 comma-separated values, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ValueError(f"{path}:{i}: malformed number in {s!r}") from None
    out = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    if out.size and not np.isfinite(out).all():
        raise ValueError(f"{path}: data contains non-finite values")
    return out


def read_cloud_file(path) -> np.ndarray:
    """Dispatch on extension: .ply -> PLY, anything else -> CSV."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".ply":
        return read_ply(path)
    return read_csv(path)
