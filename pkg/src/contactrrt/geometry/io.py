"""STL / OBJ readers and writers."""
from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .mesh import MeshParseError, TriangleMesh

FORMATS = ("stl-binary", "stl-ascii", "obj")

_STL_RECORD = np.dtype([("normal", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])


def detect_format(path: str | os.PathLike) -> str:
    path = Path(path)
    if path.suffix.lower() == ".obj":
        return "obj"
    with open(path, "rb") as fh:
        head = fh.read(84)
    if len(head) >= 84:
        (count,) = struct.unpack("<I", head[80:84])
        if 84 + 50 * count == path.stat().st_size:
            return "stl-binary"
    if head.lstrip().lower().startswith(b"solid"):
        return "stl-ascii"
    raise MeshParseError(f"cannot determine mesh format of {path}")


def read_triangles(path, fmt: str | None = None):
    """Parse a mesh file into raw (vertices, faces) arrays without cleaning."""
    fmt = fmt or detect_format(path)
    if fmt == "stl-binary":
        return _read_stl_binary(path)
    if fmt == "stl-ascii":
        return _read_stl_ascii(path)
    if fmt == "obj":
        return _read_obj(path)
    raise ValueError(f"unknown mesh format {fmt!r}; expected one of {FORMATS}")


def load_mesh(path, fmt: str | None = None, *, scale: float = 1.0, **options) -> TriangleMesh:
    """Read and clean a surface mesh (units: mm after ``scale``).

    Duplicate vertices are welded, zero-area and repeated faces dropped,
    normals re-oriented into the lumen and edge adjacency built. The repair
    counts are available as ``mesh.repairs``.
    """
    if not Path(path).is_file():
        raise FileNotFoundError(f"mesh file not found: {path}")
    vertices, faces = read_triangles(path, fmt)
    return TriangleMesh.from_arrays(vertices, faces, scale=scale, **options)


def _read_stl_binary(path):
    data = Path(path).read_bytes()
    if len(data) < 84:
        raise MeshParseError(f"{path}: truncated binary STL header")
    (count,) = struct.unpack("<I", data[80:84])
    if len(data) < 84 + 50 * count:
        raise MeshParseError(f"{path}: expected {count} facets, file is truncated")
    rec = np.frombuffer(data, dtype=_STL_RECORD, count=count, offset=84)
    tri = rec["v"].astype(float).reshape(-1, 3)
    return tri, np.arange(len(tri)).reshape(-1, 3)


def _read_stl_ascii(path):
    points = []
    in_loop = 0
    with open(path, "r", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            word = tok[0].lower()
            if word == "vertex":
                if len(tok) != 4:
                    raise MeshParseError(f"{path}:{lineno}: malformed vertex record")
                try:
                    points.append([float(x) for x in tok[1:]])
                except ValueError as exc:
                    raise MeshParseError(f"{path}:{lineno}: {exc}") from None
                in_loop += 1
            elif word == "outer":
                in_loop = 0
            elif word == "endloop" and in_loop != 3:
                raise MeshParseError(f"{path}:{lineno}: facet loop with {in_loop} vertices")
    if not points:
        raise MeshParseError(f"{path}: no facets found")
    if len(points) % 3:
        raise MeshParseError(f"{path}: vertex count not a multiple of 3")
    tri = np.asarray(points, dtype=float)
    return tri, np.arange(len(tri)).reshape(-1, 3)


def _read_obj(path):
    verts = []
    faces = []
    with open(path, "r", errors="replace") as fh:
        for lineno, line in enumerate(fh, 1):
            tok = line.split()
            if not tok:
                continue
            try:
                if tok[0] == "v":
                    verts.append([float(x) for x in tok[1:4]])
                elif tok[0] == "f":
                    idx = []
                    for item in tok[1:]:
                        i = int(item.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    if len(idx) < 3:
                        raise MeshParseError(f"{path}:{lineno}: face with fewer than 3 vertices")
                    # fan triangulation of polygons
                    faces.extend([idx[0], idx[j], idx[j + 1]] for j in range(1, len(idx) - 1))
            except (ValueError, IndexError) as exc:
                raise MeshParseError(f"{path}:{lineno}: {exc}") from None
    if not faces:
        raise MeshParseError(f"{path}: no faces found")
    vertices = np.asarray(verts, dtype=float)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise MeshParseError(f"{path}: vertex records need three coordinates")
    faces = np.asarray(faces, dtype=np.int64)
    if faces.min() < 0 or faces.max() >= len(vertices):
        raise MeshParseError(f"{path}: face index out of range")
    return vertices, faces


def save_stl(path, vertices, faces, binary: bool = True) -> None:
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces)
    tri = vertices[faces]
    n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(n, axis=1)
    n = np.divide(n, norm[:, None], out=np.zeros_like(n), where=norm[:, None] > 0)
    if binary:
        rec = np.zeros(len(faces), dtype=_STL_RECORD)
        rec["normal"] = n
        rec["v"] = tri
        with open(path, "wb") as fh:
            fh.write(b"contactrrt".ljust(80, b" "))
            fh.write(struct.pack("<I", len(faces)))
            fh.write(rec.tobytes())
        return
    lines = ["solid mesh"]
    for nn, t in zip(n, tri):
        lines.append(f"  facet normal {nn[0]:.9g} {nn[1]:.9g} {nn[2]:.9g}")
        lines.append("    outer loop")
        lines.extend(f"      vertex {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in t)
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append("endsolid mesh")
    Path(path).write_text("\n".join(lines) + "\n")


def save_obj(path, vertices, faces) -> None:
    lines = [f"v {p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in np.asarray(vertices, dtype=float)]
    lines.extend(f"f {a + 1} {b + 1} {c + 1}" for a, b, c in np.asarray(faces))
    Path(path).write_text("\n".join(lines) + "\n")
