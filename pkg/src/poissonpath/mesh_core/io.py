"""OBJ and STL readers."""

from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..errors import ParseError
from .mesh import TriMesh

logger = logging.getLogger(__name__)

WELD_TOLERANCE = 1e-6  # mm


def load_mesh(path, format=None) -> TriMesh:
    """Read an OBJ or STL file into a fully indexed :class:`TriMesh`.

    ``format`` is inferred from the suffix when omitted. STL soups are welded
    with a 1e-6 mm tolerance. Unreferenced OBJ vertices are dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise ParseError(f"no such mesh file: {path}")
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "obj":
        vertices, faces = read_obj(path)
    elif fmt == "stl":
        vertices, faces = read_stl(path)
    else:
        raise ParseError(f"unsupported mesh format {fmt!r}")
    vertices, faces = _compact(vertices, faces)
    return TriMesh(vertices, faces)


def read_obj(path):
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            try:
                if tag == "v":
                    if len(rest) < 3:
                        raise ValueError("vertex needs three coordinates")
                    vertices.append([float(x) for x in rest[:3]])
                elif tag == "f":
                    if len(rest) < 3:
                        raise ValueError("face needs at least three indices")
                    idx = []
                    for tok in rest:
                        i = int(tok.split("/", 1)[0])
                        idx.append(i - 1 if i > 0 else len(vertices) + i)
                    # fan-triangulate polygons
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    if not faces:
        raise ParseError(f"{path}: no faces")
    v = np.asarray(vertices, dtype=float).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64)
    if f.min() < 0 or f.max() >= len(v):
        raise ParseError(f"{path}: face index out of range")
    return v, f


def read_stl(path):
    data = Path(path).read_bytes()
    if len(data) >= 84:
        (count,) = struct.unpack_from("<I", data, 80)
        if 84 + 50 * count == len(data):
            return _weld(_binary_stl_triangles(data, count))
    head = data[:512].lstrip().lower()
    if head.startswith(b"solid") and b"facet" in data[:4096].lower():
        return _weld(_ascii_stl_triangles(data))
    raise ParseError(f"{path}: not a valid binary or ASCII STL file")


def _binary_stl_triangles(data, count):
    if count == 0:
        raise ParseError("STL file contains no triangles")
    rec = np.dtype([("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    arr = np.frombuffer(data, dtype=rec, count=count, offset=84)
    return arr["v"].astype(float)


def _ascii_stl_triangles(data):
    pts = []
    for raw in data.decode("ascii", errors="replace").splitlines():
        parts = raw.split()
        if parts and parts[0] == "vertex":
            try:
                pts.append([float(x) for x in parts[1:4]])
            except ValueError:
                raise ParseError(f"bad STL vertex line: {raw!r}") from None
    if not pts or len(pts) % 3:
        raise ParseError("ASCII STL vertex count is not a multiple of three")
    return np.asarray(pts).reshape(-1, 3, 3)


def _weld(tris, tol=WELD_TOLERANCE):
    pts = tris.reshape(-1, 3)
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    n = len(pts)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # representative = first point of each cluster, in input order
    uniq, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(len(uniq), dtype=np.int64)
    remap[uniq[order]] = np.arange(len(uniq))
    vertices = pts[np.sort(first)]
    faces = remap[labels].reshape(-1, 3)
    logger.debug("welded %d STL corners into %d vertices", n, len(vertices))
    return vertices, faces


def _compact(vertices, faces):
    used = np.unique(faces.ravel())
    if len(used) == len(vertices):
        return vertices, faces
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    logger.info("dropping %d unreferenced vertices", len(vertices) - len(used))
    return vertices[used], remap[faces]


def write_obj(path, mesh: TriMesh):
    with open(path, "w", encoding="utf-8") as fh:
        for p in mesh.vertices:
            fh.write(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        for f in mesh.faces + 1:
            fh.write(f"f {f[0]} {f[1]} {f[2]}\n")


def write_stl(path, mesh: TriMesh):
    """Binary STL writer (used by tests and for round-trips)."""
    tri = mesh.vertices[mesh.faces].astype("<f4")
    rec = np.zeros(mesh.n_faces, dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    rec["n"] = mesh.face_normals
    rec["v"] = tri
    with open(path, "wb") as fh:
        fh.write(b"poissonpath".ljust(80, b" "))
        fh.write(struct.pack("<I", mesh.n_faces))
        fh.write(rec.tobytes())
