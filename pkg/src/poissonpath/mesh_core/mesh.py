"""Indexed triangle mesh with the derived geometry every other module needs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from ..errors import TopologyError

MIN_FACE_AREA = 1e-12  # mm^2


def _normalize_rows(a):
    n = np.linalg.norm(a, axis=-1, keepdims=True)
    return a / np.where(n > 0, n, 1.0)


@dataclass(frozen=True)
class SurfacePoint:
    """A location on the mesh given by a face and barycentric coordinates."""

    face: int
    bary: tuple

    def __post_init__(self):
        b = np.asarray(self.bary, dtype=float)
        if b.shape != (3,) or np.any(b < -1e-9) or abs(b.sum() - 1.0) > 1e-9:
            raise ValueError(f"invalid barycentric coordinates {self.bary}")

    def position(self, mesh: "TriMesh") -> np.ndarray:
        return mesh.point(self.face, self.bary)


class TriMesh:
    """Edge-manifold triangle mesh, in millimetres.

    All derived arrays are computed once in the constructor; treat instances
    as read-only afterwards.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
    faces : array_like of int, shape (m, 3)

    Attributes
    ----------
    face_areas, face_normals : per-face area and unit normal (right-hand rule).
    frames : (m, 2, 3) orthonormal tangent frame per face, ``e1`` along the
        first edge and ``e2 = n x e1``.
    vertex_normals : area-weighted unit vertex normals.
    voronoi_area : mixed Voronoi area per vertex; sums to the total area.
    edges : (E, 2) sorted vertex pairs; ``edge_faces`` holds the one or two
        incident faces (``-1`` pads boundary edges).
    face_edges, face_neighbors : (m, 3) edge index / neighbouring face
        opposite each corner (``-1`` on the boundary).
    """

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(vertices, dtype=float)
        f = np.ascontiguousarray(faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise TopologyError("vertices must have shape (n, 3)")
        if f.ndim != 2 or f.shape[1] != 3 or len(f) == 0:
            raise TopologyError("faces must have shape (m, 3) with m >= 1")
        if f.min() < 0 or f.max() >= len(v):
            raise TopologyError("face references a vertex index out of range")
        bad = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        if bad.any():
            raise TopologyError(f"face {int(np.flatnonzero(bad)[0])} reuses a vertex")
        used = np.zeros(len(v), dtype=bool)
        used[f.ravel()] = True
        if not used.all():
            raise TopologyError(f"{int((~used).sum())} vertices are not referenced by any face")

        v.setflags(write=False)
        f.setflags(write=False)
        self.vertices = v
        self.faces = f
        self._build_geometry()
        self._build_topology()
        self._build_areas()

    # -- construction ----------------------------------------------------
    def _build_geometry(self):
        v, f = self.vertices, self.faces
        p0, p1, p2 = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
        cr = np.cross(p1 - p0, p2 - p0)
        dbl = np.linalg.norm(cr, axis=1)
        self.face_areas = 0.5 * dbl
        small = self.face_areas < MIN_FACE_AREA
        if small.any():
            raise TopologyError(
                f"degenerate face {int(np.flatnonzero(small)[0])} with area "
                f"{self.face_areas[small][0]:.3e} mm^2"
            )
        self.face_normals = cr / dbl[:, None]
        e1 = _normalize_rows(p1 - p0)
        e2 = np.cross(self.face_normals, e1)
        self.frames = np.stack([e1, e2], axis=1)

        # corner angles: angle k sits at vertex f[:, k]
        corners = np.stack([p0, p1, p2], axis=1)
        a = corners[:, [1, 2, 0]] - corners
        b = corners[:, [2, 0, 1]] - corners
        cosang = np.einsum("ijk,ijk->ij", a, b)
        sinang = np.linalg.norm(np.cross(a, b), axis=2)
        self.angles = np.arctan2(sinang, cosang)
        self.edge_sq = np.einsum("ijk,ijk->ij", b - a, b - a)  # opposite corner k

        vn = np.zeros_like(v)
        for k in range(3):
            np.add.at(vn, f[:, k], cr)  # |cr| = 2 * area, so this is area-weighted
        self.vertex_normals = _normalize_rows(vn)

    def _build_topology(self):
        f = self.faces
        m = len(f)
        # half-edge opposite corner k runs f[k+1] -> f[k+2]
        a = f[:, [1, 2, 0]].ravel()
        b = f[:, [2, 0, 1]].ravel()
        key = np.stack([np.minimum(a, b), np.maximum(a, b)], axis=1)
        edges, inverse, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if (counts > 2).any():
            e = edges[np.flatnonzero(counts > 2)[0]]
            raise TopologyError(f"non-manifold edge ({e[0]}, {e[1]}) shared by more than two faces")
        self.edges = edges
        self.face_edges = inverse.reshape(m, 3)

        face_id = np.repeat(np.arange(m), 3)
        order = np.argsort(inverse, kind="stable")
        se = inverse[order]
        first = np.r_[True, se[1:] != se[:-1]]
        edge_faces = -np.ones((len(edges), 2), dtype=np.int64)
        edge_faces[se[first], 0] = face_id[order[first]]
        edge_faces[se[~first], 1] = face_id[order[~first]]
        self.edge_faces = edge_faces

        ef = edge_faces[self.face_edges]  # (m, 3, 2)
        own = np.arange(m)[:, None]
        self.face_neighbors = np.where(ef[:, :, 0] == own, ef[:, :, 1], ef[:, :, 0])
        self.boundary_edges = edge_faces[:, 1] < 0
        self.boundary_vertices = np.zeros(len(self.vertices), dtype=bool)
        self.boundary_vertices[edges[self.boundary_edges].ravel()] = True

        n = len(self.vertices)
        rows = f.ravel()
        cols = np.repeat(np.arange(m), 3)
        vf = sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, m))
        vf.sort_indices()
        self._vf_indptr = vf.indptr
        self._vf_indices = vf.indices

    def _build_areas(self):
        f = self.faces
        area = self.face_areas
        ang = self.angles
        with np.errstate(divide="ignore", invalid="ignore"):
            cot = np.cos(ang) / np.sin(ang)
        obtuse = ang > np.pi / 2
        any_obtuse = obtuse.any(axis=1)
        A = np.zeros(len(self.vertices))
        for k in range(3):
            j, l = (k + 1) % 3, (k + 2) % 3
            # Voronoi part at corner k: edges k-j (opposite l) and k-l (opposite j)
            vor = (self.edge_sq[:, l] * cot[:, l] + self.edge_sq[:, j] * cot[:, j]) / 8.0
            contrib = np.where(
                any_obtuse, np.where(obtuse[:, k], area / 2.0, area / 4.0), vor
            )
            np.add.at(A, f[:, k], contrib)
        self.voronoi_area = A

    # -- queries ---------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    @property
    def face_centroids(self) -> np.ndarray:
        return self.vertices[self.faces].mean(axis=1)

    @property
    def interior_edges(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_edges)

    def vertex_faces(self, i: int) -> np.ndarray:
        return self._vf_indices[self._vf_indptr[i]:self._vf_indptr[i + 1]]

    def point(self, face: int, bary) -> np.ndarray:
        return np.asarray(bary, dtype=float) @ self.vertices[self.faces[face]]

    def shared_edge(self, f: int, g: int):
        """Return the vertex pair shared by faces ``f`` and ``g`` or None."""
        k = np.flatnonzero(self.face_neighbors[f] == g)
        if len(k) == 0:
            return None
        e = self.face_edges[f, k[0]]
        return tuple(int(x) for x in self.edges[e])

    def face_adjacency(self) -> sparse.csr_matrix:
        """Symmetric 0/1 face adjacency across interior edges."""
        ie = self.edge_faces[~self.boundary_edges]
        m = self.n_faces
        data = np.ones(2 * len(ie))
        A = sparse.csr_matrix(
            (data, (np.r_[ie[:, 0], ie[:, 1]], np.r_[ie[:, 1], ie[:, 0]])), shape=(m, m)
        )
        return A

    def face_components(self):
        """Label edge-connected face components; returns ``(count, labels)``."""
        return csgraph.connected_components(self.face_adjacency(), directed=False)

    def vertex_components(self):
        n = self.n_vertices
        e = self.edges
        A = sparse.csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
        return csgraph.connected_components(A, directed=False)

    def angle_defects(self) -> np.ndarray:
        """``2*pi - sum of corner angles`` per vertex (``pi - ...`` on the boundary)."""
        s = np.zeros(self.n_vertices)
        np.add.at(s, self.faces.ravel(), self.angles.ravel())
        full = np.where(self.boundary_vertices, np.pi, 2 * np.pi)
        return full - s

    def submesh(self, face_ids):
        """Extract the faces ``face_ids`` as a new mesh.

        Returns ``(mesh, vertex_map)`` where ``vertex_map[i]`` is the parent
        index of sub-vertex ``i``. Faces keep their order and vertex order, so
        barycentric coordinates carry over unchanged.
        """
        face_ids = np.asarray(face_ids, dtype=np.int64)
        sub_faces = self.faces[face_ids]
        vmap, inv = np.unique(sub_faces.ravel(), return_inverse=True)
        return TriMesh(self.vertices[vmap], inv.reshape(-1, 3)), vmap

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0)) -> "TriMesh":
        R = np.asarray(rotation, dtype=float)
        return TriMesh(self.vertices @ R.T + np.asarray(translation, dtype=float), self.faces)

    def __repr__(self):
        return (
            f"TriMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces}, "
            f"boundary_edges={int(self.boundary_edges.sum())})"
        )
