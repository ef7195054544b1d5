"""Per-face shape operators and normal-curvature queries.

Sign convention: the shape operator maps a tangent displacement to the change
of the unit normal, ``dn = S dp``. With normals pointing toward the cutter a
convex region therefore has positive normal curvature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ..errors import DegenerateFrameError, InvalidParamError
from .mesh import TriMesh

TANGENT_TOL = 1e-6


@dataclass(frozen=True)
class CurvatureField:
    """Symmetric 2x2 shape operator per face, expressed in ``mesh.frames``."""

    tensors: np.ndarray  # (m, 2, 2), 1/mm
    frames: np.ndarray  # (m, 2, 3), copied from the mesh
    source: str  # "estimated" | "analytic"

    def __post_init__(self):
        t = np.array(self.tensors, dtype=float)
        fr = np.array(self.frames, dtype=float)
        if t.ndim != 3 or t.shape[1:] != (2, 2):
            raise InvalidParamError("curvature tensors must have shape (m, 2, 2)")
        if fr.shape != (len(t), 2, 3):
            raise InvalidParamError("frames must have shape (m, 2, 3)")
        if self.source not in ("estimated", "analytic"):
            raise InvalidParamError(f"unknown curvature source {self.source!r}")
        t = 0.5 * (t + t.transpose(0, 2, 1))
        t.setflags(write=False)
        fr.setflags(write=False)
        object.__setattr__(self, "tensors", t)
        object.__setattr__(self, "frames", fr)

    def __len__(self):
        return len(self.tensors)

    @property
    def normals(self) -> np.ndarray:
        return np.cross(self.frames[:, 0], self.frames[:, 1])

    def take(self, face_ids) -> "CurvatureField":
        idx = np.asarray(face_ids)
        return CurvatureField(self.tensors[idx], self.frames[idx], self.source)

    def principal(self):
        """Principal curvatures ``(k_min, k_max)`` and frame-coordinates of
        the maximum-curvature direction, per face."""
        w, vec = np.linalg.eigh(self.tensors)
        return w[:, 0], w[:, 1], vec[:, :, 1]

    def principal_directions(self):
        """3D unit vectors along the minimum and maximum curvature directions."""
        _, vec = np.linalg.eigh(self.tensors)
        dmin = np.einsum("mi,mij->mj", vec[:, :, 0], self.frames)
        dmax = np.einsum("mi,mij->mj", vec[:, :, 1], self.frames)
        return dmin, dmax

    def normal_curvatures(self, dirs, faces=None) -> np.ndarray:
        """Vectorised ``d^T S d``: one unit tangent per face (or per entry of
        ``faces``)."""
        idx = slice(None) if faces is None else np.asarray(faces)
        c = np.einsum("mij,mj->mi", self.frames[idx], np.asarray(dirs, dtype=float))
        return np.einsum("mi,mij,mj->m", c, self.tensors[idx], c)


def _check_frames(mesh: TriMesh):
    if not np.all(np.isfinite(mesh.frames)):
        bad = int(np.flatnonzero(~np.isfinite(mesh.frames).all(axis=(1, 2)))[0])
        raise DegenerateFrameError(f"face {bad} has no tangent frame")


def fitted_vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Vertex normals with boundary vertices re-estimated by a quadric fit.

    Area-weighted normals at boundary vertices only see one side of the
    surface and lean by O(h) on curved regions, which turns into an O(1)
    error in edge-difference curvature estimates. There a height field
    ``z = a u^2 + b uv + c v^2 + d u + e v`` over the two-ring is fitted in
    the frame of the area-weighted normal and its slope gives the normal.
    """
    N = mesh.vertex_normals.copy()
    bnd = np.flatnonzero(mesh.boundary_vertices)
    if len(bnd) == 0:
        return N
    E = mesh.edges
    n = mesh.n_vertices
    A = sparse.csr_matrix((np.ones(2 * len(E)), (np.r_[E[:, 0], E[:, 1]], np.r_[E[:, 1], E[:, 0]])), shape=(n, n))
    A2 = (A + A @ A).tocsr()
    V = mesh.vertices
    for i in bnd:
        nb = A2.indices[A2.indptr[i]:A2.indptr[i + 1]]
        nb = nb[nb != i]
        if len(nb) < 5:
            continue
        n0 = N[i]
        e1 = np.cross(n0, [1.0, 0.0, 0.0])
        if np.linalg.norm(e1) < 0.5:
            e1 = np.cross(n0, [0.0, 1.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n0, e1)
        d = V[nb] - V[i]
        u, v, z = d @ e1, d @ e2, d @ n0
        M = np.stack([u * u, u * v, v * v, u, v], axis=1)
        coef, *_ = np.linalg.lstsq(M, z, rcond=None)
        g = n0 - coef[3] * e1 - coef[4] * e2
        N[i] = g / np.linalg.norm(g)
    return N


def estimate_curvature(mesh: TriMesh) -> CurvatureField:
    """Fit a shape operator per face from the variation of vertex normals.

    For each of the three edges ``e`` the fit asks ``S e = dn`` where ``dn``
    is the difference of the vertex normals at its ends; the six scalar
    equations are solved for the three tensor entries in least squares.
    """
    _check_frames(mesh)
    f = mesh.faces
    P = mesh.vertices[f]
    N = fitted_vertex_normals(mesh)[f]
    E = mesh.frames
    # edges k -> k+1
    de = P[:, [1, 2, 0]] - P
    dn = N[:, [1, 2, 0]] - N
    eu = np.einsum("mkj,mj->mk", de, E[:, 0])
    ev = np.einsum("mkj,mj->mk", de, E[:, 1])
    nu = np.einsum("mkj,mj->mk", dn, E[:, 0])
    nv = np.einsum("mkj,mj->mk", dn, E[:, 1])
    # unknowns (a, b, c) for S = [[a, b], [b, c]]
    m = mesh.n_faces
    A = np.zeros((m, 6, 3))
    A[:, 0:3, 0] = eu
    A[:, 0:3, 1] = ev
    A[:, 3:6, 1] = eu
    A[:, 3:6, 2] = ev
    rhs = np.concatenate([nu, nv], axis=1)
    AtA = np.einsum("mki,mkj->mij", A, A)
    Atb = np.einsum("mki,mk->mi", A, rhs)
    x = np.linalg.solve(AtA, Atb[..., None])[..., 0]
    S = np.empty((m, 2, 2))
    S[:, 0, 0] = x[:, 0]
    S[:, 0, 1] = S[:, 1, 0] = x[:, 1]
    S[:, 1, 1] = x[:, 2]
    return CurvatureField(S, mesh.frames, "estimated")


def normal_curvature(curv: CurvatureField, face: int, direction) -> float:
    """Normal curvature ``d^T S d`` (1/mm) of ``face`` along a unit tangent."""
    d = np.asarray(direction, dtype=float)
    fr = curv.frames[face]
    if not np.all(np.isfinite(fr)):
        raise DegenerateFrameError(f"face {face} has no tangent frame")
    n = np.cross(fr[0], fr[1])
    if abs(float(d @ n)) > TANGENT_TOL:
        raise InvalidParamError(f"direction is not tangent to face {face}")
    c = fr @ d
    return float(c @ curv.tensors[face] @ c)


def shape_operator_to_frames(mesh: TriMesh, W) -> np.ndarray:
    """Restrict ambient 3x3 Weingarten maps (one per face) to face frames."""
    W = 0.5 * (W + np.transpose(W, (0, 2, 1)))
    return np.einsum("mai,mij,mbj->mab", mesh.frames, W, mesh.frames)
