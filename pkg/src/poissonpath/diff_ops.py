"""Cotangent Laplacian, divergence and gradient on triangle meshes.

Conventions used throughout the package:

* ``stiffness`` ``K`` has off-diagonal entries ``cot(alpha_ij) + cot(beta_ij)``
  and rows summing to zero, so it is symmetric negative semi-definite;
* ``mass`` is the vector ``2 * A_i`` of doubled mixed-Voronoi areas;
* ``(Laplacian phi)_i = (K phi)_i / mass_i`` and the divergence uses the same
  ``1 / (2 A_i)`` normalisation, so ``K phi = mass * div(V)`` is the weak form
  of ``min integral |grad phi - V|^2`` with natural boundary conditions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DegenerateTriangleError
from .mesh_core.mesh import TriMesh

logger = logging.getLogger(__name__)

COT_CLAMP = 1e4


def corner_cotangents(mesh: TriMesh) -> np.ndarray:
    """Cotangent of every corner angle, clamped to ``+-COT_CLAMP``."""
    ang = mesh.angles
    s = np.sin(ang)
    if np.any(s <= 0):
        raise DegenerateTriangleError("triangle with a zero corner angle")
    cot = np.cos(ang) / s
    clipped = np.abs(cot) > COT_CLAMP
    if clipped.any():
        logger.warning("clamping %d cotangents to +-%g", int(clipped.sum()), COT_CLAMP)
        cot = np.clip(cot, -COT_CLAMP, COT_CLAMP)
    return cot


def assemble_laplacian(mesh: TriMesh):
    """Return ``(stiffness, mass)``: the cotan matrix ``K`` (CSR) and ``2 A``.

    Boundary vertices get the one-sided cotangent sums, which is the natural
    (zero-Neumann) discretisation.
    """
    f = mesh.faces
    cot = corner_cotangents(mesh)
    # corner k weights the opposite edge (f[k+1], f[k+2])
    i = f[:, [1, 2, 0]].ravel()
    j = f[:, [2, 0, 1]].ravel()
    w = cot.ravel()
    n = mesh.n_vertices
    off = sparse.coo_matrix((np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n)).tocsr()
    K = off - sparse.diags(np.asarray(off.sum(axis=1)).ravel())
    K = K.tocsr()
    K.sum_duplicates()
    return K, 2.0 * mesh.voronoi_area


def laplacian(mesh: TriMesh, phi, operators=None) -> np.ndarray:
    K, mass = operators if operators is not None else assemble_laplacian(mesh)
    return (K @ np.asarray(phi, dtype=float)) / mass


def integrated_divergence(mesh: TriMesh, field) -> np.ndarray:
    """``A_i * (div V)_i``, i.e. half the cotangent sum, without the area."""
    V = np.asarray(field, dtype=float)
    f = mesh.faces
    P = mesh.vertices[f]
    cot = corner_cotangents(mesh)
    out = np.zeros(mesh.n_vertices)
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        e1 = P[:, j] - P[:, k]  # opposite corner l
        e2 = P[:, l] - P[:, k]  # opposite corner j
        val = 0.5 * (cot[:, l] * np.einsum("ij,ij->i", e1, V) + cot[:, j] * np.einsum("ij,ij->i", e2, V))
        np.add.at(out, f[:, k], val)
    return out


def divergence(mesh: TriMesh, field) -> np.ndarray:
    """Per-vertex divergence of a per-face tangent vector field."""
    return integrated_divergence(mesh, field) / mesh.voronoi_area


def gradient_operator(mesh: TriMesh) -> sparse.csr_matrix:
    """Sparse ``(3m, n)`` matrix mapping vertex values to stacked face gradients."""
    f = mesh.faces
    P = mesh.vertices[f]
    n = mesh.face_normals
    dbl = 2.0 * mesh.face_areas
    rows, cols, vals = [], [], []
    m = mesh.n_faces
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        g = np.cross(n, P[:, l] - P[:, j]) / dbl[:, None]
        for c in range(3):
            rows.append(3 * np.arange(m) + c)
            cols.append(f[:, k])
            vals.append(g[:, c])
    G = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(3 * m, mesh.n_vertices),
    )
    return G.tocsr()


def face_gradient(mesh: TriMesh, phi) -> np.ndarray:
    """Constant gradient of the piecewise-linear interpolant on every face."""
    phi = np.asarray(phi, dtype=float)
    f = mesh.faces
    P = mesh.vertices[f]
    n = mesh.face_normals
    g = np.zeros((mesh.n_faces, 3))
    for k in range(3):
        j, l = (k + 1) % 3, (k + 2) % 3
        g += phi[f[:, k], None] * np.cross(n, P[:, l] - P[:, j])
    return g / (2.0 * mesh.face_areas[:, None])


def project_to_faces(mesh: TriMesh, vectors) -> np.ndarray:
    """Drop the normal component of one 3-vector per face."""
    v = np.asarray(vectors, dtype=float)
    n = mesh.face_normals
    return v - n * np.einsum("ij,ij->i", v, n)[:, None]


@dataclass
class AdjointReport:
    trials: int
    max_residual: float
    residuals: np.ndarray
    tolerance: float = 1e-8

    @property
    def passed(self) -> bool:
        return bool(self.max_residual < self.tolerance)


def check_adjoint(mesh: TriMesh, trials=100, seed=0, phi=None) -> AdjointReport:
    """Check ``sum_i A_i phi_i div(V)_i = -sum_f area_f grad(phi)_f . V_f``.

    Random vertex values and random tangent face vectors are drawn per trial
    (``phi`` overrides the vertex values). The residual is relative to the
    larger sum of absolute terms of the two sides, so cancelling sums (as
    for constant ``phi``) do not inflate it; it is 0 when every term is.
    """
    rng = np.random.default_rng(seed)
    res = np.empty(trials)
    for t in range(trials):
        p = rng.standard_normal(mesh.n_vertices) if phi is None else np.asarray(phi, dtype=float)
        V = project_to_faces(mesh, rng.standard_normal((mesh.n_faces, 3)))
        lhs_terms = p * integrated_divergence(mesh, V)
        rhs_terms = mesh.face_areas * np.einsum("fi,fi->f", face_gradient(mesh, p), V)
        lhs, rhs = float(lhs_terms.sum()), -float(rhs_terms.sum())
        # cancellation-aware scale: both sides may sum to ~0 from O(1) terms
        scale = max(np.abs(lhs_terms).sum(), np.abs(rhs_terms).sum())
        res[t] = 0.0 if scale == 0 else abs(lhs - rhs) / scale
    return AdjointReport(trials, float(res.max()), res)
