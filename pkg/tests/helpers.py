"""Mesh builders shared by several test modules."""

import numpy as np

from poissonpath.feed_field import DirectionField
from poissonpath.mesh_core import TriMesh, analytic_height_field, analytic_test_surface


def lattice_disc(spacing, radius=5.0):
    """Planar disc cut from an equilateral triangular lattice: every lattice
    triangle with all corners inside the radius is kept."""
    n = int(np.ceil(radius / spacing)) + 2
    i, j = np.meshgrid(np.arange(-n, n + 1), np.arange(-n, n + 1), indexing="ij")
    P = np.c_[(i + 0.5 * j).ravel() * spacing, (j * np.sqrt(3) / 2).ravel() * spacing]
    idx = np.arange(len(P)).reshape(i.shape)
    a, b, c, d = idx[:-1, :-1], idx[1:, :-1], idx[:-1, 1:], idx[1:, 1:]
    F = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([b, d, c], -1).reshape(-1, 3)])
    inside = np.linalg.norm(P, axis=1) <= radius + 1e-9
    F = F[inside[F].all(axis=1)]
    used, F = np.unique(F, return_inverse=True)
    return TriMesh(np.c_[P[used], np.zeros(len(used))], F.reshape(-1, 3))


def two_region_plane(nx=20, ny=4):
    """Unit-cell plane ``nx`` by ``ny`` with feed along x left of the seam
    ``x = nx/2`` and along y right of it."""
    mesh, curv = analytic_test_surface("plane", {"width": nx, "height": ny, "nx": nx, "ny": ny}, 2)
    left = mesh.face_centroids[:, 0] < nx / 2
    D = np.where(left[:, None], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    return mesh, curv, DirectionField(D), left


def uniform_field(mesh, d=(1.0, 0.0, 0.0)):
    return DirectionField(np.tile(np.asarray(d, float), (mesh.n_faces, 1)))


def dihedral_pair(angle_deg):
    """Two triangles sharing the edge on the x axis; the second is folded up
    by ``angle_deg`` from the plane of the first."""
    a = np.radians(angle_deg)
    V = np.array([[0, 0, 0], [1, 0, 0], [0.5, -1, 0], [0.5, np.cos(a), np.sin(a)]], float)
    F = np.array([[0, 2, 1], [0, 1, 3]])
    return TriMesh(V, F)


def composite_valley(nx=8, ny=32, hx=2.0, hy=8.0, lower=0.04, upper=-0.015):
    """C1 surface ``z = x^2/40 + a(y) y^2`` with ``a = lower`` for y < 0 and
    ``a = upper`` above.

    Below the seam the surface is concave in both directions and the
    strongest concavity runs along y, so the preferred feed is along x. Above
    it the surface turns convex along y and the feed switches to y. The jump
    is abrupt because the exact curvature is discontinuous at y = 0.
    """
    def a(y):
        return np.where(y < 0, lower, upper)

    return analytic_height_field(
        lambda x, y: x * x / 40 + a(y) * y * y,
        lambda x, y: (x / 20, 2 * a(y) * y),
        lambda x, y: (np.full_like(x, 1 / 20), 0 * x, 2 * a(y)),
        (-hx, hx),
        (-hy, hy),
        nx,
        ny,
    )
