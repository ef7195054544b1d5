"""Analytic test surfaces meshed on regular grids, with exact curvature."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidParamError
from .curvature import CurvatureField, shape_operator_to_frames
from .mesh import TriMesh


def grid_faces(nx, ny, wrap_x=False):
    """Triangulate an ``nx`` by ``ny`` cell grid of ``(nx+1)*(ny+1)`` nodes
    (``nx*(ny+1)`` when wrapping in x); faces are counter-clockwise in the
    (x, y) parameter plane."""
    cols = nx if wrap_x else nx + 1
    i, j = np.meshgrid(np.arange(nx), np.arange(ny), indexing="xy")
    i, j = i.ravel(), j.ravel()
    a = i + cols * j
    b = (i + 1) % cols + cols * j
    c = (i + 1) % cols + cols * (j + 1)
    d = i + cols * (j + 1)
    return np.concatenate([np.stack([a, b, c], 1), np.stack([a, c, d], 1)])


def _positive(params, name, default):
    val = float(params.get(name, default))
    if not val > 0:
        raise InvalidParamError(f"{name} must be positive, got {val}")
    return val


def _count(params, name, default):
    val = int(params.get(name, default))
    if val < 1:
        raise InvalidParamError(f"{name} must be >= 1, got {val}")
    return val


def analytic_height_field(fun, grad, hess, xlim, ylim, nx, ny):
    """Mesh ``z = fun(x, y)`` over a rectangle, normals pointing to +z.

    ``grad(x, y)`` returns ``(fx, fy)`` and ``hess(x, y)`` returns
    ``(fxx, fxy, fyy)``; the exact shape operator is evaluated at the (x, y)
    location of every face centroid.
    """
    xs = np.linspace(xlim[0], xlim[1], nx + 1)
    ys = np.linspace(ylim[0], ylim[1], ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    V = np.stack([X.ravel(), Y.ravel(), fun(X.ravel(), Y.ravel())], axis=1)
    mesh = TriMesh(V, grid_faces(nx, ny))
    c = mesh.face_centroids
    fx, fy = grad(c[:, 0], c[:, 1])
    fxx, fxy, fyy = hess(c[:, 0], c[:, 1])
    fx, fy = np.broadcast_to(fx, c[:, 0].shape), np.broadcast_to(fy, c[:, 0].shape)
    m = len(c)
    g = np.stack([-fx, -fy, np.ones(m)], axis=1)
    w = np.linalg.norm(g, axis=1)
    n = g / w[:, None]

    def dnormal(dg):
        return (dg - n * np.einsum("ij,ij->i", n, dg)[:, None]) / w[:, None]

    zeros = np.zeros(m)
    n_x = dnormal(np.stack([-np.broadcast_to(fxx, (m,)), -np.broadcast_to(fxy, (m,)), zeros], 1))
    n_y = dnormal(np.stack([-np.broadcast_to(fxy, (m,)), -np.broadcast_to(fyy, (m,)), zeros], 1))
    Xx = np.stack([np.ones(m), zeros, fx], 1)
    Xy = np.stack([zeros, np.ones(m), fy], 1)
    basis = np.stack([Xx, Xy, n], axis=2)
    images = np.stack([n_x, n_y, np.zeros((m, 3))], axis=2)
    W = images @ np.linalg.inv(basis)
    return mesh, CurvatureField(shape_operator_to_frames(mesh, W), mesh.frames, "analytic")


def plane_surface(width=10.0, height=10.0, nx=10, ny=10):
    """Flat ``width`` by ``height`` rectangle in z = 0 with its corner at the origin."""
    return analytic_height_field(
        lambda x, y: np.zeros_like(x),
        lambda x, y: (0.0, 0.0),
        lambda x, y: (0.0, 0.0, 0.0),
        (0.0, width),
        (0.0, height),
        nx,
        ny,
    )


def cylinder_surface(radius, height, n_around, n_axial, concave=False, open_seam=False):
    """Open cylinder about the z axis, ``0 <= z <= height``.

    Normals point outward (convex side toward the cutter) unless ``concave``.
    With ``open_seam`` the generator at angle 0 is duplicated so the surface
    is a topological rectangle (same geometry, two boundary seams).
    """
    cols = n_around + 1 if open_seam else n_around
    theta = 2 * np.pi * np.arange(cols) / n_around
    zs = np.linspace(0.0, height, n_axial + 1)
    T, Z = np.meshgrid(theta, zs, indexing="xy")
    V = np.stack([radius * np.cos(T.ravel()), radius * np.sin(T.ravel()), Z.ravel()], axis=1)
    F = grid_faces(n_around, n_axial, wrap_x=not open_seam)
    if concave:
        F = F[:, ::-1]
    mesh = TriMesh(V, F)
    # evaluate where the true normal is parallel to the facet normal, so the
    # restriction to the facet frame keeps the principal values exact
    nf = mesh.face_normals
    phi = np.arctan2(nf[:, 1], nf[:, 0])
    t = np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=1)
    sign = -1.0 if concave else 1.0
    W = sign / radius * np.einsum("mi,mj->mij", t, t)
    return mesh, CurvatureField(shape_operator_to_frames(mesh, W), mesh.frames, "analytic")


def saddle_surface(c=20.0, half_extent=10.0, n=20):
    """``z = (x^2 - y^2) / c`` over ``[-half_extent, half_extent]^2``."""
    return analytic_height_field(
        lambda x, y: (x * x - y * y) / c,
        lambda x, y: (2 * x / c, -2 * y / c),
        lambda x, y: (2.0 / c, 0.0, -2.0 / c),
        (-half_extent, half_extent),
        (-half_extent, half_extent),
        n,
        n,
    )


def analytic_test_surface(kind, params=None, resolution=10):
    """Build ``(TriMesh, CurvatureField)`` for a plane, cylinder or saddle.

    ``resolution`` is the number of grid cells along the reference direction:
    both sides for the plane and the saddle, the circumference for the
    cylinder (its axial count follows from a square-cell aspect ratio).
    Individual counts can be forced through ``params`` (``nx``/``ny`` or
    ``n_around``/``n_axial``).

    Parameters by kind (mm):
      plane: width=10, height=10
      cylinder: radius=5, height=20, concave=False, open_seam=False
      saddle: c=20, half_extent=10
    """
    params = dict(params or {})
    if int(resolution) < 2:
        raise InvalidParamError(f"resolution must be >= 2, got {resolution}")
    resolution = int(resolution)
    if kind == "plane":
        w = _positive(params, "width", 10.0)
        h = _positive(params, "height", 10.0)
        return plane_surface(w, h, _count(params, "nx", resolution), _count(params, "ny", resolution))
    if kind == "cylinder":
        R = _positive(params, "radius", 5.0)
        H = _positive(params, "height", 20.0)
        n_around = _count(params, "n_around", resolution)
        if n_around < 3:
            raise InvalidParamError("a cylinder needs at least 3 segments around")
        default_axial = max(1, int(round(n_around * H / (2 * np.pi * R))))
        n_axial = _count(params, "n_axial", default_axial)
        return cylinder_surface(
            R, H, n_around, n_axial, bool(params.get("concave", False)), bool(params.get("open_seam", False))
        )
    if kind == "saddle":
        c = _positive(params, "c", 20.0)
        a = _positive(params, "half_extent", 10.0)
        return saddle_surface(c, a, _count(params, "n", resolution))
    raise InvalidParamError(f"unknown analytic surface kind {kind!r}")


def icosahedron(radius=1.0) -> TriMesh:
    """Regular icosahedron, outward oriented."""
    t = (1 + 5 ** 0.5) / 2
    V = np.array(
        [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
         [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
         [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]],
        dtype=float,
    )
    V *= radius / np.linalg.norm(V[0])
    F = np.array(
        [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    )
    return TriMesh(V, F)


def regular_tetrahedron() -> TriMesh:
    V = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float)
    F = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriMesh(V, F)
