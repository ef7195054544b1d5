"""Preferred feed directions, their orientation, transport and smoothing.

Directions live on faces. The cutter is modelled by the osculating circle of
its effective cutting shape in the section plane normal to the feed, and the
strip width follows from the second-order circular-arc scallop model.
"""

from __future__ import annotations

import heapq
import itertools
import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import GougeError, InvalidConfigError, NoSeedError, NotAdjacentError, ParseError
from .mesh_core.curvature import CurvatureField, normal_curvature
from .mesh_core.mesh import TriMesh

logger = logging.getLogger(__name__)

SINGULAR_RTOL = 1e-6
# k_s + 1/r_e at or below this fraction of 1/r_e counts as gouging, so a
# cutter that exactly fills a concavity is rejected despite rounding
GOUGE_RTOL = 1e-9


@dataclass(frozen=True)
class CutterSpec:
    """Cutter geometry. Angles in degrees, lengths in mm.

    ``tilt`` is recorded but does not enter the effective radius.
    """

    kind: str = "ball"
    radius: float = 5.0
    inclination: float = 90.0
    tilt: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ball", "flat"):
            raise InvalidConfigError(f"unknown cutter kind {self.kind!r}")
        if not self.radius > 0:
            raise InvalidConfigError(f"cutter radius must be positive, got {self.radius}")
        if self.kind == "flat" and not 0 < self.inclination <= 90:
            raise InvalidConfigError(
                f"flat-end inclination must lie in (0, 90] degrees, got {self.inclination}"
            )


@dataclass(frozen=True)
class EffectiveCutter:
    radius: float


@dataclass
class DirectionField:
    """Unit tangent direction per face.

    ``singular`` marks faces without a preferred direction; ``gouge`` marks
    faces where the cutter cannot fit the surface at all (those are also
    singular).
    """

    directions: np.ndarray
    singular: np.ndarray = None
    gouge: np.ndarray = None

    def __post_init__(self):
        self.directions = np.asarray(self.directions, dtype=float)
        m = len(self.directions)
        self.singular = np.zeros(m, bool) if self.singular is None else np.asarray(self.singular, bool)
        self.gouge = np.zeros(m, bool) if self.gouge is None else np.asarray(self.gouge, bool)

    def __len__(self):
        return len(self.directions)

    def take(self, face_ids) -> "DirectionField":
        idx = np.asarray(face_ids)
        return DirectionField(self.directions[idx], self.singular[idx], self.gouge[idx])

    def flipped(self) -> "DirectionField":
        return replace(self, directions=-self.directions)


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def cutter_fits(denom, radius):
    """``k_s + 1/r_e > 0`` with the rounding margin of ``GOUGE_RTOL``."""
    return np.asarray(denom) > GOUGE_RTOL / radius


def effective_radius(cutter: CutterSpec, face=None, feed_dir=None) -> EffectiveCutter:
    """Osculating radius of the effective cutting shape at the contact point.

    Ball-end: the cutter radius. Flat-end inclined by ``lambda``: the rim
    circle projects to an ellipse with semi-axes ``r`` and ``r sin(lambda)``
    whose curvature radius at the lowest point is ``r / sin(lambda)``.
    """
    if cutter.kind == "ball":
        return EffectiveCutter(float(cutter.radius))
    s = math.sin(math.radians(cutter.inclination))
    if s <= 0:
        raise InvalidConfigError("flat-end cutter parallel to the surface has unbounded effective radius")
    return EffectiveCutter(float(cutter.radius) / s)


def strip_width(cutter: CutterSpec, face: int, feed_dir, curv: CurvatureField, h: float) -> float:
    """Machining strip width ``2 sqrt(2h / (k_s + 1/r_e))`` in mm."""
    d = np.asarray(feed_dir, dtype=float)
    perp = np.cross(curv.normals[face], d)
    k_s = normal_curvature(curv, face, perp)
    r_e = effective_radius(cutter, face, d).radius
    denom = k_s + 1.0 / r_e
    if not cutter_fits(denom, r_e):
        raise GougeError(f"face {face}: k_s + 1/r_e = {denom:.4g} <= 0", [face])
    return 2.0 * math.sqrt(2.0 * h / denom)


def preferred_directions(mesh: TriMesh, curv: CurvatureField, cutter: CutterSpec, h: float) -> DirectionField:
    """Per-face feed direction of maximum strip width.

    The width grows as the curvature across the feed falls, so the feed runs
    along the principal direction of maximum normal curvature. Faces whose
    best and worst widths agree to ``1e-6`` relative are flagged singular;
    faces where even the best direction gouges are flagged ``gouge``.
    """
    k_min, k_max, vec = curv.principal()
    d = np.einsum("mi,mij->mj", vec, curv.frames)
    r_e = effective_radius(cutter).radius
    lo, hi = k_min + 1.0 / r_e, k_max + 1.0 / r_e
    gouge = ~cutter_fits(lo, r_e)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_best = 2.0 * np.sqrt(2.0 * h / lo)
        w_worst = np.where(hi > 0, 2.0 * np.sqrt(2.0 * h / hi), 0.0)
    singular = gouge | ((w_best - w_worst) < SINGULAR_RTOL * w_best)
    d = np.where(singular[:, None], curv.frames[:, 0], d)
    if gouge.any():
        logger.warning("%d faces gouge for every feed direction", int(gouge.sum()))
    return DirectionField(_unit(d), singular, gouge)


# -- transport -------------------------------------------------------------
def _edge_rotations(mesh: TriMesh, edges, src, dst):
    """Rotation matrices that fold face ``src`` onto ``dst`` about their
    shared edge (one per entry)."""
    a = _unit(mesh.vertices[mesh.edges[edges, 1]] - mesh.vertices[mesh.edges[edges, 0]])
    n1 = mesh.face_normals[src]
    n2 = mesh.face_normals[dst]
    ang = np.arctan2(np.einsum("ij,ij->i", np.cross(n1, n2), a), np.einsum("ij,ij->i", n1, n2))
    c, s = np.cos(ang), np.sin(ang)
    A = np.zeros((len(a), 3, 3))
    A[:, 0, 1], A[:, 0, 2] = -a[:, 2], a[:, 1]
    A[:, 1, 0], A[:, 1, 2] = a[:, 2], -a[:, 0]
    A[:, 2, 0], A[:, 2, 1] = -a[:, 1], a[:, 0]
    aa = np.einsum("ij,ik->ijk", a, a)
    I = np.eye(3)[None]
    return c[:, None, None] * I + s[:, None, None] * A + (1 - c)[:, None, None] * aa


def _apply(mesh, R, dst, D):
    out = np.einsum("mij,mj->mi", R, D)
    n = mesh.face_normals[dst]
    out = out - n * np.einsum("ij,ij->i", out, n)[:, None]
    return _unit(out)


def transport_direction(mesh: TriMesh, from_face: int, to_face: int, d) -> np.ndarray:
    """Unfold ``to_face`` into the plane of ``from_face``, copy ``d`` and fold
    back: a rotation by the dihedral angle about the shared edge."""
    k = np.flatnonzero(mesh.face_neighbors[from_face] == to_face)
    if len(k) == 0:
        raise NotAdjacentError(f"faces {from_face} and {to_face} do not share an edge")
    e = mesh.face_edges[from_face, k[0]]
    R = _edge_rotations(mesh, np.array([e]), np.array([from_face]), np.array([to_face]))
    return _apply(mesh, R, np.array([to_face]), np.asarray(d, dtype=float)[None])[0]


def transported_dots(mesh: TriMesh, field: DirectionField) -> np.ndarray:
    """``transport(f -> g, d_f) . d_g`` for every interior edge."""
    ie = mesh.interior_edges
    f, g = mesh.edge_faces[ie, 0], mesh.edge_faces[ie, 1]
    R = _edge_rotations(mesh, ie, f, g)
    t = _apply(mesh, R, g, field.directions[f])
    return np.einsum("ij,ij->i", t, field.directions[g])


# -- orientation -------------------------------------------------------------
def orient(field: DirectionField, mesh: TriMesh, seeds=None) -> DirectionField:
    """Make directions consistently oriented by propagation over the face graph.

    Seeds keep their stored directions. Well-defined neighbours are flipped
    when the transported parent direction disagrees; singular neighbours
    receive the transported parent direction. Components without a seed are
    started from their lowest-index well-defined face.

    The front is expanded best-first: among the pending edges the one whose
    transported direction agrees best (largest ``|dot|``) with the
    neighbour is taken next, ties in first-in first-out order. A region is
    therefore filled through its own confident edges before the front
    crosses a near-perpendicular jump, where the sign choice is arbitrary,
    so a jump is crossed once instead of once per front.
    """
    D = field.directions.copy()
    singular = field.singular.copy()
    m = mesh.n_faces
    visited = np.zeros(m, dtype=bool)
    if seeds is None or len(seeds) == 0:
        if singular.all():
            raise NoSeedError("every face is singular and no seed faces were given")
        seeds = []
    seeds = [int(s) for s in seeds]
    nbrs = mesh.face_neighbors
    edges = mesh.face_edges
    counter = itertools.count()

    def push(heap, f):
        for k in range(3):
            g = nbrs[f, k]
            if g < 0 or visited[g]:
                continue
            R = _edge_rotations(mesh, edges[f, k:k + 1], np.array([f]), np.array([g]))
            t = _apply(mesh, R, np.array([g]), D[f][None])[0]
            conf = 1.0 if singular[g] else abs(float(t @ D[g]))
            heapq.heappush(heap, (-conf, next(counter), int(g), t))

    def grow(start):
        heap = []
        for s in start:
            visited[s] = True
        for s in start:
            push(heap, s)
        while heap:
            _, _, g, t = heapq.heappop(heap)
            if visited[g]:
                continue
            if singular[g]:
                D[g] = t
            elif t @ D[g] < 0:
                D[g] = -D[g]
            visited[g] = True
            push(heap, g)

    if seeds:
        grow(seeds)
    while not visited.all():
        candidates = np.flatnonzero(~visited & ~singular)
        if len(candidates) == 0:
            candidates = np.flatnonzero(~visited)
            logger.warning("component without well-defined faces seeded at face %d", candidates[0])
        grow([int(candidates[0])])
    return DirectionField(D, np.zeros(m, bool), field.gouge.copy())


# -- smoothing -------------------------------------------------------------
def smooth_directions(field: DirectionField, mesh: TriMesh, iterations=10, step=0.5) -> DirectionField:
    """Blend each direction with the transported average of its neighbours.

    ``d <- normalize((1 - step) d + step * mean(transported neighbours))``,
    double-buffered, projected to the face plane.
    """
    if iterations <= 0:
        return DirectionField(field.directions.copy(), field.singular.copy(), field.gouge.copy())
    ie = mesh.interior_edges
    f, g = mesh.edge_faces[ie, 0], mesh.edge_faces[ie, 1]
    R_fg = _edge_rotations(mesh, ie, f, g)
    R_gf = np.transpose(R_fg, (0, 2, 1))
    count = np.bincount(np.r_[f, g], minlength=mesh.n_faces).astype(float)
    has = count > 0
    n = mesh.face_normals
    D = field.directions.copy()
    for _ in range(int(iterations)):
        acc = np.zeros_like(D)
        np.add.at(acc, g, np.einsum("mij,mj->mi", R_fg, D[f]))
        np.add.at(acc, f, np.einsum("mij,mj->mi", R_gf, D[g]))
        avg = acc / np.where(has, count, 1.0)[:, None]
        new = np.where(has[:, None], (1 - step) * D + step * avg, D)
        new = new - n * np.einsum("ij,ij->i", new, n)[:, None]
        norm = np.linalg.norm(new, axis=1)
        D = np.where((norm > 1e-12)[:, None], new / np.where(norm > 1e-12, norm, 1.0)[:, None], D)
    return DirectionField(D, field.singular.copy(), field.gouge.copy())


def rotate90(field: DirectionField, mesh: TriMesh) -> DirectionField:
    """Rotate every direction by +90 degrees about its face normal."""
    return DirectionField(_unit(np.cross(mesh.face_normals, field.directions)), field.singular.copy(), field.gouge.copy())


def magnitude_field(mesh: TriMesh, curv: CurvatureField, cutter: CutterSpec, field: DirectionField) -> np.ndarray:
    """Target gradient magnitude ``sqrt((k_s + 1/r_1) / 8)`` per face.

    ``k_s`` is the normal curvature across the feed, i.e. along ``n x d``.
    """
    perp = np.cross(mesh.face_normals, field.directions)
    k_s = curv.normal_curvatures(perp)
    r_e = effective_radius(cutter).radius
    val = k_s + 1.0 / r_e
    bad = np.flatnonzero(~cutter_fits(val, r_e))
    if len(bad):
        raise GougeError(f"{len(bad)} faces gouge (k_s + 1/r_1 <= 0)", bad)
    return np.sqrt(val / 8.0)


# -- JSON interface ----------------------------------------------------------
def save_direction_field(path, field: DirectionField):
    payload = {
        "n_faces": len(field),
        "directions": {str(i): [float(x) for x in d] for i, d in enumerate(field.directions)},
        "singular": [int(i) for i in np.flatnonzero(field.singular)],
        "gouge": [int(i) for i in np.flatnonzero(field.gouge)],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_direction_field(path, mesh: TriMesh) -> DirectionField:
    """Read a face-index -> 3-vector JSON map.

    Listed vectors are projected to their face plane and normalised; faces
    absent from the map (or with a vanishing projection) become singular.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        entries = payload["directions"] if isinstance(payload, dict) and "directions" in payload else payload
        if isinstance(entries, list):
            entries = {str(i): v for i, v in enumerate(entries)}
        items = {int(k): np.asarray(v, dtype=float) for k, v in entries.items()}
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ParseError(f"cannot read direction field {path}: {exc}") from None
    m = mesh.n_faces
    D = mesh.frames[:, 0].copy()
    singular = np.ones(m, dtype=bool)
    n = mesh.face_normals
    for f, v in items.items():
        if not 0 <= f < m or v.shape != (3,):
            raise ParseError(f"bad direction entry for face {f}")
        v = v - n[f] * (v @ n[f])
        norm = np.linalg.norm(v)
        if norm > 1e-12:
            D[f] = v / norm
            singular[f] = False
    if isinstance(payload, dict):
        for f in payload.get("singular", []):
            singular[int(f)] = True
    gouge = np.zeros(m, bool)
    if isinstance(payload, dict):
        gouge[[int(f) for f in payload.get("gouge", [])]] = True
    return DirectionField(D, singular, gouge)
