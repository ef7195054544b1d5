"""Level scheduling and iso-curve extraction.

Tool paths are iso-level curves of a per-vertex scalar field. Curves are
traced with marching triangles: a face crossed by the level contributes one
segment between its two crossed edges, and segments are chained through the
shared edges into open polylines or closed loops.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .diff_ops import face_gradient
from .errors import DegenerateFieldError, GougeError, InvalidParamError, OutOfRangeError
from .feed_field import CutterSpec, cutter_fits, effective_radius
from .mesh_core.curvature import CurvatureField
from .mesh_core.mesh import SurfacePoint, TriMesh

logger = logging.getLogger(__name__)

VERTEX_NUDGE = 1e-12
DEFAULT_SAMPLES = 64
MAX_LEVELS = 100_000


@dataclass
class ToolPath:
    """One connected iso-curve piece.

    ``faces[i]`` and ``bary[i]`` locate point ``i`` on the mesh: the face is
    the one holding the segment that leaves the point (the incoming one for
    the last point of an open path).
    """

    level: float
    positions: np.ndarray  # (k, 3) mm
    faces: np.ndarray  # (k,)
    bary: np.ndarray  # (k, 3)
    closed: bool
    patch: int = 0

    @property
    def points(self):
        return [SurfacePoint(int(f), tuple(b)) for f, b in zip(self.faces, self.bary)]

    def segments(self) -> np.ndarray:
        """(s, 2, 3) array of consecutive point pairs, closing loops."""
        P = self.positions
        if self.closed:
            return np.stack([P, np.roll(P, -1, axis=0)], axis=1)
        return np.stack([P[:-1], P[1:]], axis=1)

    @property
    def segment_faces(self) -> np.ndarray:
        return self.faces if self.closed else self.faces[:-1]

    @property
    def length(self) -> float:
        seg = self.segments()
        return float(np.linalg.norm(seg[:, 1] - seg[:, 0], axis=1).sum())

    def to_json(self) -> dict:
        return {
            "level": float(self.level),
            "closed": bool(self.closed),
            "patch": int(self.patch),
            "length": self.length,
            "points": [[float(c) for c in p] for p in self.positions],
            "faces": [int(f) for f in self.faces],
            "bary": [[float(c) for c in b] for b in self.bary],
        }

    @classmethod
    def from_json(cls, payload) -> "ToolPath":
        return cls(
            float(payload["level"]),
            np.asarray(payload["points"], dtype=float).reshape(-1, 3),
            np.asarray(payload["faces"], dtype=np.int64),
            np.asarray(payload["bary"], dtype=float).reshape(-1, 3),
            bool(payload["closed"]),
            int(payload.get("patch", 0)),
        )


@dataclass
class LevelSchedule:
    levels: np.ndarray
    increments: np.ndarray  # increment computed on the path at each level
    h: float
    info: dict = dc_field(default_factory=dict)

    def __len__(self):
        return len(self.levels)

    def to_json(self) -> dict:
        return {
            "h": float(self.h),
            "levels": [float(x) for x in self.levels],
            "increments": [float(x) for x in self.increments],
        }

    @classmethod
    def from_json(cls, payload) -> "LevelSchedule":
        return cls(np.asarray(payload["levels"], float), np.asarray(payload["increments"], float), float(payload["h"]))


def _values(phi) -> np.ndarray:
    return np.asarray(getattr(phi, "values", phi), dtype=float)


def total_length(paths) -> float:
    return float(sum(p.length for p in paths))


# -- marching triangles ------------------------------------------------------
def _face_mask(mesh: TriMesh, faces):
    if faces is None:
        return np.ones(mesh.n_faces, bool)
    mask = np.zeros(mesh.n_faces, bool)
    mask[np.asarray(faces, dtype=np.int64)] = True
    return mask


def _safe_level(vals, level, lo, hi):
    """Nudge ``level`` off any vertex value, toward the interior of the range."""
    span = hi - lo
    step = VERTEX_NUDGE * span
    sign = 1.0 if level - lo <= hi - level else -1.0
    l = level
    for _ in range(8):
        if not np.any(vals == l):
            return l
        l = l + sign * step
        step *= 2
    return l


def extract_iso_curve(mesh: TriMesh, phi, level: float, faces=None, patch: int = 0) -> list:
    """All connected pieces of ``{phi = level}`` as tool paths.

    Parameters
    ----------
    faces : array of face ids, optional
        Restrict tracing to these faces; pieces then end where they leave
        the selection.

    Each piece runs so that its tangent agrees with ``grad(phi) x n``, which
    is the feed direction when ``grad(phi)`` matches its target.
    """
    vals = _values(phi)
    mask = _face_mask(mesh, faces)
    F = mesh.faces[mask]
    fids = np.flatnonzero(mask)
    used = np.unique(F)
    lo, hi = float(vals[used].min()), float(vals[used].max())
    tol = 1e-12 * max(hi - lo, 1e-300)
    if not (lo - tol <= level <= hi + tol):
        raise OutOfRangeError(f"level {level} outside [{lo}, {hi}]")
    l = _safe_level(vals[used], min(max(level, lo), hi), lo, hi)
    above = vals > l

    # crossed edges of the selected faces, one segment per crossed face
    fe = mesh.face_edges[mask]  # edge opposite corner k
    E = mesh.edges
    crossed = above[E[:, 0]] != above[E[:, 1]]
    cf = crossed[fe]
    hit = cf.sum(axis=1) == 2
    if not hit.any():
        return []
    seg_faces = fids[hit]
    pair = np.sort(np.where(cf[hit], fe[hit], -1), axis=1)[:, 1:]  # two edge ids
    # adjacency: edge -> up to two segments
    nodes = np.unique(pair)
    node_index = {int(e): i for i, e in enumerate(nodes)}
    links = [[] for _ in nodes]
    for s, (a, b) in enumerate(pair):
        links[node_index[int(a)]].append(s)
        links[node_index[int(b)]].append(s)

    a_, b_ = E[nodes, 0], E[nodes, 1]
    t = (l - vals[a_]) / (vals[b_] - vals[a_])
    node_pos = (1 - t)[:, None] * mesh.vertices[a_] + t[:, None] * mesh.vertices[b_]

    grad = face_gradient(mesh, vals)
    feed = np.cross(grad, mesh.face_normals)

    seen = np.zeros(len(pair), bool)

    def walk(start_node):
        chain, fchain = [start_node], []
        node = start_node
        while True:
            nxt = [s for s in links[node] if not seen[s]]
            if not nxt:
                break
            s = nxt[0]
            seen[s] = True
            fchain.append(s)
            e0, e1 = pair[s]
            other = node_index[int(e1)] if node_index[int(e0)] == node else node_index[int(e0)]
            if other == start_node:
                return chain, fchain, True
            chain.append(other)
            node = other
        return chain, fchain, False

    paths = []
    degree = np.array([len(x) for x in links])
    starts = list(np.flatnonzero(degree == 1)) + list(range(len(nodes)))
    for start in starts:
        if all(seen[s] for s in links[start]):
            continue
        chain, segs, closed = walk(int(start))
        if len(segs) == 0:
            continue
        sf = seg_faces[segs]
        pos = node_pos[chain]
        pf = sf if closed else np.r_[sf, sf[-1]]
        path = _make_path(mesh, l, pos, pf, closed, nodes[chain], t[chain], patch)
        d = path.segments()
        if np.einsum("ij,ij->", d[:, 1] - d[:, 0], feed[sf]) < 0:
            rc = chain[::-1]
            path = _make_path(mesh, l, pos[::-1], _reverse_faces(pf, closed), closed, nodes[rc], t[rc], patch)
        path.level = float(level)
        paths.append(path)
    return paths


def _reverse_faces(pf, closed):
    """Outgoing-segment faces of the same points traversed backwards."""
    if closed:
        return np.roll(pf[::-1], -1)
    return np.r_[pf[:-1][::-1], pf[0]]


def _make_path(mesh, level, pos, pf, closed, edge_ids, t, patch):
    """Barycentric coordinates of edge points ``(1-t) a + t b`` in faces ``pf``."""
    F = mesh.faces[pf]
    E = mesh.edges[edge_ids]
    bary = np.where(F == E[:, :1], (1 - t)[:, None], 0.0) + np.where(F == E[:, 1:], t[:, None], 0.0)
    return ToolPath(level, np.asarray(pos, dtype=float), np.asarray(pf, dtype=np.int64), bary, bool(closed), patch)


# -- level scheduling ------------------------------------------------------
def _sample_paths(paths, samples):
    """Arc-length samples over all pieces: (positions, faces, tangents)."""
    segs = [p.segments() for p in paths]
    sfaces = [p.segment_faces for p in paths]
    S = np.concatenate(segs)
    SF = np.concatenate(sfaces)
    vec = S[:, 1] - S[:, 0]
    L = np.linalg.norm(vec, axis=1)
    keep = L > 0
    S, SF, vec, L = S[keep], SF[keep], vec[keep], L[keep]
    cum = np.r_[0.0, np.cumsum(L)]
    at = (np.arange(samples) + 0.5) / samples * cum[-1]
    idx = np.clip(np.searchsorted(cum, at, side="right") - 1, 0, len(L) - 1)
    frac = (at - cum[idx]) / L[idx]
    pos = S[idx, 0] + frac[:, None] * vec[idx]
    return pos, SF[idx], vec[idx] / L[idx, None]


def level_increment(mesh: TriMesh, phi, curv: CurvatureField, cutter: CutterSpec, path, h: float, samples: int = DEFAULT_SAMPLES) -> float:
    """Smallest safe level step away from ``path``.

    At every sample the side-step giving scallop height ``h`` is
    ``sqrt(h) * (sqrt(2/(k_s + 1/r1)) + sqrt(2/(k_s + 1/r2)))`` with the
    adjacent radius ``r2`` taken equal to the local ``r1``; the level change
    over that distance is ``|grad phi| * s``. ``path`` may be one path or a
    list of pieces sharing a level.
    """
    if samples < 8:
        raise InvalidParamError(f"need at least 8 samples, got {samples}")
    paths = [path] if isinstance(path, ToolPath) else list(path)
    if not paths:
        raise InvalidParamError("cannot sample an empty path")
    pos, faces, tang = _sample_paths(paths, samples)
    n = mesh.face_normals[faces]
    tang = tang - n * np.einsum("ij,ij->i", tang, n)[:, None]
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)
    across = np.cross(n, tang)
    k_s = curv.normal_curvatures(across, faces)
    r1 = effective_radius(cutter).radius
    r2 = r1
    a1, a2 = k_s + 1.0 / r1, k_s + 1.0 / r2
    ok = cutter_fits(a1, r1) & cutter_fits(a2, r2)
    if not ok.any():
        raise GougeError("every sample on the path gouges", sorted(set(int(f) for f in faces)))
    if not ok.all():
        logger.warning("skipping %d gouging samples", int((~ok).sum()))
    s = math.sqrt(h) * (np.sqrt(2.0 / a1[ok]) + np.sqrt(2.0 / a2[ok]))
    gnorm = np.linalg.norm(face_gradient(mesh, _values(phi)), axis=1)[faces[ok]]
    return float(np.min(gnorm * s))


def schedule_levels(
    mesh: TriMesh,
    phi,
    curv: CurvatureField,
    cutter: CutterSpec,
    h: float,
    samples: int = DEFAULT_SAMPLES,
    faces=None,
) -> LevelSchedule:
    """March levels from the low end of ``phi`` to the high end.

    The first candidate sits half an increment inside the minimum so the
    boundary strip gets machined; each next level adds the increment
    measured on the current one. Once a level comes within half an
    increment of the maximum the run stops, and the whole set is shifted
    down by half the overshoot so both end strips get the same margin.
    """
    if not h > 0:
        raise InvalidParamError(f"scallop height must be positive, got {h}")
    vals = _values(phi)
    mask = _face_mask(mesh, faces)
    used = np.unique(mesh.faces[mask])
    lo, hi = float(vals[used].min()), float(vals[used].max())
    span = hi - lo
    if span < 1e-12:
        raise DegenerateFieldError(f"scalar field range {span:.3g} is too small to schedule")
    eps = 1e-9 * span

    def inc_at(level):
        pieces = extract_iso_curve(mesh, vals, level, faces)
        if not pieces:
            raise DegenerateFieldError(f"no iso-curve at level {level}")
        step = level_increment(mesh, vals, curv, cutter, pieces, h, samples)
        if not step > 0:
            raise DegenerateFieldError(f"zero level increment at level {level}")
        return step

    first = inc_at(lo + eps)
    levels = [min(lo + eps + 0.5 * first, hi - eps)]
    incs = []
    while len(levels) < MAX_LEVELS:
        step = inc_at(levels[-1])
        incs.append(step)
        if levels[-1] + 0.5 * step >= hi:
            break
        levels.append(levels[-1] + step)
        if levels[-1] >= hi - eps:
            # beyond the field; reuse the last measured step
            incs.append(step)
            break
    levels = np.asarray(levels)
    incs = np.asarray(incs)
    overshoot = max(levels[-1] + 0.5 * incs[-1] - hi, 0.0)
    shift = min(0.5 * overshoot, levels[0] - lo - eps)
    levels = levels - shift
    inside = levels < hi - eps
    levels, incs = levels[inside], incs[inside]
    logger.info("scheduled %d levels over [%.4g, %.4g]", len(levels), lo, hi)
    return LevelSchedule(levels, incs, float(h), {"first_increment": first, "shift": float(shift)})


def extract_all(mesh: TriMesh, phi, schedule, patches=None) -> list:
    """Extract every scheduled level.

    Without ``patches`` ``phi`` is one field and ``schedule`` one
    :class:`LevelSchedule`. With a segmentation, both are mappings from
    patch label to the per-patch field (full vertex length) and schedule,
    and each patch is traced only inside its own faces.
    """
    if patches is None:
        out = []
        for l in schedule.levels:
            out.extend(extract_iso_curve(mesh, phi, float(l)))
        return out
    out = []
    for label in range(patches.k):
        if label not in schedule:
            continue
        faces = patches.patch_faces(label)
        for l in schedule[label].levels:
            out.extend(extract_iso_curve(mesh, phi[label], float(l), faces, patch=label))
    return out
