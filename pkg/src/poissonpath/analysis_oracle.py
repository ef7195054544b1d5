"""Independent checks on finished tool paths.

The scallop oracle works in the plane normal to the path at a contact point.
There the surface is replaced by its osculating circle, each pass by its
effective cutting circle resting on the surface, and the scallop cusp is the
lower intersection of the two cutting circles. Its distance to the surface
circle is the exact scallop height for that model, which is then compared
with the closed-form second-order estimate used for scheduling.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from .errors import NoIntersectionError
from .feed_field import CutterSpec, DirectionField, effective_radius
from .mesh_core.curvature import CurvatureField
from .mesh_core.mesh import TriMesh
from .path_extraction import ToolPath, extract_all, schedule_levels

logger = logging.getLogger(__name__)

FLAT_K = 1e-9
CONE_DEG = 30.0
DEFAULT_SEED = 42


# -- 2D section geometry -----------------------------------------------------
def _arc(k, sigma):
    """Point and unit normal on the section curve at arc length ``sigma``.

    The curve passes through the origin with normal (0, 1); positive ``k``
    bends away from the normal (convex), negative toward it.
    """
    sigma = np.asarray(sigma, dtype=float)
    if abs(k) < FLAT_K:
        return np.stack([sigma, np.zeros_like(sigma)], -1), np.stack([np.zeros_like(sigma), np.ones_like(sigma)], -1)
    a = k * sigma
    q = np.stack([np.sin(a) / k, -(1 - np.cos(a)) / k], -1)
    n = np.stack([np.sin(a), np.cos(a)], -1)
    return q, n


def _surface_distance(k, x):
    if abs(k) < FLAT_K:
        return abs(x[1])
    centre = np.array([0.0, -1.0 / k])
    return abs(np.linalg.norm(x - centre) - 1.0 / abs(k))


def _arc_at_chord(k, s):
    """Arc length whose chord from the origin is ``s``."""
    if abs(k) < FLAT_K:
        return s
    x = k * s / 2
    if abs(x) > 1:
        raise NoIntersectionError(f"chord {s:.4g} exceeds the section circle diameter")
    return 2 * math.asin(x) / k


def _circle_intersections(c1, r1, c2, r2):
    d = float(np.linalg.norm(c2 - c1))
    if d > r1 + r2 or d < abs(r1 - r2) or d == 0:
        raise NoIntersectionError(f"cutter circles do not meet (centre distance {d:.4g})")
    a = (r1 * r1 - r2 * r2 + d * d) / (2 * d)
    hgt = math.sqrt(max(r1 * r1 - a * a, 0.0))
    e = (c2 - c1) / d
    mid = c1 + a * e
    perp = np.array([-e[1], e[0]])
    return mid + hgt * perp, mid - hgt * perp


@dataclass(frozen=True)
class SectionScallop:
    """Two passes in one section: contact points, cusp and heights."""

    p1: np.ndarray
    p2: np.ndarray
    cusp: np.ndarray
    h_exact: float
    sigma2: float


def section_scallop(k, s, r1, r2) -> SectionScallop:
    """Exact scallop between passes ``s`` apart (chord) on a curve of
    curvature ``k``, with cutting radii ``r1`` at the origin and ``r2`` at the
    second contact point (taken on the positive side)."""
    if s == 0:
        z = np.zeros(2)
        return SectionScallop(z, z, z, 0.0, 0.0)
    sig2 = _arc_at_chord(k, s)
    (p1, p2), (n1, n2) = _arc(k, np.array([0.0, sig2]))
    c1, c2 = p1 + r1 * n1, p2 + r2 * n2
    cands = _circle_intersections(c1, r1, c2, r2)
    cusp = min(cands, key=lambda x: _surface_distance(k, x))
    return SectionScallop(p1, p2, cusp, float(_surface_distance(k, cusp)), float(sig2))


def model_scallop_height(k, s, r1, r2) -> float:
    """Second-order scallop height for side-step ``s``: inverts
    ``s = sqrt(h) (sqrt(2/(k+1/r1)) + sqrt(2/(k+1/r2)))``."""
    a1, a2 = k + 1.0 / r1, k + 1.0 / r2
    if a1 <= 0 or a2 <= 0:
        raise NoIntersectionError("cutter gouges the surface in this section")
    return (s / (math.sqrt(2.0 / a1) + math.sqrt(2.0 / a2))) ** 2


def side_step(k, h, r1, r2) -> float:
    """Forward model: side-step giving scallop ``h``."""
    return math.sqrt(h) * (math.sqrt(2.0 / (k + 1.0 / r1)) + math.sqrt(2.0 / (k + 1.0 / r2)))


def auxiliary_side_steps(k, s, r1, r2):
    """Side-steps of the two equal-radius constructions through the cusp.

    A circle of radius ``r2`` resting on the surface on the first pass's side
    and one of radius ``r1`` on the second pass's side are both placed
    through the cusp. Returns ``(|p4 - p1|, |p2 - p3|)`` where ``p3`` and
    ``p4`` are their contact points.
    """
    sc = section_scallop(k, s, r1, r2)
    X = sc.cusp
    # foot of the cusp on the curve: arc length where the normal passes X
    def off_normal(t):
        q, n = _arc(k, t)
        d = X - q
        return float(n[0] * d[1] - n[1] * d[0])

    sig_x = brentq(off_normal, -1e-12, sc.sigma2 + 1e-12)

    def contact(r, lo, hi):
        def g(t):
            q, n = _arc(k, t)
            return float(np.linalg.norm(q + r * n - X) - r)

        return float(brentq(g, lo, hi, xtol=1e-15))

    span = sc.sigma2 - sig_x
    sig3 = contact(r2, sig_x - 4 * max(span, sig_x) - 1e-9, sig_x)
    sig4 = contact(r1, sig_x, sig_x + 4 * max(span, sig_x) + 1e-9)
    p3, _ = _arc(k, sig3)
    p4, _ = _arc(k, sig4)
    return float(np.linalg.norm(p4 - sc.p1)), float(np.linalg.norm(sc.p2 - p3))


# -- sampling on meshes ------------------------------------------------------
@dataclass(frozen=True)
class ScallopSample:
    p1: np.ndarray
    p2: np.ndarray
    face1: int
    face2: int
    k_true: float
    k_model: float
    r1: float
    r2: float
    side_step: float
    h_exact: float
    h_model: float

    @property
    def rel_error(self) -> float:
        return abs(self.h_model - self.h_exact) / self.h_exact if self.h_exact > 0 else 0.0

    def to_row(self) -> dict:
        return {
            "p1": [float(x) for x in self.p1],
            "p2": [float(x) for x in self.p2],
            "face1": self.face1,
            "face2": self.face2,
            "k_true": self.k_true,
            "k_model": self.k_model,
            "r1": self.r1,
            "r2": self.r2,
            "side_step": self.side_step,
            "h_exact": self.h_exact,
            "h_model": self.h_model,
            "rel_error": self.rel_error,
        }


def _as_list(paths):
    return [paths] if isinstance(paths, ToolPath) else list(paths)


def _segment_table(paths):
    S = np.concatenate([p.segments() for p in paths])
    F = np.concatenate([p.segment_faces for p in paths])
    return S, F


def _correspond(p1, t, segs, sfaces, cone_deg=CONE_DEG):
    """Nearest point of the other path in the plane through ``p1`` normal to
    ``t``; falls back to the nearest segment end within the cone."""
    a, b = segs[:, 0], segs[:, 1]
    da, db = (a - p1) @ t, (b - p1) @ t
    hit = (da * db <= 0) & (da != db)
    if hit.any():
        w = da[hit] / (da[hit] - db[hit])
        q = a[hit] + w[:, None] * (b[hit] - a[hit])
        j = int(np.argmin(np.linalg.norm(q - p1, axis=1)))
        return q[j], int(sfaces[hit][j])
    d = a - p1
    dist = np.linalg.norm(d, axis=1)
    ok = np.abs(d @ t) <= math.sin(math.radians(cone_deg)) * dist
    if not ok.any():
        return None, None
    j = int(np.flatnonzero(ok)[np.argmin(dist[ok])])
    return a[j], int(sfaces[j])


def scallop_oracle(
    mesh: TriMesh,
    curv: CurvatureField,
    cutter: CutterSpec,
    path_a,
    path_b,
    samples: int = 64,
    seed: int = DEFAULT_SEED,
    model_curv: CurvatureField | None = None,
    rng=None,
) -> list:
    """Compare exact and modelled scallop heights between adjacent paths.

    ``curv`` is used for the section circle (the reference geometry) and
    ``model_curv`` (default ``curv``) for the closed-form estimate. Points on
    ``path_a`` are drawn uniformly by arc length. Samples with no
    corresponding point on ``path_b`` are skipped; samples where the cutting
    circles leave a gap raise :class:`NoIntersectionError`.
    """
    model_curv = curv if model_curv is None else model_curv
    rng = np.random.default_rng(seed) if rng is None else rng
    A = _as_list(path_a)
    segs_a, faces_a = _segment_table(A)
    segs_b, faces_b = _segment_table(_as_list(path_b))
    vec = segs_a[:, 1] - segs_a[:, 0]
    L = np.linalg.norm(vec, axis=1)
    cum = np.r_[0.0, np.cumsum(L)]
    r = effective_radius(cutter).radius
    out = []
    for u in rng.random(samples) * cum[-1]:
        i = int(np.clip(np.searchsorted(cum, u, side="right") - 1, 0, len(L) - 1))
        if L[i] == 0:
            continue
        f1 = int(faces_a[i])
        p1 = segs_a[i, 0] + (u - cum[i]) / L[i] * vec[i]
        n1 = curv.normals[f1]
        t = vec[i] - n1 * (vec[i] @ n1)
        t /= np.linalg.norm(t)
        p2, f2 = _correspond(p1, t, segs_b, faces_b)
        if p2 is None:
            continue
        b = np.cross(n1, t)
        k_true = float(curv.normal_curvatures(b[None], [f1])[0])
        k_model = float(model_curv.normal_curvatures(b[None], [f1])[0])
        s = float(np.linalg.norm(p2 - p1))
        sec = section_scallop(k_true, s, r, r)
        out.append(ScallopSample(p1, p2, f1, f2, k_true, k_model, r, r, s, sec.h_exact, model_scallop_height(k_model, s, r, r)))
    return out


def adjacent_pairs(paths) -> list:
    """Pairs ``(pieces at level i, pieces at level i+1)`` within each patch."""
    by_patch = {}
    for p in paths:
        by_patch.setdefault(p.patch, {}).setdefault(p.level, []).append(p)
    pairs = []
    for patch in sorted(by_patch):
        levels = sorted(by_patch[patch])
        for lo, hi in zip(levels[:-1], levels[1:]):
            pairs.append((by_patch[patch][lo], by_patch[patch][hi]))
    return pairs


def scallop_study(
    mesh: TriMesh,
    curv: CurvatureField,
    cutter: CutterSpec,
    paths,
    n_samples: int = 500,
    seed: int = DEFAULT_SEED,
    model_curv: CurvatureField | None = None,
):
    """Collect ``n_samples`` seeded contact-point pairs over all adjacent
    path pairs (pairs chosen in proportion to their length) and run the
    oracle.

    Draws whose point has no partner on the adjacent path (path ends) are
    redrawn, up to ``10 * n_samples`` draws in total. Returns
    ``(samples, gaps)`` where ``gaps`` counts draws whose cutting circles
    failed to meet.
    """
    pairs = adjacent_pairs(paths)
    if not pairs:
        return [], 0
    rng = np.random.default_rng(seed)
    weights = np.array([sum(p.length for p in a) for a, _ in pairs])
    weights = weights / weights.sum()
    out, gaps = [], 0
    for _ in range(10 * int(n_samples)):
        if len(out) + gaps >= n_samples:
            break
        a, b = pairs[int(rng.choice(len(pairs), p=weights))]
        try:
            out.extend(scallop_oracle(mesh, curv, cutter, a, b, 1, model_curv=model_curv, rng=rng))
        except NoIntersectionError:
            gaps += 1
    return out, gaps


def scallop_stats(samples) -> dict:
    if not samples:
        return {"count": 0, "max": 0.0, "mean": 0.0, "p95": 0.0}
    e = np.array([s.rel_error for s in samples])
    return {"count": len(e), "max": float(e.max()), "mean": float(e.mean()), "p95": float(np.percentile(e, 95))}


# -- alignment, length and coverage ---------------------------------------
@dataclass
class AlignmentReport:
    count: int
    histogram: np.ndarray  # counts per 1 degree bin over [0, 90]
    max_angle: float
    mean_angle: float
    angles: np.ndarray = dc_field(repr=False, default=None)

    def to_json(self) -> dict:
        return {
            "count": int(self.count),
            "bins_deg": list(range(91)),
            "histogram": [int(x) for x in self.histogram],
            "max_deg": float(self.max_angle),
            "mean_deg": float(self.mean_angle),
        }


def alignment_report(paths, field: DirectionField, mesh: TriMesh | None = None) -> AlignmentReport:
    """Angle between each path segment and the feed direction of its face,
    folded into ``[0, 90]`` degrees."""
    paths = list(paths)
    if not paths:
        return AlignmentReport(0, np.zeros(90, np.int64), 0.0, 0.0, np.zeros(0))
    S, F = _segment_table(paths)
    t = S[:, 1] - S[:, 0]
    L = np.linalg.norm(t, axis=1)
    keep = L > 0
    t = t[keep] / L[keep, None]
    c = np.abs(np.einsum("ij,ij->i", t, field.directions[F[keep]]))
    ang = np.degrees(np.arccos(np.clip(c, 0.0, 1.0)))
    hist, _ = np.histogram(ang, bins=np.arange(91))
    return AlignmentReport(len(ang), hist, float(ang.max()), float(ang.mean()), ang)


def length_report(path_sets: dict) -> dict:
    """Total length per named set and the percentage by which each set is
    longer than each other one."""
    totals = {name: float(sum(p.length for p in paths)) for name, paths in path_sets.items()}
    names = list(totals)
    diffs = {}
    for a in names:
        for b in names:
            if a != b and totals[b] > 0:
                diffs[f"{a} vs {b}"] = 100.0 * (totals[a] - totals[b]) / totals[b]
    return {"totals": totals, "differences_pct": diffs, "paths": {n: len(p) for n, p in path_sets.items()}}


def format_length_table(report: dict) -> str:
    names = list(report["totals"])
    rows = [f"{'set':<24}{'paths':>8}{'length (mm)':>16}"]
    for n in names:
        rows.append(f"{n:<24}{report['paths'][n]:>8}{report['totals'][n]:>16.2f}")
    for k, v in report["differences_pct"].items():
        rows.append(f"{k:<40}{v:>+8.2f}%")
    return "\n".join(rows)


@dataclass
class CoverageReport:
    fraction: float
    strip_area_ratio: float  # sum of strip width x length over surface area
    n_samples: int

    def to_json(self) -> dict:
        return {"fraction": self.fraction, "strip_area_ratio": self.strip_area_ratio, "samples": self.n_samples}


def sample_surface(mesh: TriMesh, n, rng):
    """Uniform random points by area: (positions, faces)."""
    p = mesh.face_areas / mesh.face_areas.sum()
    f = rng.choice(mesh.n_faces, size=n, p=p)
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    P = mesh.vertices[mesh.faces[f]]
    return P[:, 0] + u[:, None] * (P[:, 1] - P[:, 0]) + v[:, None] * (P[:, 2] - P[:, 0]), f


def coverage_report(mesh: TriMesh, paths, cutter: CutterSpec, curv: CurvatureField, h: float, n_samples=100_000, seed=DEFAULT_SEED) -> CoverageReport:
    """Fraction of random surface points lying within half a strip width of
    some path, with the width evaluated where the path is nearest."""
    paths = list(paths)
    if not paths:
        return CoverageReport(0.0, 0.0, int(n_samples))
    S, F = _segment_table(paths)
    vec = S[:, 1] - S[:, 0]
    L = np.linalg.norm(vec, axis=1)
    keep = L > 0
    S, F, vec, L = S[keep], F[keep], vec[keep], L[keep]
    n = curv.normals[F]
    across = np.cross(n, vec / L[:, None])
    k_s = curv.normal_curvatures(across, F)
    denom = k_s + 1.0 / effective_radius(cutter).radius
    half = np.where(denom > 0, np.sqrt(2.0 * h / np.maximum(denom, 1e-300)), 0.0)
    ratio = float(np.sum(2 * half * L) / mesh.total_area)
    # densify segments so point distance approximates segment distance
    step = max(float(half[half > 0].min()) / 50.0 if (half > 0).any() else float(L.mean()), 1e-9)
    reps = np.maximum(np.ceil(L / step).astype(int), 1)
    seg_id = np.repeat(np.arange(len(L)), reps)
    frac = (np.arange(reps.sum()) - np.repeat(np.cumsum(reps) - reps, reps) + 0.5) / np.repeat(reps, reps)
    pts = S[seg_id, 0] + frac[:, None] * vec[seg_id]
    tree = cKDTree(pts)
    rng = np.random.default_rng(seed)
    X, _ = sample_surface(mesh, int(n_samples), rng)
    dist, idx = tree.query(X)
    covered = dist <= half[seg_id[idx]]
    return CoverageReport(float(covered.mean()), ratio, int(n_samples))


# -- baselines ---------------------------------------------------------------
def baseline_axes(mesh: TriMesh):
    """The two principal axes of largest vertex spread, sign-fixed so their
    largest component is positive."""
    X = mesh.vertices - mesh.vertices.mean(axis=0)
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    axes = []
    for a in vt[:2]:
        axes.append(-a if a[np.argmax(np.abs(a))] < 0 else a)
    return axes


def planar_paths(mesh: TriMesh, curv: CurvatureField, cutter: CutterSpec, h: float, axis, samples: int = 64) -> list:
    """Iso-planar baseline: slices by planes normal to ``axis`` spaced with
    the same scallop-safe increment rule as the main pipeline."""
    a = np.asarray(axis, dtype=float)
    phi = mesh.vertices @ (a / np.linalg.norm(a))
    return extract_all(mesh, phi, schedule_levels(mesh, phi, curv, cutter, h, samples))


def zigzag_length(paths) -> float:
    """Length of the paths in level order plus the straight links joining
    the end of each pass to the nearer end of the next one."""
    order = sorted(paths, key=lambda p: (p.patch, p.level))
    total, end = 0.0, None
    for p in order:
        total += p.length
        P = p.positions
        if end is not None:
            d0, d1 = np.linalg.norm(P[0] - end), np.linalg.norm(P[-1] - end)
            total += float(min(d0, d1))
            end = P[-1] if (d0 <= d1 or p.closed) else P[0]
        else:
            end = P[-1]
        if p.closed:
            end = P[0]
    return float(total)
