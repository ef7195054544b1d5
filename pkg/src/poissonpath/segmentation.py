"""Patch segmentation of a direction field.

Neighbouring faces are weighted by how similar their feed directions are,
the face graph is embedded on a line with Laplacian Eigenmaps and the line is
clustered with K-Means. Small disconnected pieces are merged afterwards so
every patch is one edge-connected region.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import DisconnectedGraphError, EigenSolveError, InvalidKError
from .feed_field import DirectionField, _apply, _edge_rotations
from .mesh_core.mesh import TriMesh

logger = logging.getLogger(__name__)

DEFAULT_SIGMA = 0.67
ZERO_EIG = 1e-9
DENSE_LIMIT = 2000
SILHOUETTE_MIN = 0.6
K_MAX = 8
CUT_CONTRAST = 0.75
MIN_PATCH_FRACTION = 0.01


@dataclass
class SegmentationResult:
    labels: np.ndarray  # per face, 0..k-1
    embedding: np.ndarray  # per face
    k: int
    sigma: float

    def patch_faces(self, label) -> np.ndarray:
        return np.flatnonzero(self.labels == label)

    def to_json(self) -> dict:
        return {
            "k": int(self.k),
            "sigma": float(self.sigma),
            "labels": {str(i): int(v) for i, v in enumerate(self.labels)},
            "embedding": {str(i): float(v) for i, v in enumerate(self.embedding)},
        }

    @classmethod
    def from_json(cls, payload) -> "SegmentationResult":
        labels = payload["labels"]
        emb = payload["embedding"]
        n = len(labels)
        lab = np.array([labels[str(i)] for i in range(n)], dtype=np.int64)
        e = np.array([emb[str(i)] for i in range(n)], dtype=float)
        return cls(lab, e, int(payload["k"]), float(payload["sigma"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, sort_keys=True)


def similarity(d1, d2, sigma=DEFAULT_SIGMA):
    """``exp(-(1 - d1.d2)^2 / (2 sigma^2))``; works row-wise on arrays."""
    dot = np.sum(np.asarray(d1, dtype=float) * np.asarray(d2, dtype=float), axis=-1)
    return np.exp(-((1.0 - dot) ** 2) / (2.0 * sigma * sigma))


def similarity_graph(mesh: TriMesh, field: DirectionField, sigma=DEFAULT_SIGMA) -> sparse.csr_matrix:
    """Face-adjacency weights, comparing directions after transport across
    the shared edge."""
    ie = mesh.interior_edges
    f, g = mesh.edge_faces[ie, 0], mesh.edge_faces[ie, 1]
    t = _apply(mesh, _edge_rotations(mesh, ie, f, g), g, field.directions[f])
    w = similarity(t, field.directions[g], sigma)
    m = mesh.n_faces
    return sparse.csr_matrix((np.r_[w, w], (np.r_[f, g], np.r_[g, f])), shape=(m, m))


def _fix_sign(u):
    k = int(np.argmax(np.abs(u)))
    return -u if u[k] < 0 else u


def eigenmap_embed(mesh: TriMesh, field: DirectionField, sigma=DEFAULT_SIGMA) -> np.ndarray:
    """One-dimensional Laplacian Eigenmaps coordinates, one per face.

    Solves ``L u = mu Deg u`` with ``L = Deg - W`` and returns the eigenvector
    of the smallest ``mu > 1e-9``, scaled so ``u' Deg u = 1`` and signed so
    its largest-magnitude entry is positive.
    """
    W = similarity_graph(mesh, field, sigma)
    m = mesh.n_faces
    deg = np.asarray(W.sum(axis=1)).ravel()
    if m < 2 or np.any(deg <= 0):
        raise EigenSolveError("face graph has isolated faces; no non-trivial embedding exists")
    n_mesh, _ = mesh.face_components()
    n_graph, _ = csgraph.connected_components(W > 0, directed=False)
    if n_graph > n_mesh:
        raise DisconnectedGraphError(
            f"similarity graph splits into {n_graph} components (mesh has {n_mesh})"
        )
    L = sparse.diags(deg) - W
    k = n_mesh + 1
    if m <= DENSE_LIMIT:
        mu, U = scipy.linalg.eigh(L.toarray(), np.diag(deg), subset_by_index=[0, min(k, m) - 1])
    else:
        try:
            v0 = np.linspace(1.0, 2.0, m)
            mu, U = eigsh(L.tocsc(), k=min(k, m - 1), M=sparse.diags(deg).tocsc(), sigma=-1e-3, which="LM", v0=v0)
        except ArpackNoConvergence as exc:
            raise EigenSolveError(f"eigensolver did not converge: {exc}") from None
        order = np.argsort(mu)
        mu, U = mu[order], U[:, order]
    nonzero = np.flatnonzero(mu > ZERO_EIG)
    if len(nonzero) == 0:
        raise EigenSolveError("no non-zero generalised eigenvalue found")
    if nonzero[0] > n_mesh:
        raise DisconnectedGraphError("more zero eigenvalues than mesh components")
    u = U[:, nonzero[0]]
    u = u / np.sqrt(u @ (deg * u))
    return _fix_sign(u)


def kmeans_1d(points, k, max_iter=300) -> np.ndarray:
    """Lloyd iteration on the line from the ``k`` quantile seeds.

    Labels are ordered by cluster centre.
    """
    x = np.asarray(points, dtype=float).ravel()
    k = int(k)
    if k < 1 or k > len(x):
        raise InvalidKError(f"k={k} must satisfy 1 <= k <= {len(x)}")
    centers = np.quantile(x, (np.arange(k) + 0.5) / k)
    labels = None
    for _ in range(max_iter):
        new = np.argmin(np.abs(x[:, None] - centers[None, :]), axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            sel = labels == c
            if sel.any():
                centers[c] = x[sel].mean()
    order = np.argsort(centers, kind="stable")
    rank = np.empty(k, dtype=np.int64)
    rank[order] = np.arange(k)
    return rank[labels]


def _sum_abs_dist(x, sorted_c, prefix):
    """``sum_j |x_i - c_j|`` for every x_i against one sorted cluster."""
    idx = np.searchsorted(sorted_c, x)
    total = prefix[-1]
    left = prefix[idx]
    return x * idx - left + (total - left) - x * (len(sorted_c) - idx)


def silhouette_1d(points, labels) -> float:
    """Mean silhouette coefficient with absolute distance, O(n k log n)."""
    x = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if len(uniq) < 2:
        return 0.0
    dists = np.empty((len(x), len(uniq)))
    sizes = np.empty(len(uniq))
    for j, c in enumerate(uniq):
        sc = np.sort(x[labels == c])
        prefix = np.r_[0.0, np.cumsum(sc)]
        dists[:, j] = _sum_abs_dist(x, sc, prefix)
        sizes[j] = len(sc)
    own = np.searchsorted(uniq, labels)
    own_size = sizes[own]
    a = np.where(own_size > 1, dists[np.arange(len(x)), own] / np.maximum(own_size - 1, 1), 0.0)
    mean_other = dists / sizes[None, :]
    mean_other[np.arange(len(x)), own] = np.inf
    b = mean_other.min(axis=1)
    s = np.where(own_size > 1, (b - a) / np.maximum(np.maximum(a, b), 1e-300), 0.0)
    return float(s.mean())


def _cut_contrast(W, labels):
    """Mean weight of edges cut by ``labels`` over mean weight of uncut edges."""
    C = W.tocoo()
    cut = labels[C.row] != labels[C.col]
    if not cut.any():
        return np.inf
    if cut.all():
        return 0.0
    return float(C.data[cut].mean() / C.data[~cut].mean())


def choose_k(embedding, W, k_max=K_MAX, threshold=SILHOUETTE_MIN, contrast=CUT_CONTRAST) -> int:
    """Smallest ``k`` in ``2..k_max`` whose clustering scores a silhouette
    above ``threshold`` and whose cut edges are clearly weaker than the
    uncut ones; otherwise 1."""
    n = len(embedding)
    for k in range(2, min(k_max, n) + 1):
        labels = kmeans_1d(embedding, k)
        if len(np.unique(labels)) < k:
            continue
        score = silhouette_1d(embedding, labels)
        ratio = _cut_contrast(W, labels)
        logger.debug("k=%d silhouette=%.3f cut contrast=%.3f", k, score, ratio)
        if score > threshold and ratio < contrast:
            return k
    return 1


def repair_connectivity(mesh: TriMesh, labels, min_fraction=MIN_PATCH_FRACTION) -> np.ndarray:
    """Split labels into edge-connected patches and merge tiny ones.

    Components with fewer than ``min_fraction`` of all faces join their
    largest neighbouring component. Returned labels are consecutive, ordered
    by the lowest face index of each patch.
    """
    labels = np.asarray(labels).copy()
    A = mesh.face_adjacency().tocoo()
    m = mesh.n_faces
    min_size = min_fraction * m
    while True:
        same = labels[A.row] == labels[A.col]
        G = sparse.csr_matrix((np.ones(same.sum()), (A.row[same], A.col[same])), shape=(m, m))
        n_comp, comp = csgraph.connected_components(G, directed=False)
        sizes = np.bincount(comp, minlength=n_comp)
        small = [c for c in np.argsort(sizes, kind="stable") if sizes[c] < min_size]
        merged = False
        for c in small:
            members = comp == c
            border = members[A.row] & ~members[A.col]
            nb = np.unique(comp[A.col[border]])
            if len(nb) == 0:
                continue
            target = nb[np.argmax(sizes[nb])]
            comp[members] = target
            sizes[target] += sizes[c]
            sizes[c] = 0
            merged = True
            break
        labels = comp
        if not merged:
            break
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = {int(labels[first[o]]): i for i, o in enumerate(order)}
    return np.array([remap[int(l)] for l in labels], dtype=np.int64)


def segment(mesh: TriMesh, field: DirectionField, sigma=DEFAULT_SIGMA, k=None) -> SegmentationResult:
    """Embed, cluster and clean up; ``k=None`` picks the cluster count."""
    if mesh.n_faces < 2:
        return SegmentationResult(np.zeros(mesh.n_faces, np.int64), np.zeros(mesh.n_faces), 1, sigma)
    emb = eigenmap_embed(mesh, field, sigma)
    W = similarity_graph(mesh, field, sigma)
    if k is None:
        k = choose_k(emb, W)
    labels = kmeans_1d(emb, k)
    labels = repair_connectivity(mesh, labels)
    k_final = int(labels.max()) + 1
    logger.info("segmented into %d patches (k=%d requested)", k_final, k)
    return SegmentationResult(labels, emb, k_final, sigma)
