"""Target gradient field and the scalar-field solves.

The main solve fits ``grad(phi)`` to a target field ``V`` in least squares,
whose normal equations are the cotangent Poisson problem
``stiffness @ phi = mass * div(V)``. Three variants trade the plain fit for
extra smoothness, for a pure alignment objective, or for hard per-face
gradient-magnitude constraints.

Sign and scale conventions follow :mod:`poissonpath.diff_ops`; internally the
positive semi-definite matrix ``S = -stiffness`` is used, for which
``sum_f area_f |grad phi_f|^2 = phi' S phi / 2``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, cg, eigsh, splu

from .diff_ops import assemble_laplacian, face_gradient, gradient_operator, integrated_divergence
from .errors import (
    DisconnectedMeshError,
    EigenSolveError,
    InvalidParamError,
    NoConvergenceError,
    SolveError,
)
from .feed_field import CutterSpec, DirectionField, magnitude_field
from .mesh_core.curvature import CurvatureField
from .mesh_core.mesh import TriMesh

logger = logging.getLogger(__name__)

RESIDUAL_RTOL = 1e-8
CG_RTOL = 1e-10
DIRECT_LIMIT = 400_000
DENSE_EIG_LIMIT = 3000
PENALTY_CAP = 1e6


@dataclass(frozen=True)
class TargetVectorField:
    """Per-face target gradient ``m_f * (n_f x d_f)`` (1/sqrt(mm))."""

    vectors: np.ndarray  # (m, 3)
    magnitudes: np.ndarray  # (m,)

    def __len__(self):
        return len(self.vectors)

    def take(self, face_ids) -> "TargetVectorField":
        idx = np.asarray(face_ids)
        return TargetVectorField(self.vectors[idx], self.magnitudes[idx])


@dataclass(frozen=True)
class ScalarField:
    """Per-vertex scalar values and the solve that produced them."""

    values: np.ndarray
    variant: str
    info: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise SolveError(f"{self.variant} solve produced non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)

    def to_json(self) -> dict:
        return {"variant": self.variant, "values": [float(x) for x in self.values]}


def _vectors(V) -> np.ndarray:
    return np.asarray(V.vectors if isinstance(V, TargetVectorField) else V, dtype=float)


def build_target_field(mesh: TriMesh, curv: CurvatureField, cutter: CutterSpec, field: DirectionField) -> TargetVectorField:
    """Rotate each feed direction by 90 degrees and scale it by the target
    gradient magnitude; raises ``GougeError`` if any face gouges."""
    m = magnitude_field(mesh, curv, cutter, field)
    rot = np.cross(mesh.face_normals, field.directions)
    rot /= np.linalg.norm(rot, axis=1, keepdims=True)
    return TargetVectorField(rot * m[:, None], m)


# -- helpers ---------------------------------------------------------------
def _components(mesh: TriMesh):
    n_comp, labels = mesh.vertex_components()
    return [np.flatnonzero(labels == c) for c in range(n_comp)]


def _gauge_rows(mesh: TriMesh):
    """Sparse (c, n) matrix whose rows sum the vertices of each component."""
    comps = _components(mesh)
    rows = np.concatenate([np.full(len(c), i) for i, c in enumerate(comps)])
    cols = np.concatenate(comps)
    return sparse.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(len(comps), mesh.n_vertices)), comps


def _solve_gauged(A, b, mesh: TriMesh, method="auto"):
    """Solve the symmetric semi-definite system ``A x = b`` whose nullspace
    is the per-component constants, returning the per-component mean-zero
    solution."""
    C, comps = _gauge_rows(mesh)
    n = A.shape[0]
    if method == "auto":
        method = "direct" if n <= DIRECT_LIMIT else "cg"
    if method == "direct":
        kkt = sparse.bmat([[A, C.T], [C, None]], format="csc")
        try:
            x = splu(kkt).solve(np.r_[b, np.zeros(len(comps))])[:n]
        except RuntimeError as exc:
            raise SolveError(f"factorisation failed: {exc}") from None
    elif method == "cg":
        # project the right-hand side onto the range, then CG on the
        # semi-definite system stays in the mean-zero subspace
        b = b.copy()
        for c in comps:
            b[c] -= b[c].mean()
        diag = A.diagonal()
        pre = sparse.diags(1.0 / np.where(diag > 0, diag, 1.0))
        x, status = cg(A, b, rtol=CG_RTOL, atol=0.0, maxiter=20 * n, M=pre)
        if status != 0:
            raise SolveError(f"conjugate gradients stopped with status {status}")
    else:
        raise InvalidParamError(f"unknown solve method {method!r}")
    for c in comps:
        x[c] -= x[c].mean()
    return x


def _mass_norm(mass, v):
    return float(np.sqrt(np.sum(mass * v * v)))


# -- main solve ------------------------------------------------------------
def solve_poisson(mesh: TriMesh, V, method="auto", per_component=True, operators=None) -> ScalarField:
    """Least-squares fit of ``grad(phi)`` to ``V``.

    Parameters
    ----------
    mesh : TriMesh
    V : TargetVectorField or (m, 3) array
    method : {"auto", "direct", "cg"}
        Direct LU of the bordered system, or Jacobi-preconditioned CG.
    per_component : bool
        Solve each connected component independently (each gets its own
        mean-zero gauge). With ``False`` a disconnected mesh is an error.

    Returns
    -------
    ScalarField
        ``info`` holds the relative mass-norm residual of
        ``Laplacian(phi) - div(V)``.
    """
    n_comp, _ = mesh.vertex_components()
    if n_comp > 1 and not per_component:
        raise DisconnectedMeshError(f"mesh has {n_comp} connected components")
    K, mass = operators if operators is not None else assemble_laplacian(mesh)
    rhs_int = integrated_divergence(mesh, _vectors(V))
    S = (-K).tocsc()
    phi = _solve_gauged(S, -2.0 * rhs_int, mesh, method)
    div = 2.0 * rhs_int / mass
    scale = _mass_norm(mass, div)
    res = _mass_norm(mass, (K @ phi) / mass - div)
    rel = 0.0 if scale == 0 else res / scale
    if rel > RESIDUAL_RTOL:
        raise SolveError(f"Poisson residual {rel:.3g} exceeds {RESIDUAL_RTOL:g}")
    logger.debug("poisson solve on %d vertices, residual %.2e", mesh.n_vertices, rel)
    return ScalarField(phi, "poisson", {"residual": rel, "components": n_comp})


def interior_laplacian_norm(mesh: TriMesh, phi, operators=None) -> float:
    """``sqrt(sum_i A_i Lap(phi)_i^2)`` over interior vertices."""
    K, mass = operators if operators is not None else assemble_laplacian(mesh)
    lap = (K @ np.asarray(phi, dtype=float)) / mass
    keep = np.ones(mesh.n_vertices, bool)
    keep[mesh.boundary_vertices] = False
    return float(np.sqrt(np.sum(0.5 * mass[keep] * lap[keep] ** 2)))


def solve_smooth(mesh: TriMesh, V, weight: float, method="auto") -> ScalarField:
    """Minimise ``int |grad phi - V|^2 + weight * int |Lap phi|^2``.

    The Laplacian penalty is taken over interior vertices only: at the
    boundary the discrete Laplacian carries the one-sided Neumann flux and
    would penalise even linear functions. The normal equations are
    ``(S + weight * S P M^-1 P S) phi = -mass * div(V)`` with ``P`` the
    interior mask and ``M`` the doubled vertex areas.
    """
    if not weight >= 0:
        raise InvalidParamError(f"smoothing weight must be >= 0, got {weight}")
    K, mass = assemble_laplacian(mesh)
    S = (-K).tocsr()
    keep = np.ones(mesh.n_vertices)
    keep[mesh.boundary_vertices] = 0.0
    A = S + weight * (S @ sparse.diags(keep / mass) @ S)
    rhs = -2.0 * integrated_divergence(mesh, _vectors(V))
    phi = _solve_gauged(A.tocsc(), rhs, mesh, method)
    return ScalarField(
        phi,
        "smooth",
        {"weight": float(weight), "laplacian_norm": interior_laplacian_norm(mesh, phi, (K, mass))},
    )


# -- direction-only variant ------------------------------------------------
def _directional_operator(mesh: TriMesh, directions) -> sparse.csr_matrix:
    """(m, n) matrix mapping vertex values to ``d_f . grad(phi)_f``."""
    G = gradient_operator(mesh)
    m = mesh.n_faces
    rows = np.repeat(np.arange(m), 3)
    cols = np.arange(3 * m)
    Dm = sparse.csr_matrix((np.asarray(directions, dtype=float).ravel(), (rows, cols)), shape=(m, 3 * m))
    return (Dm @ G).tocsr()


def _sign_gauge(x):
    nz = np.flatnonzero(np.abs(x) > 1e-12 * max(np.abs(x).max(), 1e-300))
    if len(nz) and x[nz[0]] < 0:
        return -x
    return x


def solve_direction_only(mesh: TriMesh, field: DirectionField) -> ScalarField:
    """Smallest generalised eigenvector of ``A u = mu B u``.

    ``A`` is the area-weighted form of ``(d . grad phi)^2`` and ``B`` the
    Dirichlet form ``int |grad phi|^2``. Constants are removed by dropping
    one vertex per connected component, which is exact since both forms
    vanish on constants. The result has mean zero, ``int |grad phi|^2 = 1``
    and a positive first non-zero entry; ``info['eigenvalue']`` is ``mu``.
    """
    area = sparse.diags(mesh.face_areas)
    DG = _directional_operator(mesh, field.directions)
    A = (DG.T @ area @ DG).tocsr()
    K, _ = assemble_laplacian(mesh)
    B = (-0.5 * K).tocsr()
    comps = _components(mesh)
    drop = np.array([c[0] for c in comps])
    keep = np.setdiff1d(np.arange(mesh.n_vertices), drop)
    Ar, Br = A[keep][:, keep], B[keep][:, keep]
    if len(keep) == 0:
        raise EigenSolveError("mesh has no non-constant functions")
    if len(keep) <= DENSE_EIG_LIMIT:
        try:
            mu, U = scipy.linalg.eigh(Ar.toarray(), Br.toarray(), subset_by_index=[0, 0])
        except np.linalg.LinAlgError as exc:
            raise EigenSolveError(f"dense generalised eigensolve failed: {exc}") from None
    else:
        try:
            v0 = np.linspace(1.0, 2.0, len(keep))
            mu, U = eigsh(Ar.tocsc(), k=1, M=Br.tocsc(), sigma=-1e-6, which="LM", v0=v0)
        except (ArpackNoConvergence, RuntimeError) as exc:
            raise EigenSolveError(f"sparse generalised eigensolve failed: {exc}") from None
    phi = np.zeros(mesh.n_vertices)
    phi[keep] = U[:, 0]
    for c in comps:
        phi[c] -= phi[c].mean()
    phi /= np.sqrt(phi @ (B @ phi))
    phi = _sign_gauge(phi)
    return ScalarField(phi, "direction_only", {"eigenvalue": float(mu[0])})


# -- hard-constraint variant -----------------------------------------------
def _face_norms(mesh, phi):
    return np.linalg.norm(face_gradient(mesh, phi), axis=1)


def solve_isoscallop_hard(
    mesh: TriMesh,
    field: DirectionField,
    curv: CurvatureField,
    cutter: CutterSpec,
    max_outer: int = 30,
    tol: float = 1e-6,
    penalty: float = 10.0,
) -> ScalarField:
    """Minimise ``int (d . grad phi)^2`` with ``|grad phi_f| = m_f`` per face
    by an augmented Lagrangian.

    Each inner step replaces ``|g_f|`` by ``u_f . g_f`` with ``u_f`` the
    current unit gradient (initially ``n_f x d_f``), which makes the inner
    problem a linear solve. Multipliers follow ``lambda -= rho * c`` and the
    penalty doubles up to ``1e6``. The run stops once the worst relative
    constraint violation is at most ``tol``; otherwise
    :class:`NoConvergenceError` carries the best iterate.
    """
    mags = magnitude_field(mesh, curv, cutter, field)
    area = mesh.face_areas
    G = gradient_operator(mesh)
    m = mesh.n_faces
    DG = _directional_operator(mesh, field.directions)
    A_align = 2.0 * (DG.T @ sparse.diags(area) @ DG)
    u = np.cross(mesh.face_normals, field.directions)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    lam = np.zeros(m)
    rho = float(penalty)
    best, best_v = None, np.inf
    history = []
    for it in range(max(1, int(max_outer))):
        U = _directional_operator(mesh, u)
        lhs = A_align + rho * (U.T @ sparse.diags(area) @ U)
        rhs = U.T @ (area * (lam + rho * mags))
        phi = _solve_gauged(lhs.tocsc(), rhs, mesh)
        g = (G @ phi).reshape(m, 3)
        norm = np.linalg.norm(g, axis=1)
        c = norm - mags
        violation = float(np.max(np.abs(c) / mags))
        history.append(violation)
        logger.info("ALM iteration %d: violation %.3e, penalty %.3g", it, violation, rho)
        if violation < best_v:
            best, best_v = phi, violation
        if violation <= tol:
            break
        lam = lam - rho * c
        rho = min(2.0 * rho, PENALTY_CAP)
        ok = norm > 1e-12
        u[ok] = g[ok] / norm[ok, None]
    info = {"violation": best_v, "iterations": len(history), "history": history}
    result = ScalarField(best, "isoscallop_hard", info)
    if best_v > tol:
        raise NoConvergenceError(
            f"constraint violation {best_v:.3g} after {len(history)} iterations exceeds {tol:g}",
            best=result,
            violation=best_v,
            history=history,
        )
    return result


# -- energies --------------------------------------------------------------
@dataclass(frozen=True)
class EnergyReport:
    align: float  # sum area (d . grad phi)^2
    scallop: float  # sum area (|grad phi| - m)^2
    lsq: float  # sum area |grad phi - V|^2

    def to_json(self) -> dict:
        return {"E_align": self.align, "E_scallop": self.scallop, "E_lsq": self.lsq}


def lsq_energy(mesh: TriMesh, phi, V) -> float:
    g = face_gradient(mesh, phi)
    return float(np.sum(mesh.face_areas * np.sum((g - _vectors(V)) ** 2, axis=1)))


def energy_report(mesh: TriMesh, phi, V, field: DirectionField, curv: CurvatureField, cutter: CutterSpec) -> EnergyReport:
    """Alignment, scallop and least-squares energies of ``phi``."""
    values = phi.values if isinstance(phi, ScalarField) else np.asarray(phi, dtype=float)
    g = face_gradient(mesh, values)
    a = mesh.face_areas
    mags = V.magnitudes if isinstance(V, TargetVectorField) else magnitude_field(mesh, curv, cutter, field)
    align = float(np.sum(a * np.einsum("ij,ij->i", field.directions, g) ** 2))
    scallop = float(np.sum(a * (np.linalg.norm(g, axis=1) - mags) ** 2))
    return EnergyReport(align, scallop, lsq_energy(mesh, values, V))
