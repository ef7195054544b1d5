"""Acceptance criteria 1-9, one test each.

Every test records a ``CRITERION n: PASS|FAIL`` line that is printed in the
terminal summary. Criteria that cannot be met as stated are computed
faithfully and marked as strict expected failures; the reason is in the
marker.
"""

import json
import math
import time

import numpy as np
import pytest

from conftest import BALL5, FLAT2
from helpers import lattice_disc, two_region_plane, uniform_field
from poissonpath.analysis_oracle import scallop_stats, scallop_study, zigzag_length
from poissonpath.cli import EXIT_OK, cmd_run
from poissonpath.errors import NoSeedError
from poissonpath.diff_ops import check_adjoint, divergence, face_gradient, laplacian
from poissonpath.feed_field import DirectionField, orient, preferred_directions, smooth_directions, transported_dots
from poissonpath.mesh_core import analytic_test_surface, estimate_curvature, write_obj
from poissonpath.path_extraction import extract_all, schedule_levels, total_length
from poissonpath.poisson_solver import (
    build_target_field,
    lsq_energy,
    solve_direction_only,
    solve_isoscallop_hard,
    solve_poisson,
    solve_smooth,
)
from poissonpath.segmentation import segment, similarity

M = 0.158114
FAST = {"coverage_samples": 2000, "scallop_samples": 100}


def record(log, n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    log.append(line)
    print(line)
    return ok


def pipeline_paths(mesh, curv, cutter, h):
    field = smooth_directions(orient(preferred_directions(mesh, curv, cutter, h), mesh), mesh)
    phi = solve_poisson(mesh, build_target_field(mesh, curv, cutter, field)).values
    return extract_all(mesh, phi, schedule_levels(mesh, phi, curv, cutter, h))


# 1 -------------------------------------------------------------------------------
def test_criterion_1_scallop_model_accuracy(acceptance_log):
    t0 = time.perf_counter()
    mesh, exact = analytic_test_surface("saddle", {"c": 20, "half_extent": 10}, 40)
    estimated = estimate_curvature(mesh)
    worst = {}
    for name, curv in (("analytic", exact), ("estimated", estimated)):
        for h in (0.01, 0.05, 0.1):
            paths = pipeline_paths(mesh, curv, FLAT2, h)
            samples, gaps = scallop_study(mesh, exact, FLAT2, paths, 500, seed=42, model_curv=curv)
            assert len(samples) == 500 and gaps == 0
            worst[name, h] = scallop_stats(samples)["max"]
    elapsed = time.perf_counter() - t0
    a = max(v for (n, _), v in worst.items() if n == "analytic")
    e = max(v for (n, _), v in worst.items() if n == "estimated")
    ok = a <= 0.04 and e <= 0.06 and elapsed < 60
    record(acceptance_log, 1, ok, f"max rel error analytic {a:.2%} (<= 4%), estimated {e:.2%} (<= 6%), {elapsed:.1f}s")
    assert ok


# 2 -------------------------------------------------------------------------------
@pytest.mark.xfail(
    strict=True,
    reason="with r = R the length ratio tends to sqrt(1 + r/R) = 1.414 < 1.5; measured 1.359 (1.424 with links)",
)
def test_criterion_2_cylinder_direction_economy(acceptance_log, tmp_path):
    t0 = time.perf_counter()
    cfg = {"surface": {"kind": "cylinder", "params": {"n_around": 64, "n_axial": 40}, "resolution": 64}, "h": 0.05, "output": str(tmp_path / "c"), **FAST}
    assert cmd_run(cfg) == EXIT_OK
    rings = json.loads((tmp_path / "c" / "paths.json").read_text())
    ring_ok = len(rings["paths"]) == 15 and all(p["closed"] for p in rings["paths"])
    circ = rings["total_length"]
    # axial feed on the same cylinder cut open along one generator
    mesh, curv = analytic_test_surface("cylinder", {"n_around": 64, "n_axial": 40, "open_seam": True}, 64)
    field = orient(DirectionField(np.tile([0.0, 0.0, 1.0], (mesh.n_faces, 1))), mesh)
    phi = solve_poisson(mesh, build_target_field(mesh, curv, BALL5, field)).values
    axial = extract_all(mesh, phi, schedule_levels(mesh, phi, curv, BALL5, 0.05))
    ratio = total_length(axial) / circ
    ratio_links = zigzag_length(axial) / circ
    elapsed = time.perf_counter() - t0
    ok = ring_ok and ratio >= 1.5 and elapsed < 60
    record(
        acceptance_log,
        2,
        ok,
        f"{len(rings['paths'])} closed rings {circ:.1f} mm; axial {len(axial)} lines {total_length(axial):.1f} mm; "
        f"ratio {ratio:.3f} ({ratio_links:.3f} with zig-zag links), needs >= 1.5; {elapsed:.1f}s",
    )
    assert ok


# 3 -------------------------------------------------------------------------------
def test_criterion_3_exact_solution_recovery(acceptance_log, plane):
    mesh, curv = plane
    psi = M * mesh.vertices[:, 0]
    phi = solve_poisson(mesh, face_gradient(mesh, psi)).values
    err = np.max(np.abs(phi - (psi - psi.mean())))
    paths = extract_all(mesh, phi, schedule_levels(mesh, phi, curv, BALL5, 0.05))
    xs = np.array([p.positions[:, 0].mean() for p in paths])
    straight = max(np.ptp(p.positions[:, 0]) for p in paths)
    spacing = np.diff(np.sort(xs))
    target = math.sqrt(0.05) / M
    dev = np.max(np.abs(spacing / target - 1))
    ok = err <= 1e-8 and straight < 1e-9 and dev <= 0.005
    record(acceptance_log, 3, ok, f"phi error {err:.1e}; {len(paths)} straight paths, spacing {spacing.mean():.5f} mm (target {target:.5f}, dev {dev:.1e})")
    assert ok


# 4 -------------------------------------------------------------------------------
def test_criterion_4_energy_optimality(acceptance_log, plane, cylinder, saddle):
    rng = np.random.default_rng(42)
    worst = np.inf
    for mesh, curv in (plane, cylinder, saddle):
        try:
            field = orient(preferred_directions(mesh, curv, BALL5, 0.05), mesh)
        except NoSeedError:  # the plane has no preferred direction anywhere
            field = orient(preferred_directions(mesh, curv, BALL5, 0.05), mesh, seeds=[0])
        V = build_target_field(mesh, curv, BALL5, field)
        phi = solve_poisson(mesh, V).values
        e0 = lsq_energy(mesh, phi, V)
        for scale in np.geomspace(1e-6, 1.0, 100):
            e = lsq_energy(mesh, phi + scale * rng.normal(size=len(phi)), V)
            worst = min(worst, e - e0)
    ok = worst >= -1e-14
    record(acceptance_log, 4, ok, f"300 perturbations on plane, cylinder, saddle; min E(perturbed) - E(solution) = {worst:.2e}")
    assert ok


# 5 -------------------------------------------------------------------------------
def ladder(errors):
    return float(np.min(np.array(errors[:-1]) / errors[1:]))


def test_criterion_5_operator_suite(acceptance_log):
    mesh, _ = analytic_test_surface("plane", {}, 10)
    inner = ~mesh.boundary_vertices
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    trivial = max(
        np.abs(laplacian(mesh, 0.3 * x - 1.1 * y + 2)[inner]).max(),
        np.abs(laplacian(mesh, np.full(len(x), 4.0))).max(),
        np.abs(divergence(mesh, np.tile([0.3, -1.2, 0.0], (mesh.n_faces, 1)))[inner]).max(),
        np.abs(face_gradient(mesh, np.full(len(x), 4.0))).max(),
        np.abs(face_gradient(mesh, 0.3 * x - 1.1 * y) - [0.3, -1.1, 0.0]).max(),
    )
    adjoint = max(check_adjoint(analytic_test_surface(k, {}, 10)[0], trials=100).max_residual for k in ("plane", "cylinder", "saddle"))
    lap_err, div_err, grad_err = [], [], []
    for h in (1.0, 0.5, 0.25, 0.125):
        disc = lattice_disc(h)
        dx, dy = disc.vertices[:, 0], disc.vertices[:, 1]
        keep = ~disc.boundary_vertices & (np.hypot(dx, dy) < 4)
        c = disc.face_centroids
        lap_err.append(np.abs(laplacian(disc, np.sin(dx) * np.cos(dy)) + 2 * np.sin(dx) * np.cos(dy))[keep].max())
        dv = divergence(disc, np.c_[np.sin(c[:, 0]), np.cos(c[:, 1]), np.zeros(len(c))])
        div_err.append(np.abs(dv - (np.cos(dx) - np.sin(dy)))[keep].max())
    for n in (8, 16, 32, 64):
        sq, _ = analytic_test_surface("plane", {"width": 4, "height": 4}, n)
        c = sq.face_centroids
        g = face_gradient(sq, np.sin(sq.vertices[:, 0]) * np.cos(sq.vertices[:, 1]))
        exact = np.c_[np.cos(c[:, 0]) * np.cos(c[:, 1]), -np.sin(c[:, 0]) * np.sin(c[:, 1])]
        grad_err.append(np.abs(g[:, :2] - exact).max())
    ratios = {"laplacian": ladder(lap_err), "divergence": ladder(div_err), "gradient": ladder(grad_err)}
    ok = trivial < 1e-8 and adjoint < 1e-8 and min(ratios.values()) >= 1.8
    detail = ", ".join(f"{k} {v:.2f}" for k, v in ratios.items())
    record(acceptance_log, 5, ok, f"trivial identities {trivial:.1e}; adjoint residual {adjoint:.1e}; min ladder ratios {detail}")
    assert ok


# 6 -------------------------------------------------------------------------------
@pytest.mark.xfail(
    strict=True,
    reason="stated constants are arithmetic slips: exp(-1/(2*0.67^2)) = 0.3282979 and exp(-4/(2*0.67^2)) = 0.0116164",
)
def test_criterion_6_orientation_and_segmentation(acceptance_log, cylinder, saddle):
    rng = np.random.default_rng(42)
    worst_dot = np.inf
    for mesh, curv in (cylinder, saddle):
        field = preferred_directions(mesh, curv, BALL5, 0.05)
        flips = np.where(rng.random(mesh.n_faces) < 0.5, -1.0, 1.0)[:, None]
        scrambled = DirectionField(field.directions * flips, field.singular, field.gouge)
        worst_dot = min(worst_dot, transported_dots(mesh, orient(scrambled, mesh)).min())
    orient_ok = worst_dot > 0

    mesh, _, field, left = two_region_plane(20, 4)
    seg = segment(mesh, field)
    A = mesh.face_adjacency().tocoo()
    cross = left[A.row] != left[A.col]
    ring = set(A.row[cross]) | set(A.col[cross])
    agree = seg.labels == seg.labels[np.flatnonzero(left)[0]]
    wrong = set(np.flatnonzero(agree != left))
    seg_ok = seg.k == 2 and wrong <= ring

    x, y, z = [1.0, 0, 0], [0, 1.0, 0], [-1.0, 0, 0]
    s_orth, s_opp = float(similarity(x, y, 0.67)), float(similarity(x, z, 0.67))
    const_ok = abs(s_orth - 0.32836) <= 1e-5 and abs(s_opp - 0.011628) <= 1e-5
    ok = orient_ok and seg_ok and const_ok
    record(
        acceptance_log,
        6,
        ok,
        f"orient min transported dot {worst_dot:.3f} ({'ok' if orient_ok else 'bad'}); "
        f"two-region k={seg.k}, {len(wrong)} faces off, all in seam ring: {wrong <= ring}; "
        f"similarity {s_orth:.7f} vs 0.32836, {s_opp:.7f} vs 0.011628 ({'ok' if const_ok else 'off by more than 1e-5'})",
    )
    assert ok


# 7 -------------------------------------------------------------------------------
def test_criterion_7_appendix_variants(acceptance_log, plane):
    mesh, curv = plane
    field = uniform_field(mesh)
    V = build_target_field(mesh, curv, BALL5, field)
    ref = solve_poisson(mesh, V).values
    smooth_err = np.max(np.abs(solve_smooth(mesh, V, 0.0).values - ref))
    d = solve_direction_only(mesh, field)
    g = face_gradient(mesh, d.values)
    perp = np.max(np.abs(g @ np.array([1.0, 0.0, 0.0])))
    hard = solve_isoscallop_hard(mesh, field, curv, BALL5, max_outer=30, tol=1e-6).values
    hard_err = min(np.max(np.abs(hard - ref)), np.max(np.abs(hard + ref)))
    ok = smooth_err <= 1e-8 and d.info["eigenvalue"] < 1e-10 and perp <= 1e-6 and hard_err <= 1e-6
    record(
        acceptance_log,
        7,
        ok,
        f"smooth(0) vs poisson {smooth_err:.1e}; direction-only mu {d.info['eigenvalue']:.1e}, |D.grad| {perp:.1e}; ALM vs poisson {hard_err:.1e}",
    )
    assert ok


# 8 -------------------------------------------------------------------------------
def test_criterion_8_report_generator(acceptance_log, tmp_path):
    # reference path lengths and alignment histograms on industrial parts need
    # meshes that are not available; the substitute is a comparison report
    # for any user-supplied mesh
    mesh, _ = analytic_test_surface("saddle", {}, 24)
    write_obj(tmp_path / "part.obj", mesh)
    cfg = {"mesh": str(tmp_path / "part.obj"), "cutter": {"kind": "flat", "radius": 2.0, "inclination": 30.0}, "h": 0.1, "output": str(tmp_path / "o"), **FAST}
    assert cmd_run(cfg) == EXIT_OK
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    sets = report["lengths"]["totals"]
    table = report["length_table"]
    ok = len(sets) >= 2 and "this run vs" in table and sum(report["alignment"]["histogram"]) == report["alignment"]["count"] > 0
    record(
        acceptance_log,
        8,
        ok,
        "reference lengths and histograms on industrial parts need unavailable meshes (not reproducible); "
        f"substitute report generator on a supplied OBJ compares {len(sets)} path sets: "
        + "; ".join(f"{k} {v:.1f} mm" for k, v in sets.items()),
    )
    assert ok


# 9 -------------------------------------------------------------------------------
def test_criterion_9_determinism(acceptance_log, tmp_path):
    base = {"surface": {"kind": "saddle", "resolution": 20}, "seed": 42, **FAST}
    outs = []
    for name in ("a", "b"):
        assert cmd_run({**base, "output": str(tmp_path / name)}) == EXIT_OK
        outs.append({f: (tmp_path / name / f).read_bytes() for f in ("paths.json", "report.json")})
    ok = outs[0] == outs[1]
    record(acceptance_log, 9, ok, "paths.json and report.json byte-identical across two runs" if ok else "artifacts differ")
    assert ok
