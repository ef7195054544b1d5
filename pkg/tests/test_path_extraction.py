import math

import numpy as np
import pytest

from conftest import BALL5
from helpers import two_region_plane
from poissonpath.errors import DegenerateFieldError, OutOfRangeError
from poissonpath.mesh_core import analytic_test_surface
from poissonpath.path_extraction import (
    LevelSchedule,
    ToolPath,
    extract_all,
    extract_iso_curve,
    level_increment,
    schedule_levels,
    total_length,
)
from poissonpath.poisson_solver import solve_poisson
from poissonpath.segmentation import segment

M_PLANE = math.sqrt(0.2 / 8)
SIDE_STEP = math.sqrt(0.05) * 2 * math.sqrt(2 / 0.2)  # 1.41421 mm


def interp(mesh, phi, path):
    return np.einsum("ij,ij->i", path.bary, phi[mesh.faces[path.faces]])


# -- marching triangles ------------------------------------------------------------
def test_plane_straight_line(plane):
    mesh, _ = plane
    phi = mesh.vertices[:, 0] / 10.0
    paths = extract_iso_curve(mesh, phi, 0.05)
    assert len(paths) == 1 and not paths[0].closed
    assert np.max(np.abs(paths[0].positions[:, 0] - 0.5)) < 1e-9
    assert paths[0].length == pytest.approx(10.0, abs=1e-9)


def test_cylinder_ring_circumference(cylinder):
    mesh, _ = cylinder
    z = mesh.vertices[:, 2]
    paths = extract_iso_curve(mesh, z, 10.25)
    assert len(paths) == 1 and paths[0].closed
    assert paths[0].length == pytest.approx(2 * math.pi * 5, rel=5e-3)


def test_two_bumps_two_loops():
    mesh, _ = analytic_test_surface("plane", {"width": 20, "height": 10}, 40)
    P = mesh.vertices
    phi = np.exp(-np.sum((P[:, :2] - [5, 5]) ** 2, 1)) + np.exp(-np.sum((P[:, :2] - [15, 5]) ** 2, 1))
    paths = extract_iso_curve(mesh, phi, 0.5)
    assert len(paths) == 2 and all(p.closed for p in paths)
    centres = sorted(p.positions[:, 0].mean() for p in paths)
    assert centres == pytest.approx([5, 15], abs=0.05)


def test_out_of_range(plane):
    mesh, _ = plane
    phi = mesh.vertices[:, 0]
    with pytest.raises(OutOfRangeError):
        extract_iso_curve(mesh, phi, 10.5)
    with pytest.raises(OutOfRangeError):
        extract_iso_curve(mesh, phi, -0.1)


def test_level_at_vertex_value_is_nudged(plane):
    mesh, _ = plane
    phi = mesh.vertices[:, 0]
    paths = extract_iso_curve(mesh, phi, 5.0)  # runs through a vertex column
    assert len(paths) == 1
    assert paths[0].level == 5.0
    assert np.max(np.abs(paths[0].positions[:, 0] - 5.0)) < 1e-9
    assert paths[0].length == pytest.approx(10.0, abs=1e-9)


def test_points_on_level(saddle, rng):
    mesh, _ = saddle
    phi = np.sin(mesh.vertices[:, 0] / 3) + 0.3 * mesh.vertices[:, 1] + 0.01 * rng.normal(size=mesh.n_vertices)
    span = np.ptp(phi)
    for level in np.linspace(phi.min(), phi.max(), 9)[1:-1]:
        for p in extract_iso_curve(mesh, phi, level):
            assert np.max(np.abs(interp(mesh, phi, p) - level)) <= 1e-9 * span
            assert np.allclose(np.einsum("ij,ijk->ik", p.bary, mesh.vertices[mesh.faces[p.faces]]), p.positions)


def test_consecutive_points_share_faces(saddle):
    mesh, _ = saddle
    phi = mesh.vertices[:, 0] ** 2 + 2 * mesh.vertices[:, 1] ** 2
    for p in extract_iso_curve(mesh, phi, 30.0):
        assert p.closed
        adj = mesh.face_adjacency()
        f = p.faces
        for a, b in zip(f, np.roll(f, -1)):
            assert a == b or adj[a, b]


def test_length_equals_segment_sum(cylinder):
    mesh, _ = cylinder
    p = extract_iso_curve(mesh, mesh.vertices[:, 2], 3.3)[0]
    brute = sum(np.linalg.norm(p.positions[(i + 1) % len(p.positions)] - p.positions[i]) for i in range(len(p.positions)))
    assert p.length == pytest.approx(brute, rel=1e-14)


def test_path_runs_along_feed(plane):
    mesh, _ = plane
    # grad phi = +y, feed = grad x n = +y x +z = +x
    p = extract_iso_curve(mesh, mesh.vertices[:, 1], 4.5)[0]
    assert p.positions[-1, 0] > p.positions[0, 0]


def test_json_roundtrip(cylinder):
    mesh, _ = cylinder
    p = extract_iso_curve(mesh, mesh.vertices[:, 2], 3.3)[0]
    q = ToolPath.from_json(p.to_json())
    assert q.closed and q.level == p.level
    assert np.array_equal(q.positions, p.positions) and np.array_equal(q.faces, p.faces)


# -- increments and schedules -------------------------------------------------------
def test_increment_is_sqrt_h(plane):
    mesh, curv = plane
    phi = M_PLANE * mesh.vertices[:, 1]
    p = extract_iso_curve(mesh, phi, M_PLANE * 4.5)
    inc = level_increment(mesh, phi, curv, BALL5, p, 0.05)
    assert inc == pytest.approx(math.sqrt(0.05), rel=1e-9)


def test_increment_scales_with_gradient(plane):
    mesh, curv = plane
    phi = 1.1 * M_PLANE * mesh.vertices[:, 1]
    p = extract_iso_curve(mesh, phi, 1.1 * M_PLANE * 4.5)
    inc = level_increment(mesh, phi, curv, BALL5, p, 0.05)
    assert inc == pytest.approx(1.1 * math.sqrt(0.05), rel=1e-9)


def test_increment_uniform_min_equals_mean(cylinder):
    mesh, curv = cylinder
    phi = M_PLANE * mesh.vertices[:, 2]
    p = extract_iso_curve(mesh, phi, M_PLANE * 10.25)
    incs = [level_increment(mesh, phi, curv, BALL5, p, 0.05, samples=n) for n in (8, 64, 200)]
    assert np.ptp(incs) < 1e-9
    assert incs[0] == pytest.approx(math.sqrt(0.05), rel=1e-9)


def test_increment_needs_samples(plane):
    mesh, curv = plane
    phi = mesh.vertices[:, 1]
    p = extract_iso_curve(mesh, phi, 4.5)
    with pytest.raises(ValueError):
        level_increment(mesh, phi, curv, BALL5, p, 0.05, samples=4)


def test_plane_schedule(plane):
    mesh, curv = plane
    phi = M_PLANE * mesh.vertices[:, 1]
    sched = schedule_levels(mesh, phi, curv, BALL5, 0.05)
    assert len(sched) == math.ceil(10 / SIDE_STEP) == 8
    assert np.allclose(np.diff(sched.levels), math.sqrt(0.05), rtol=1e-9)
    # first and last within one increment of the extremes
    assert sched.levels[0] - phi.min() < math.sqrt(0.05)
    assert phi.max() - sched.levels[-1] < math.sqrt(0.05)


def test_cylinder_schedule(cylinder):
    mesh, curv = cylinder
    phi = M_PLANE * mesh.vertices[:, 2]
    sched = schedule_levels(mesh, phi, curv, BALL5, 0.05)
    assert len(sched) == 15
    zs = sched.levels / M_PLANE
    assert np.allclose(np.diff(zs), SIDE_STEP, rtol=1e-9)
    # symmetric margins
    assert zs[0] == pytest.approx(20 - zs[-1], abs=1e-7)  # up to the 1e-9 range nudge


def test_quadrupled_h_doubles_spacing(cylinder):
    mesh, curv = cylinder
    phi = M_PLANE * mesh.vertices[:, 2]
    a = schedule_levels(mesh, phi, curv, BALL5, 0.05)
    b = schedule_levels(mesh, phi, curv, BALL5, 0.2)
    assert np.diff(b.levels).mean() == pytest.approx(2 * np.diff(a.levels).mean(), rel=1e-9)


def test_schedule_strictly_increasing(saddle):
    mesh, curv = saddle
    from poissonpath.feed_field import orient, preferred_directions
    from poissonpath.poisson_solver import build_target_field

    field = orient(preferred_directions(mesh, curv, BALL5, 0.05), mesh)
    phi = solve_poisson(mesh, build_target_field(mesh, curv, BALL5, field)).values
    sched = schedule_levels(mesh, phi, curv, BALL5, 0.05)
    assert np.all(np.diff(sched.levels) > 0)
    assert sched.levels[0] > phi.min() and sched.levels[-1] < phi.max()
    assert LevelSchedule.from_json(sched.to_json()).levels.tolist() == sched.levels.tolist()


def test_constant_field_degenerate(plane):
    mesh, curv = plane
    with pytest.raises(DegenerateFieldError):
        schedule_levels(mesh, np.ones(mesh.n_vertices), curv, BALL5, 0.05)


# -- extract_all ----------------------------------------------------------------------
def test_extract_all_parallel_lines(plane):
    mesh, curv = plane
    phi = M_PLANE * mesh.vertices[:, 1]
    sched = schedule_levels(mesh, phi, curv, BALL5, 0.05)
    paths = extract_all(mesh, phi, sched)
    assert len(paths) == 8
    ys = [p.positions[:, 1] for p in paths]
    assert all(np.ptp(y) < 1e-9 for y in ys)
    assert total_length(paths) == pytest.approx(80.0, rel=1e-9)


def test_extract_all_empty(plane):
    mesh, _ = plane
    empty = LevelSchedule(np.zeros(0), np.zeros(0), 0.05)
    paths = extract_all(mesh, mesh.vertices[:, 0], empty)
    assert paths == [] and total_length(paths) == 0.0


def test_paths_clipped_to_patches():
    mesh, curv, field, left = two_region_plane(20, 4)
    seg = segment(mesh, field)
    assert seg.k == 2
    P = mesh.vertices
    phis, scheds = {}, {}
    for label in range(seg.k):
        # a diagonal field crosses the seam everywhere if left unclipped
        phis[label] = 0.1 * (P[:, 0] + P[:, 1]) * (label + 1)
        scheds[label] = schedule_levels(mesh, phis[label], curv, BALL5, 0.05, faces=seg.patch_faces(label))
    paths = extract_all(mesh, phis, scheds, seg)
    assert {p.patch for p in paths} == {0, 1}
    for p in paths:
        assert np.all(seg.labels[p.segment_faces] == p.patch)


def test_reversed_schedule_same_geometry(saddle):
    mesh, _ = saddle
    phi = mesh.vertices[:, 0] + 0.1 * mesh.vertices[:, 1] ** 2
    levels = np.linspace(phi.min(), phi.max(), 12)[1:-1]
    fwd = extract_all(mesh, phi, LevelSchedule(levels, np.zeros(10), 0.05))
    back = extract_all(mesh, phi, LevelSchedule(levels[::-1], np.zeros(10), 0.05))

    def key(paths):
        return sorted((round(p.level, 12), round(p.length, 9), tuple(np.round(p.positions.mean(0), 9))) for p in paths)

    assert key(fwd) == key(back)
