import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import BALL5, FLAT2
from helpers import uniform_field
from poissonpath.analysis_oracle import (
    adjacent_pairs,
    alignment_report,
    auxiliary_side_steps,
    coverage_report,
    format_length_table,
    length_report,
    model_scallop_height,
    planar_paths,
    scallop_oracle,
    scallop_stats,
    scallop_study,
    section_scallop,
    side_step,
    zigzag_length,
)
from poissonpath.errors import NoIntersectionError
from poissonpath.feed_field import effective_radius, orient, preferred_directions, rotate90
from poissonpath.path_extraction import LevelSchedule, ToolPath, extract_all, schedule_levels
from poissonpath.poisson_solver import build_target_field, solve_poisson

S_PLANE = 2 * math.sqrt(2 * 0.05 * 5)  # 1.41421


def cusp_on_circle(k, s_arc, r):
    """Equal-radius cusp height on a section circle of curvature ``k`` by
    the law of cosines in the triangle (circle centre, cutter centre, cusp)."""
    R = 1 / abs(k)
    half = s_arc * abs(k) / 2
    if k > 0:
        c = R + r  # cutter centres outside the circle
        # x^2 - 2 x c cos(half) + c^2 - r^2 = 0, outer cusp is the smaller root
        x = c * math.cos(half) - math.sqrt(r * r - (c * math.sin(half)) ** 2)
        return x - R
    c = R - r
    x = c * math.cos(half) + math.sqrt(r * r - (c * math.sin(half)) ** 2)
    return R - x


# -- section geometry --------------------------------------------------------------
def test_plane_ball_cusp_formula():
    sc = section_scallop(0.0, S_PLANE, 5.0, 5.0)
    assert sc.h_exact == pytest.approx(5 - math.sqrt(25 - S_PLANE**2 / 4), abs=1e-14)
    assert sc.h_exact == pytest.approx(0.0502525, abs=1e-7)
    assert model_scallop_height(0.0, S_PLANE, 5.0, 5.0) == pytest.approx(0.05, rel=1e-12)


@pytest.mark.xfail(strict=True, reason="reference value 0.050063 does not follow from r - sqrt(r^2 - s^2/4) = 0.0502525")
def test_plane_ball_reference_value():
    assert section_scallop(0.0, S_PLANE, 5.0, 5.0).h_exact == pytest.approx(0.050063, abs=1e-6)


@pytest.mark.parametrize("k", [0.1, 0.02, -0.05, -0.1])
@pytest.mark.parametrize("s", [0.3, 1.0, 2.0])
def test_curved_section_matches_law_of_cosines(k, s):
    sc = section_scallop(k, s, 5.0, 5.0)
    assert sc.h_exact == pytest.approx(cusp_on_circle(k, sc.sigma2, 5.0), rel=1e-9)


def test_zero_side_step():
    assert section_scallop(0.1, 0.0, 5.0, 3.0).h_exact == 0.0
    hs = [section_scallop(0.05, s, 5.0, 3.0).h_exact for s in (1e-1, 1e-2, 1e-3)]
    assert hs[0] > hs[1] > hs[2] > 0
    assert hs[2] < 1e-6


@pytest.mark.parametrize("k, r1, r2", [(0.0, 5.0, 5.0), (0.1, 5.0, 3.0), (-0.05, 6.0, 4.0)])
def test_model_error_vanishes_with_side_step(k, r1, r2):
    s = np.array([1.0, 0.5, 0.25, 0.125])
    err = np.array([abs(model_scallop_height(k, x, r1, r2) - section_scallop(k, x, r1, r2).h_exact) for x in s])
    rel = err / np.array([section_scallop(k, x, r1, r2).h_exact for x in s])
    slope = np.polyfit(np.log(s), np.log(rel), 1)[0]
    assert slope >= 1


@given(st.floats(-0.15, 0.3), st.floats(0.5, 10.0), st.floats(1e-4, 0.5))
def test_ball_model_is_classic_formula(k, r, h):
    # equal radii: s = 2 sqrt(2 h / (k + 1/r))
    if k + 1 / r <= 0.01:
        return
    s = 2 * math.sqrt(2 * h / (k + 1 / r))
    assert side_step(k, h, r, r) == pytest.approx(s, rel=1e-12)
    assert model_scallop_height(k, s, r, r) == pytest.approx(h, rel=1e-12)


@pytest.mark.parametrize("k, r1, r2", [(0.1, 5.0, 3.0), (-0.1, 6.0, 4.0), (0.05, 2.3, 4.0)])
def test_auxiliary_side_step_relation(k, r1, r2):
    s = np.array([1.0, 0.5, 0.25, 0.125])
    gap = []
    for x in s:
        a, b = auxiliary_side_steps(k, x, r1, r2)
        gap.append(abs(x - (a + b) / 2))
    gap = np.array(gap)
    assert np.all(gap < 0.01 * s**3)
    assert np.polyfit(np.log(s), np.log(gap), 1)[0] == pytest.approx(3, abs=0.2)


def test_auxiliary_side_steps_equal_radii_plane():
    a, b = auxiliary_side_steps(0.0, 1.2, 5.0, 5.0)
    assert a == pytest.approx(1.2, abs=1e-12) and b == pytest.approx(1.2, abs=1e-12)


def test_gap_detected():
    with pytest.raises(NoIntersectionError):
        section_scallop(0.0, 11.0, 5.0, 5.0)
    with pytest.raises(NoIntersectionError):
        model_scallop_height(-0.3, 1.0, 5.0, 5.0)


# -- mesh sampling -------------------------------------------------------------------
def plane_paths(plane):
    mesh, curv = plane
    field = uniform_field(mesh)
    V = build_target_field(mesh, curv, BALL5, field)
    phi = solve_poisson(mesh, V).values
    return mesh, curv, field, extract_all(mesh, phi, schedule_levels(mesh, phi, curv, BALL5, 0.05))


def test_plane_oracle_on_mesh(plane):
    mesh, curv, _, paths = plane_paths(plane)
    pairs = adjacent_pairs(paths)
    assert len(pairs) == 7
    samples = scallop_oracle(mesh, curv, BALL5, pairs[3][0], pairs[3][1], samples=50)
    assert len(samples) == 50
    for s in samples:
        assert s.side_step == pytest.approx(S_PLANE, rel=1e-9)
        assert s.h_model == pytest.approx(0.05, rel=1e-9)
        assert s.h_exact == pytest.approx(5 - math.sqrt(25 - S_PLANE**2 / 4), rel=1e-9)


def test_scallop_study_seeded(plane):
    mesh, curv, _, paths = plane_paths(plane)
    a, ga = scallop_study(mesh, curv, BALL5, paths, 100, seed=7)
    b, gb = scallop_study(mesh, curv, BALL5, paths, 100, seed=7)
    assert ga == gb == 0 and len(a) == len(b) == 100
    assert [s.h_exact for s in a] == [s.h_exact for s in b]
    st_ = scallop_stats(a)
    h_exact = 5 - math.sqrt(25 - S_PLANE**2 / 4)
    assert st_["count"] == 100 and st_["max"] == pytest.approx(1 - 0.05 / h_exact, rel=1e-9)
    assert scallop_stats([])["count"] == 0


def test_saddle_flat_end_error_small(saddle40):
    mesh, curv = saddle40
    field = orient(preferred_directions(mesh, curv, FLAT2, 0.05), mesh)
    phi = solve_poisson(mesh, build_target_field(mesh, curv, FLAT2, field)).values
    paths = extract_all(mesh, phi, schedule_levels(mesh, phi, curv, FLAT2, 0.05))
    samples, gaps = scallop_study(mesh, curv, FLAT2, paths, 100)
    assert gaps == 0 and len(samples) == 100
    assert scallop_stats(samples)["max"] < 0.04
    r = effective_radius(FLAT2).radius
    assert all(s.r1 == s.r2 == r for s in samples)


# -- alignment --------------------------------------------------------------------------
def test_alignment_plane(plane):
    mesh, _, field, paths = plane_paths(plane)
    rep = alignment_report(paths, field, mesh)
    assert rep.max_angle < 0.5
    assert rep.histogram.sum() == rep.count > 0


def test_alignment_rotated(plane):
    mesh, _, field, paths = plane_paths(plane)
    rep = alignment_report(paths, rotate90(field, mesh), mesh)
    assert rep.mean_angle == pytest.approx(90, abs=1e-6)
    assert rep.histogram.sum() == rep.count


def test_alignment_empty():
    rep = alignment_report([], None)
    assert rep.count == 0 and rep.histogram.sum() == 0
    assert rep.to_json()["count"] == 0


# -- lengths ------------------------------------------------------------------------------
def test_length_report_identical_sets(plane):
    _, _, _, paths = plane_paths(plane)
    rep = length_report({"a": paths, "b": list(paths)})
    assert rep["differences_pct"] == {"a vs b": 0.0, "b vs a": 0.0}
    assert rep["totals"]["a"] == pytest.approx(80.0, rel=1e-9)
    table = format_length_table(rep)
    assert "+0.00%" in table and "80.00" in table


def test_length_report_single_set(plane):
    _, _, _, paths = plane_paths(plane)
    rep = length_report({"only": paths})
    assert rep["differences_pct"] == {} and rep["paths"]["only"] == 8


def line(y, x0=0.0, x1=10.0):
    P = np.array([[x0, y, 0.0], [x1, y, 0.0]])
    return ToolPath(y, P, np.zeros(2, np.int64), np.tile([1.0, 0, 0], (2, 1)), False)


def test_zigzag_links_brute_force():
    paths = [line(0.0), line(1.0), line(3.0, 2.0, 8.0)]
    # pass ends at x=10, next pass nearer end is x=10 (link 1), ends at x=0,
    # third pass nearer end is x=2 at distance sqrt(4 + 4)
    expect = 10 + 10 + 6 + 1 + math.sqrt(8)
    assert zigzag_length(paths) == pytest.approx(expect, rel=1e-12)


def test_planar_baseline_cylinder_axial(cylinder):
    mesh, curv = cylinder
    rings = planar_paths(mesh, curv, BALL5, 0.05, [0, 0, 1.0])
    assert len(rings) == 15 and all(p.closed for p in rings)


# -- coverage --------------------------------------------------------------------------------
def test_coverage_full_plane(plane):
    mesh, curv, _, paths = plane_paths(plane)
    rep = coverage_report(mesh, paths, BALL5, curv, 0.05, 20_000)
    assert rep.fraction >= 0.999
    assert rep.strip_area_ratio == pytest.approx(8 * S_PLANE * 10 / 100, rel=1e-9)


def test_coverage_half_plane(plane):
    mesh, curv, _, paths = plane_paths(plane)
    lower = [p for p in paths if p.positions[:, 1].mean() < 5]
    ys = sorted(p.positions[0, 1] for p in lower)
    exact = (min(ys[-1] + S_PLANE / 2, 10) - max(ys[0] - S_PLANE / 2, 0)) / 10
    rep = coverage_report(mesh, lower, BALL5, curv, 0.05, 20_000)
    assert rep.fraction == pytest.approx(exact, abs=0.01)
    half = [p for p in paths if p.positions[:, 1].mean() < 5.0 - S_PLANE]
    ys = sorted(p.positions[0, 1] for p in half)
    assert coverage_report(mesh, half, BALL5, curv, 0.05, 20_000).fraction == pytest.approx(
        (ys[-1] + S_PLANE / 2 - max(ys[0] - S_PLANE / 2, 0)) / 10, abs=0.01
    )


def test_coverage_no_paths(plane):
    mesh, curv = plane
    assert coverage_report(mesh, [], BALL5, curv, 0.05).fraction == 0.0


def test_coverage_seeded(cylinder):
    mesh, curv = cylinder
    phi = mesh.vertices[:, 2]
    paths = extract_all(mesh, phi, LevelSchedule(np.array([5.0, 15.0]), np.zeros(2), 0.05))
    a = coverage_report(mesh, paths, BALL5, curv, 0.05, 5000, seed=3)
    b = coverage_report(mesh, paths, BALL5, curv, 0.05, 5000, seed=3)
    assert a.fraction == b.fraction
    assert a.fraction == pytest.approx(2 * S_PLANE / 20, abs=0.02)
