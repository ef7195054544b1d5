"""Pipeline stages.

Every stage reads its inputs from the output directory and writes its
artifacts back there, so a full run is literally the chain of stages.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..analysis_oracle import (
    alignment_report,
    baseline_axes,
    coverage_report,
    format_length_table,
    length_report,
    planar_paths,
    scallop_stats,
    scallop_study,
)
from ..errors import GougeError, MissingArtifactError, NoSeedError, ToolpathError
from ..feed_field import (
    DirectionField,
    load_direction_field,
    orient,
    preferred_directions,
    save_direction_field,
    smooth_directions,
)
from ..mesh_core import analytic_test_surface, estimate_curvature, load_mesh
from ..path_extraction import LevelSchedule, ToolPath, extract_all, schedule_levels, total_length
from ..poisson_solver import (
    TargetVectorField,
    build_target_field,
    energy_report,
    solve_direction_only,
    solve_isoscallop_hard,
    solve_poisson,
    solve_smooth,
)
from ..segmentation import SegmentationResult, segment
from .config import JobConfig
from .export import histogram_svg, paths_svg, read_json, write_json, write_mesh_vtk, write_paths_vtk

logger = logging.getLogger(__name__)

STAGES = ("field", "segment", "solve", "extract", "analyze")


@dataclass
class Geometry:
    mesh: object
    curv: object  # curvature used by the pipeline
    reference: object  # curvature used by the oracle


def load_geometry(cfg: JobConfig) -> Geometry:
    """Mesh plus pipeline and reference curvature."""
    if cfg.surface is not None:
        mesh, exact = analytic_test_surface(cfg.surface.kind, cfg.surface.params, cfg.surface.resolution)
        curv = estimate_curvature(mesh) if cfg.curvature == "estimated" else exact
        return Geometry(mesh, curv, exact)
    mesh = load_mesh(cfg.mesh)
    curv = estimate_curvature(mesh)
    return Geometry(mesh, curv, curv)


def _need(path: Path):
    if not path.exists():
        raise MissingArtifactError(f"missing artifact {path.name}; run the earlier stage first")
    return path


# -- stages ------------------------------------------------------------------
def stage_field(cfg: JobConfig, out: Path, geo: Geometry):
    mesh, curv, cutter = geo.mesh, geo.curv, cfg.cutter_spec
    if cfg.direction_field:
        field = load_direction_field(cfg.direction_field, mesh)
    else:
        field = preferred_directions(mesh, curv, cutter, cfg.h)
    try:
        field = orient(field, mesh)
    except NoSeedError:
        # no face prefers any direction; face 0 keeps its placeholder (first edge)
        logger.info("no preferred direction anywhere; seeding from face 0")
        field = orient(field, mesh, seeds=[0])
    if cfg.smoothing_iterations > 0:
        field = smooth_directions(field, mesh, cfg.smoothing_iterations, cfg.smoothing_step)
    save_direction_field(out / "field.json", field)
    target = build_target_field(mesh, curv, cutter, field)
    write_json(
        out / "target.json",
        {
            "n_faces": mesh.n_faces,
            "vectors": [[float(c) for c in v] for v in target.vectors],
            "magnitudes": [float(x) for x in target.magnitudes],
        },
    )


def _load_field(out: Path, mesh) -> DirectionField:
    return load_direction_field(_need(out / "field.json"), mesh)


def _load_target(out: Path) -> TargetVectorField:
    raw = read_json(_need(out / "target.json"))
    return TargetVectorField(np.asarray(raw["vectors"], float), np.asarray(raw["magnitudes"], float))


def stage_segment(cfg: JobConfig, out: Path, geo: Geometry):
    mesh = geo.mesh
    field = _load_field(out, mesh)
    if cfg.segmentation == "off":
        seg = SegmentationResult(np.zeros(mesh.n_faces, np.int64), np.zeros(mesh.n_faces), 1, cfg.sigma)
    else:
        k = None if cfg.segmentation == "auto" else int(cfg.segmentation)
        seg = segment(mesh, field, cfg.sigma, k)
    write_json(out / "segmentation.json", seg.to_json())


def _load_segmentation(out: Path, mesh) -> SegmentationResult:
    p = out / "segmentation.json"
    if not p.exists():
        return SegmentationResult(np.zeros(mesh.n_faces, np.int64), np.zeros(mesh.n_faces), 1, 0.67)
    return SegmentationResult.from_json(read_json(p))


def _solve_patch(cfg, sub, curv, field, target):
    if cfg.variant == "poisson":
        return solve_poisson(sub, target)
    if cfg.variant == "smooth":
        return solve_smooth(sub, target, cfg.weight)
    if cfg.variant == "direction_only":
        return solve_direction_only(sub, field)
    return solve_isoscallop_hard(sub, field, curv, cfg.cutter_spec, cfg.max_outer, cfg.tol)


def stage_solve(cfg: JobConfig, out: Path, geo: Geometry):
    mesh = geo.mesh
    field = _load_field(out, mesh)
    target = _load_target(out)
    seg = _load_segmentation(out, mesh)
    patches = {}
    for label in range(seg.k):
        faces = seg.patch_faces(label)
        sub, vmap = mesh.submesh(faces)
        phi = _solve_patch(cfg, sub, geo.curv.take(faces), field.take(faces), target.take(faces))
        patches[str(label)] = {
            "variant": phi.variant,
            "vertices": [int(v) for v in vmap],
            "values": [float(x) for x in phi.values],
        }
    write_json(out / "phi.json", {"patches": patches})
    point_data = {}
    for label, p in patches.items():
        full = np.zeros(mesh.n_vertices)
        full[p["vertices"]] = p["values"]
        point_data[f"phi_patch{label}"] = full
    write_mesh_vtk(out / "phi.vtk", mesh, point_data, {"patch": seg.labels.astype(float)})


def _load_phi(out: Path, mesh):
    raw = read_json(_need(out / "phi.json"))["patches"]
    phis = {}
    for label, p in raw.items():
        full = np.zeros(mesh.n_vertices)
        full[p["vertices"]] = p["values"]
        phis[int(label)] = full
    return phis


def stage_extract(cfg: JobConfig, out: Path, geo: Geometry):
    mesh = geo.mesh
    seg = _load_segmentation(out, mesh)
    phis = _load_phi(out, mesh)
    schedules = {}
    for label, phi in phis.items():
        schedules[label] = schedule_levels(mesh, phi, geo.curv, cfg.cutter_spec, cfg.h, cfg.samples, seg.patch_faces(label))
    paths = extract_all(mesh, phis, schedules, seg)
    write_json(
        out / "paths.json",
        {
            "h": float(cfg.h),
            "schedules": {str(k): s.to_json() for k, s in sorted(schedules.items())},
            "paths": [p.to_json() for p in paths],
            "total_length": total_length(paths),
        },
    )
    write_paths_vtk(out / "paths.vtk", paths)


def load_paths(path) -> list:
    raw = read_json(_need(Path(path)))
    return [ToolPath.from_json(p) for p in raw["paths"]]


def _view_axis(mesh):
    ext = np.ptp(mesh.vertices, axis=0)
    return "xyz"[int(np.argmin(ext))]


def stage_analyze(cfg: JobConfig, out: Path, geo: Geometry, compare=()):
    mesh, cutter = geo.mesh, cfg.cutter_spec
    paths = load_paths(out / "paths.json")
    field = _load_field(out, mesh)
    target = _load_target(out)
    seg = _load_segmentation(out, mesh)
    phis = _load_phi(out, mesh)

    align = alignment_report(paths, field, mesh)
    samples, gaps = scallop_study(mesh, geo.reference, cutter, paths, cfg.scallop_samples, cfg.seed, model_curv=geo.curv)
    cover = coverage_report(mesh, paths, cutter, geo.curv, cfg.h, cfg.coverage_samples, cfg.seed)
    energies = {}
    for label, phi in phis.items():
        faces = seg.patch_faces(label)
        sub, vmap = mesh.submesh(faces)
        e = energy_report(sub, phi[vmap], target.take(faces), field.take(faces), geo.curv.take(faces), cutter)
        energies[str(label)] = e.to_json()

    sets = {"this run": paths}
    baseline_notes = {}
    if cfg.baselines:
        for i, axis in enumerate(baseline_axes(mesh)):
            name = f"iso-planar axis {i + 1}"
            try:
                sets[name] = planar_paths(mesh, geo.curv, cutter, cfg.h, axis, cfg.samples)
                baseline_notes[name] = [float(c) for c in axis]
            except ToolpathError as exc:
                baseline_notes[name] = f"failed: {exc}"
    for extra in compare:
        sets[Path(extra).stem] = load_paths(extra)
    lengths = length_report(sets)

    report = {
        "n_paths": len(paths),
        "total_length": total_length(paths),
        "path_lengths": [p.length for p in paths],
        "patches": int(seg.k),
        "alignment": align.to_json(),
        "scallop": {
            **scallop_stats(samples),
            "gaps": int(gaps),
            "reference_curvature": geo.reference.source,
            "model_curvature": geo.curv.source,
            "method": "osculating-circle section with exact cutter-circle intersection",
        },
        "coverage": cover.to_json(),
        "energies": energies,
        "lengths": lengths,
        "baselines": baseline_notes,
        "length_table": format_length_table(lengths),
    }
    write_json(out / "report.json", report)
    if samples:
        with open(out / "scallop_samples.csv", "w", encoding="utf-8") as fh:
            rows = [s.to_row() for s in samples]
            keys = [k for k in rows[0] if k not in ("p1", "p2")]
            fh.write(",".join(keys) + "\n")
            for r in rows:
                fh.write(",".join(repr(r[k]) for k in keys) + "\n")
    paths_svg(out / "plots" / "paths.svg", mesh, paths, view=_view_axis(mesh))
    histogram_svg(out / "plots" / "alignment.svg", align.histogram)
    err = np.array([s.rel_error for s in samples]) * 100
    histogram_svg(out / "plots" / "scallop_error.svg", np.histogram(err, bins=np.linspace(0, 10, 41))[0], "relative scallop error (%)")
    return report


STAGE_FUNCS = {
    "field": stage_field,
    "segment": stage_segment,
    "solve": stage_solve,
    "extract": stage_extract,
    "analyze": stage_analyze,
}


def write_manifest(out: Path, cfg: JobConfig, timings: dict, status: str, error: str | None = None):
    import scipy

    artifacts = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file() and p.name != "manifest.json")
    write_json(
        out / "manifest.json",
        {
            "status": status,
            "error": error,
            "config_sha256": cfg.digest(),
            "config": cfg.to_dict(),
            "versions": {"poissonpath": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
            "stage_seconds": timings,
            "artifacts": artifacts,
        },
    )


def run_stages(cfg: JobConfig, stages=STAGES, out=None, compare=()):
    """Run ``stages`` in order, recording timings in the manifest. Errors
    propagate after the manifest is written."""
    out = Path(out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", cfg.to_dict())
    timings = {}
    t0 = time.perf_counter()
    geo = load_geometry(cfg)
    timings["load"] = time.perf_counter() - t0
    try:
        for name in stages:
            t0 = time.perf_counter()
            if name == "analyze":
                stage_analyze(cfg, out, geo, compare)
            else:
                STAGE_FUNCS[name](cfg, out, geo)
            timings[name] = time.perf_counter() - t0
            logger.info("stage %s done in %.2fs", name, timings[name])
    except (ToolpathError, GougeError) as exc:
        write_manifest(out, cfg, timings, "failed", f"{type(exc).__name__}: {exc}")
        raise
    write_manifest(out, cfg, timings, "ok")
    return out
