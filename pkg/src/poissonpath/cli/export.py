"""Artifact writers: deterministic JSON, legacy VTK and small SVG plots."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np


def write_json(path, payload):
    """Sorted keys, fixed separators and a trailing newline, so equal inputs
    give byte-identical files."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=1, separators=(",", ": "), allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _fmt(a):
    return " ".join(repr(float(x)) for x in np.ravel(a))


def write_mesh_vtk(path, mesh, point_data=None, cell_data=None, title="poissonpath"):
    """ASCII legacy VTK polydata of a triangle mesh with scalar attributes."""
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET POLYDATA"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines += [_fmt(v) for v in mesh.vertices]
    lines.append(f"POLYGONS {mesh.n_faces} {4 * mesh.n_faces}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    for header, count, data in (("POINT_DATA", mesh.n_vertices, point_data), ("CELL_DATA", mesh.n_faces, cell_data)):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name in sorted(data):
            arr = np.asarray(data[name], dtype=float)
            if arr.ndim == 2:
                lines.append(f"VECTORS {name} double")
                lines += [_fmt(v) for v in arr]
            else:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines += [repr(float(x)) for x in arr]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_paths_vtk(path, paths):
    """Tool paths as VTK polylines with level and patch cell data."""
    pts, polys = [], []
    start = 0
    for p in paths:
        k = len(p.positions)
        ids = list(range(start, start + k))
        if p.closed:
            ids.append(start)
        pts.append(p.positions)
        polys.append(ids)
        start += k
    P = np.concatenate(pts) if pts else np.zeros((0, 3))
    lines = ["# vtk DataFile Version 3.0", "tool paths", "ASCII", "DATASET POLYDATA", f"POINTS {len(P)} double"]
    lines += [_fmt(v) for v in P]
    lines.append(f"LINES {len(polys)} {sum(len(x) + 1 for x in polys)}")
    lines += [" ".join(map(str, [len(x)] + x)) for x in polys]
    if paths:
        lines.append(f"CELL_DATA {len(paths)}")
        lines += ["SCALARS level double 1", "LOOKUP_TABLE default"] + [repr(float(p.level)) for p in paths]
        lines += ["SCALARS patch int 1", "LOOKUP_TABLE default"] + [str(int(p.patch)) for p in paths]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- SVG ---------------------------------------------------------------------
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def _projector(axis):
    """Orthographic view along ``axis`` ('x', 'y' or 'z'): 2D picker."""
    keep = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}[axis]
    return lambda P: np.asarray(P)[:, keep]


def paths_svg(path, mesh, paths, view="z", size=600):
    """Orthographic projection of the mesh outline and tool paths."""
    proj = _projector(view)
    V2 = proj(mesh.vertices)
    lo, hi = V2.min(axis=0), V2.max(axis=0)
    scale = (size - 40) / max(float((hi - lo).max()), 1e-12)

    def xy(P):
        q = (proj(P) - lo) * scale + 20
        q[:, 1] = size - q[:, 1]
        return q

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    out.append(f'<rect width="{size}" height="{size}" fill="white"/>')
    E = mesh.edges[mesh.boundary_edges]
    for a, b in xy(mesh.vertices)[E]:
        out.append(f'<line x1="{a[0]:.2f}" y1="{a[1]:.2f}" x2="{b[0]:.2f}" y2="{b[1]:.2f}" stroke="#999" stroke-width="1"/>')
    for p in paths:
        q = xy(p.positions)
        pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in q)
        tag = "polygon" if p.closed else "polyline"
        colour = _PALETTE[p.patch % len(_PALETTE)]
        out.append(f'<{tag} points="{pts}" fill="none" stroke="{colour}" stroke-width="1"/>')
    out.append("</svg>")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")


def histogram_svg(path, counts, xlabel="angle (deg)", width=600, height=300):
    counts = np.asarray(counts, dtype=float)
    top = max(float(counts.max()) if len(counts) else 0.0, 1.0)
    bw = (width - 60) / max(len(counts), 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">']
    out.append(f'<rect width="{width}" height="{height}" fill="white"/>')
    for i, c in enumerate(counts):
        h = (height - 60) * c / top
        out.append(f'<rect x="{40 + i * bw:.2f}" y="{height - 30 - h:.2f}" width="{bw:.2f}" height="{h:.2f}" fill="#1f77b4"/>')
    out.append(f'<line x1="40" y1="{height - 30}" x2="{width - 20}" y2="{height - 30}" stroke="black"/>')
    out.append(f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="12" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="42" y="20" font-size="12">max count {int(top)}</text>')
    out.append("</svg>")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
