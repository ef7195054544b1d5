"""Job configuration: JSON file plus command-line overrides."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import InvalidConfigError
from ..feed_field import CutterSpec

VARIANTS = ("poisson", "smooth", "direction_only", "isoscallop_hard")
CURVATURE = ("auto", "estimated", "analytic")


@dataclass
class SurfaceSpec:
    kind: str
    params: dict = field(default_factory=dict)
    resolution: int = 10


@dataclass
class JobConfig:
    mesh: str | None = None
    surface: SurfaceSpec | None = None
    curvature: str = "auto"
    cutter: dict = field(default_factory=lambda: {"kind": "ball", "radius": 5.0, "inclination": 90.0, "tilt": 0.0})
    h: float = 0.05
    sigma: float = 0.67
    weight: float = 0.0  # smoothing weight of the "smooth" variant
    variant: str = "poisson"
    segmentation: str | int = "auto"
    samples: int = 64
    seed: int = 42
    output: str = "out"
    smoothing_iterations: int = 10
    smoothing_step: float = 0.5
    direction_field: str | None = None
    scallop_samples: int = 500
    coverage_samples: int = 100_000
    baselines: bool = True
    max_outer: int = 30
    tol: float = 1e-6

    @property
    def cutter_spec(self) -> CutterSpec:
        return CutterSpec(**self.cutter)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


_ALIASES = {"lambda": "weight", "lam": "weight"}


def config_from_dict(raw: dict) -> JobConfig:
    """Validate a raw mapping and build a :class:`JobConfig`."""
    if not isinstance(raw, dict):
        raise InvalidConfigError("configuration must be a JSON object")
    data = {}
    known = set(JobConfig.__dataclass_fields__)
    for key, val in raw.items():
        key = _ALIASES.get(key, key)
        if key not in known:
            raise InvalidConfigError(f"unknown configuration key {key!r}")
        data[key] = val
    surf = data.get("surface")
    if surf is not None:
        if not isinstance(surf, dict) or "kind" not in surf:
            raise InvalidConfigError("surface needs at least a 'kind'")
        extra = set(surf) - {"kind", "params", "resolution"}
        if extra:
            raise InvalidConfigError(f"unknown surface keys {sorted(extra)}")
        data["surface"] = SurfaceSpec(surf["kind"], dict(surf.get("params", {})), int(surf.get("resolution", 10)))
    cfg = JobConfig(**data)
    validate(cfg)
    return cfg


def validate(cfg: JobConfig):
    if (cfg.mesh is None) == (cfg.surface is None):
        raise InvalidConfigError("give exactly one of 'mesh' (file path) or 'surface' (analytic)")
    if cfg.surface is not None and cfg.surface.kind not in ("plane", "cylinder", "saddle"):
        raise InvalidConfigError(f"unknown surface kind {cfg.surface.kind!r}")
    if cfg.curvature not in CURVATURE:
        raise InvalidConfigError(f"curvature must be one of {CURVATURE}")
    if cfg.curvature == "analytic" and cfg.surface is None:
        raise InvalidConfigError("analytic curvature needs an analytic surface")
    if not isinstance(cfg.cutter, dict):
        raise InvalidConfigError("cutter must be an object")
    try:
        cfg.cutter_spec
    except TypeError as exc:
        raise InvalidConfigError(f"bad cutter: {exc}") from None
    for name in ("h", "sigma"):
        val = getattr(cfg, name)
        if not isinstance(val, (int, float)) or not val > 0:
            raise InvalidConfigError(f"{name} must be positive, got {val!r}")
    if not isinstance(cfg.weight, (int, float)) or not cfg.weight >= 0:
        raise InvalidConfigError(f"smoothing weight must be >= 0, got {cfg.weight!r}")
    if cfg.variant not in VARIANTS:
        raise InvalidConfigError(f"variant must be one of {VARIANTS}")
    seg = cfg.segmentation
    if not (seg in ("auto", "off") or (isinstance(seg, int) and not isinstance(seg, bool) and seg >= 1)):
        raise InvalidConfigError("segmentation must be 'auto', 'off' or a positive integer")
    if int(cfg.samples) < 8:
        raise InvalidConfigError("samples must be >= 8")
    if int(cfg.scallop_samples) < 0 or int(cfg.coverage_samples) < 0:
        raise InvalidConfigError("analysis sample counts must be >= 0")
    if not cfg.tol > 0 or int(cfg.max_outer) < 1:
        raise InvalidConfigError("tol must be positive and max_outer >= 1")


def load_config(path, overrides: dict | None = None) -> JobConfig:
    p = Path(path)
    if not p.exists():
        raise InvalidConfigError(f"config file {p} not found")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"config is not valid JSON: {exc}") from None
    if isinstance(raw, dict) and raw.get("mesh") and not Path(raw["mesh"]).is_absolute():
        raw["mesh"] = str((p.parent / raw["mesh"]).resolve())
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_dict(raw)
