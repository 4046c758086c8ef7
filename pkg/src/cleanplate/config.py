"""Pipeline configuration: JSON schema, validation, canonical hashing."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class RefineSection:
    enabled: bool = True
    pitch_range_deg: float = 1.0
    yaw_range_deg: float = 1.0
    step_deg: float = 0.05
    ring_px: int = 20


@dataclass
class SampleSection:
    window_n: int = 3
    depth_tol_m: float = 0.05
    depth_tol_rel: float = 0.02


@dataclass
class BpSection:
    enabled: bool = True
    iterations: int = 30
    alpha: float = 10.0


@dataclass
class HarmonizeSection:
    enabled: bool = True


@dataclass
class PoissonSection:
    tol: float = 1e-8
    max_iter_factor: int = 10


@dataclass
class FuseSection:
    enabled: bool = True
    max_rms_m: float = 0.10


@dataclass
class TemporalSection:
    enabled: bool = True
    radius: int = 2
    min_samples: int = 2
    flow_dir: str | None = None  # precomputed .flo files; None = built-in flow


@dataclass
class MapSection:
    voxel_m: float = 0.05


@dataclass
class DebugSection:
    save_depth: bool = False
    save_composite: bool = False


@dataclass
class PipelineConfig:
    datasets: list[str] = field(default_factory=list)
    output_dir: str = "out"
    seed: int = 0
    map: MapSection = field(default_factory=MapSection)
    refine: RefineSection = field(default_factory=RefineSection)
    sample: SampleSection = field(default_factory=SampleSection)
    bp: BpSection = field(default_factory=BpSection)
    harmonize: HarmonizeSection = field(default_factory=HarmonizeSection)
    poisson: PoissonSection = field(default_factory=PoissonSection)
    fuse: FuseSection = field(default_factory=FuseSection)
    temporal: TemporalSection = field(default_factory=TemporalSection)
    debug: DebugSection = field(default_factory=DebugSection)

    def validate(self) -> None:
        if not self.datasets:
            raise ConfigError("config must list at least one dataset")
        for d in self.datasets:
            if not Path(d).is_dir():
                raise ConfigError(f"dataset path does not exist: {d}")
        if self.temporal.flow_dir is not None and not Path(self.temporal.flow_dir).is_dir():
            raise ConfigError(f"flow_dir does not exist: {self.temporal.flow_dir}")
        if self.sample.window_n < 1 or self.sample.window_n % 2 == 0:
            raise ConfigError("sample.window_n must be a positive odd integer")
        if self.bp.iterations < 0:
            raise ConfigError("bp.iterations must be >= 0")
        if self.map.voxel_m <= 0:
            raise ConfigError("map.voxel_m must be positive")
        if self.poisson.tol <= 0 or self.poisson.max_iter_factor < 1:
            raise ConfigError("invalid poisson settings")
        if self.temporal.radius < 1 or not (
            1 <= self.temporal.min_samples <= 2 * self.temporal.radius + 1
        ):
            raise ConfigError("invalid temporal settings")

    def enabled_stages(self) -> list[str]:
        stages = ["map"]
        if self.fuse.enabled and len(self.datasets) > 1:
            stages.append("fuse")
        stages.append("depth")
        if self.refine.enabled:
            stages.append("refine")
        stages.append("sample")
        if self.bp.enabled:
            stages.append("bp")
        if self.harmonize.enabled:
            stages.append("harmonize")
        if self.temporal.enabled:
            stages.append("temporal")
        return stages

    def canonical_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


_SECTIONS = {
    "map": MapSection,
    "refine": RefineSection,
    "sample": SampleSection,
    "bp": BpSection,
    "harmonize": HarmonizeSection,
    "poisson": PoissonSection,
    "fuse": FuseSection,
    "temporal": TemporalSection,
    "debug": DebugSection,
}


def _build_section(cls, doc: dict, prefix: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(prefix + k for k in unknown)}")
    return cls(**doc)


def config_from_dict(doc: dict) -> PipelineConfig:
    """Strict parse: unknown keys anywhere are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    top_allowed = {"datasets", "output_dir", "seed"} | set(_SECTIONS)
    unknown = set(doc) - top_allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = PipelineConfig(
        datasets=list(doc.get("datasets", [])),
        output_dir=doc.get("output_dir", "out"),
        seed=int(doc.get("seed", 0)),
    )
    for name, cls in _SECTIONS.items():
        if name in doc:
            section = doc[name]
            if not isinstance(section, dict):
                raise ConfigError(f"config section '{name}' must be an object")
            setattr(cfg, name, _build_section(cls, section, f"{name}."))
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> PipelineConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_dict(doc)
