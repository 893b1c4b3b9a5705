"""Declarative pipeline configuration.

One YAML file with per-stage sections; CLI flags override fields. Every
stage echoes the resolved configuration into its output manifest so runs are
reproducible from the artifacts alone.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import yaml

from .errors import ConfigError
from .mixing import MixConfig
from .sampling import SamplerConfig


@dataclass(frozen=True)
class RemovalConfig:
    dilation_radius: int = 4
    max_instances: int = 3
    max_area_fraction: float = 0.4
    long_side_limit: int = 512
    num_images: int | None = None


@dataclass(frozen=True)
class GenerateConfig:
    steps: int = 100


@dataclass(frozen=True)
class AnnotateConfig:
    score_threshold: float = 0.4
    max_boxes_per_query: int | None = None


@dataclass(frozen=True)
class MetricsConfig:
    text_source: str = "bare_template"


@dataclass(frozen=True)
class MixSection:
    ratio: float = 0.2
    strategy: str = "batch_sampling"
    batch_size: int = 8
    total_batches: int = 90_000
    real_pool: int | None = None  # default: dataset image count
    synth_pool: int | None = None  # default: synthetic dataset image count

    def to_mix_config(self, seed: int) -> MixConfig:
        return MixConfig(
            ratio=self.ratio,
            strategy=self.strategy,
            batch_size=self.batch_size,
            total_batches=self.total_batches,
            seed=seed,
        )


@dataclass(frozen=True)
class PipelineConfig:
    annotations: Path
    images_dir: Path
    output_root: Path
    taxonomy: Path | None = None
    backend: str = "stub"  # "stub" or "remote:<url>"
    ground_fixtures: Path | None = None
    embed_dim: int = 64
    template_bank: Path | None = None
    seed: int = 0
    removal: RemovalConfig = field(default_factory=RemovalConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    generate: GenerateConfig = field(default_factory=GenerateConfig)
    annotate: AnnotateConfig = field(default_factory=AnnotateConfig)
    mix: MixSection = field(default_factory=MixSection)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def echo(self) -> dict:
        """JSON-safe resolved configuration for manifest headers."""
        raw = asdict(self)
        return json.loads(json.dumps(raw, default=str))


def _section(data: dict, name: str) -> dict:
    section = data.get(name) or {}
    if not isinstance(section, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return section


def _build(cls, data: dict, name: str):
    known = {f: data[f] for f in data}
    try:
        return cls(**known)
    except TypeError as exc:
        raise ConfigError(f"config section {name!r}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config section {name!r}: {exc}") from exc


def load_config(path, overrides: dict | None = None) -> PipelineConfig:
    """Parse, apply overrides, and validate referenced paths."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    dataset = _section(data, "dataset")
    backend_section = _section(data, "backend")
    for key in ("annotations", "images_dir"):
        if key not in dataset:
            raise ConfigError(f"config missing dataset.{key}")

    base_dir = path.parent

    def _path(value) -> Path:
        p = Path(value)
        return p if p.is_absolute() else base_dir / p

    sampler_raw = _section(data, "sampler")
    sampler_raw.setdefault("rng_seed", data.get("seed", 0))

    cfg = PipelineConfig(
        annotations=_path(dataset["annotations"]),
        images_dir=_path(dataset["images_dir"]),
        taxonomy=_path(dataset["taxonomy"]) if dataset.get("taxonomy") else None,
        output_root=_path(data.get("output_root", "out")),
        backend=backend_section.get("mode", "stub"),
        ground_fixtures=(
            _path(backend_section["ground_fixtures"])
            if backend_section.get("ground_fixtures")
            else None
        ),
        embed_dim=int(backend_section.get("embed_dim", 64)),
        template_bank=_path(data["template_bank"]) if data.get("template_bank") else None,
        seed=int(data.get("seed", 0)),
        removal=_build(RemovalConfig, _section(data, "removal"), "removal"),
        sampler=_build(SamplerConfig, sampler_raw, "sampler"),
        generate=_build(GenerateConfig, _section(data, "generate"), "generate"),
        annotate=_build(AnnotateConfig, _section(data, "annotate"), "annotate"),
        mix=_build(MixSection, _section(data, "mix"), "mix"),
        metrics=_build(MetricsConfig, _section(data, "metrics"), "metrics"),
    )
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    validate_config(cfg)
    return cfg


def apply_overrides(cfg: PipelineConfig, overrides: dict) -> PipelineConfig:
    changes = {}
    if overrides.get("seed") is not None:
        seed = int(overrides["seed"])
        changes["seed"] = seed
        changes["sampler"] = replace(cfg.sampler, rng_seed=seed)
    if overrides.get("backend") is not None:
        changes["backend"] = overrides["backend"]
    if overrides.get("output_root") is not None:
        changes["output_root"] = Path(overrides["output_root"])
    return replace(cfg, **changes) if changes else cfg


def validate_config(cfg: PipelineConfig) -> None:
    if not cfg.annotations.exists():
        raise ConfigError(f"annotations file not found: {cfg.annotations}")
    if not cfg.images_dir.exists():
        raise ConfigError(f"images directory not found: {cfg.images_dir}")
    if cfg.taxonomy is not None and not cfg.taxonomy.exists():
        raise ConfigError(f"taxonomy file not found: {cfg.taxonomy}")
    if cfg.ground_fixtures is not None and not cfg.ground_fixtures.exists():
        raise ConfigError(f"ground fixtures file not found: {cfg.ground_fixtures}")
    if cfg.template_bank is not None and not cfg.template_bank.exists():
        raise ConfigError(f"template bank not found: {cfg.template_bank}")
    if cfg.backend != "stub" and not cfg.backend.startswith("remote:"):
        raise ConfigError(f"backend must be 'stub' or 'remote:<url>', got {cfg.backend!r}")
