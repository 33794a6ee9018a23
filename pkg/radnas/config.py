"""
Pipeline configuration: one YAML file with nested sections, dotted-path
overrides, and environment-bound settings.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from radnas.detector.layout import ModelConfig
from radnas.detector.trainer import TrainHyper
from radnas.exceptions import ConfigError
from radnas.nas.evolution import SearchConfig
from radnas.nas.space import build_search_space
from radnas.rdmap_io.synth import SynthConfig
from radnas.utils import canonical_json, sha256_text

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


class Settings(BaseSettings):
    """Environment override for the output root (RADNAS_OUT)."""

    model_config = SettingsConfigDict(env_prefix="RADNAS_", extra="ignore")

    out: Optional[str] = None


_env_loaded = False


def load_settings() -> Settings:
    global _env_loaded
    if not _env_loaded:
        load_dotenv()
        _env_loaded = True
    return Settings()


class DatasetSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    source: Literal["synth", "manifest"] = "synth"
    manifests: Dict[str, str] = Field(default_factory=dict, description="split -> manifest.jsonl when source is 'manifest'")
    flip_prob: float = Field(0.5, ge=0.0, le=1.0)


class RetrainSection(TrainHyper):
    top_n: int = Field(5, ge=1)


class EvalSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    splits: Tuple[str, ...] = ("val",)
    batch_size: int = Field(32, ge=1)
    random_baseline: int = Field(10, ge=0, description="uniformly random subnets scored next to the search winner")


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int
    output_dir: str = "runs/desk"
    num_workers: int = Field(0, ge=0)
    dataset: DatasetSection = Field(default_factory=DatasetSection)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    supernet: TrainHyper = Field(default_factory=TrainHyper)
    retrain: RetrainSection = Field(default_factory=RetrainSection)
    search: SearchConfig = Field(default_factory=SearchConfig)
    eval: EvalSection = Field(default_factory=EvalSection)


def config_hash(config: PipelineConfig) -> str:
    return sha256_text(canonical_json(config.model_dump(mode="json")))


def dump_config(config: PipelineConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True)


def parse_override(item: str) -> Tuple[List[str], Any]:
    if "=" not in item:
        raise ConfigError([f"override {item!r} is not of the form key=value"])
    key, raw = item.split("=", 1)
    path = [p for p in key.strip().split(".") if p]
    if not path:
        raise ConfigError([f"override {item!r} has an empty key"])
    return path, yaml.safe_load(raw)


def apply_overrides(data: Dict[str, Any], overrides: Sequence[str]) -> Dict[str, Any]:
    for item in overrides:
        path, value = parse_override(item)
        node = data
        for part in path[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[path[-1]] = value
    return data


def _read_yaml(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError([f"cannot read config {path}: {e}"]) from e
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as e:
        raise ConfigError([f"{path} is not valid YAML: {e}"]) from e
    if not isinstance(data, dict):
        raise ConfigError([f"{path} must contain a mapping at top level"])
    return data


def _absolutize_manifests(data: Dict[str, Any], base_dir: Path) -> Dict[str, Any]:
    """Relative manifest paths are taken relative to the config file."""
    dataset = data.get("dataset")
    manifests = dataset.get("manifests") if isinstance(dataset, dict) else None
    if isinstance(manifests, dict):
        for split, value in manifests.items():
            if isinstance(value, str) and not Path(value).is_absolute():
                manifests[split] = str((base_dir / value).resolve())
    return data


def _pydantic_violations(error: ValidationError) -> List[str]:
    out = []
    for err in error.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "config"
        out.append(f"{loc}: {err['msg']}")
    return out


def cross_field_violations(config: PipelineConfig) -> List[str]:
    violations = []
    h, w = config.model.input_size
    if h % 32 or w % 32:
        violations.append(f"model.input_size: {h}x{w} is not divisible by 32")
    if config.dataset.source == "synth":
        if config.synth.num_classes > config.model.num_classes:
            violations.append(
                f"model.num_classes: {config.model.num_classes} is smaller than synth.num_classes ({config.synth.num_classes})"
            )
        if config.synth.train == 0 or config.synth.val == 0:
            violations.append("synth.train / synth.val: both splits must be non-empty")
    else:
        for split in ("train", "val"):
            if split not in config.dataset.manifests:
                violations.append(f"dataset.manifests.{split}: required when dataset.source is 'manifest'")
        for split, manifest in config.dataset.manifests.items():
            if split not in SPLITS:
                violations.append(f"dataset.manifests.{split}: unknown split")
            path = Path(manifest)
            if not path.is_file():
                violations.append(f"dataset.manifests.{split}: {path} does not exist")
    for split in config.eval.splits:
        if split not in SPLITS:
            violations.append(f"eval.splits: unknown split {split!r}")
    if config.retrain.top_n > config.search.population:
        violations.append(f"retrain.top_n ({config.retrain.top_n}) exceeds search.population ({config.search.population})")
    try:
        build_search_space(config.model, reduced=config.search.reduced_space).cardinality
    except Exception as e:
        violations.append(f"search.reduced_space: search space cannot be built for model.adapter={config.model.adapter!r}: {e}")
    return violations


def load_config(path: Union[str, Path], overrides: Sequence[str] = ()) -> PipelineConfig:
    """Parse, override and validate; raises ConfigError with every violation found."""
    data = _absolutize_manifests(apply_overrides(_read_yaml(path), overrides), Path(path).parent)
    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_pydantic_violations(e)) from e
    violations = cross_field_violations(config)
    if violations:
        raise ConfigError(violations)
    return config


def validate_config(path: Union[str, Path], overrides: Sequence[str] = ()) -> List[str]:
    """Violations of the config at `path` (empty when it is valid); raises ConfigError if unreadable."""
    data = _absolutize_manifests(apply_overrides(_read_yaml(path), overrides), Path(path).parent)
    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as e:
        return _pydantic_violations(e)
    return cross_field_violations(config)


def resolve_output_dir(config: PipelineConfig, settings: Optional[Settings] = None) -> Path:
    settings = settings or load_settings()
    return Path(settings.out or config.output_dir)
