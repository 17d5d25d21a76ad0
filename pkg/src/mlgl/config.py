"""Run configuration: JSON file -> validated dataclasses.

Unknown keys are rejected with their dotted path, so a typo in a config
file fails loudly instead of silently training with a default.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .graph import FUSION_MODES


def _require(d: dict, known: tuple[str, ...], path: str):
    for key in d:
        if key not in known:
            raise ConfigError(f"{path}{key}: unknown key")


def _get_int(d: dict, key: str, default: int, path: str, minimum: int | None = None) -> int:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}{key}: expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}{key}: must be >= {minimum}, got {v}")
    return v


def _get_float(d: dict, key: str, default: float, path: str,
               minimum: float | None = None, maximum: float | None = None,
               exclusive_min: bool = False) -> float:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}{key}: expected a number, got {v!r}")
    v = float(v)
    if minimum is not None and (v <= minimum if exclusive_min else v < minimum):
        op = ">" if exclusive_min else ">="
        raise ConfigError(f"{path}{key}: must be {op} {minimum}, got {v}")
    if maximum is not None and v > maximum:
        raise ConfigError(f"{path}{key}: must be <= {maximum}, got {v}")
    return v


def _get_str(d: dict, key: str, default: str, path: str, choices=None) -> str:
    v = d.get(key, default)
    if not isinstance(v, str):
        raise ConfigError(f"{path}{key}: expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(f"{path}{key}: must be one of {', '.join(choices)}; got {v!r}")
    return v


def _get_bool(d: dict, key: str, default: bool, path: str) -> bool:
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{path}{key}: expected true or false, got {v!r}")
    return v


def _get_opt_str(d: dict, key: str, path: str) -> str | None:
    v = d.get(key)
    if v is not None and not isinstance(v, str):
        raise ConfigError(f"{path}{key}: expected a string or null, got {v!r}")
    return v


@dataclass
class FeatureConfig:
    sample_rate: int = 32000
    n_mels: int = 64
    window_seconds: float = 0.046
    downmix: str = "mean"
    log_floor: float = 1e-10

    @staticmethod
    def from_dict(d: dict, path: str = "features.") -> "FeatureConfig":
        _require(d, ("sample_rate", "n_mels", "window_seconds", "downmix", "log_floor"), path)
        return FeatureConfig(
            sample_rate=_get_int(d, "sample_rate", 32000, path, minimum=1000),
            n_mels=_get_int(d, "n_mels", 64, path, minimum=2),
            window_seconds=_get_float(d, "window_seconds", 0.046, path,
                                      minimum=0.0, exclusive_min=True),
            downmix=_get_str(d, "downmix", "mean", path, ("mean", "left", "right")),
            log_floor=_get_float(d, "log_floor", 1e-10, path,
                                 minimum=0.0, exclusive_min=True))


@dataclass
class ModelConfig:
    channels: list = field(default_factory=lambda: [[64], [128], [256, 256]])
    embed_dim: int = 64
    gcn_layers: int = 3
    dropout: float = 0.2
    fusion: str = "attention"
    attention_projections: bool = False
    gating_shared_bias: bool = True

    @staticmethod
    def from_dict(d: dict, path: str = "model.") -> "ModelConfig":
        _require(d, ("channels", "embed_dim", "gcn_layers", "dropout", "fusion",
                     "attention_projections", "gating_shared_bias"), path)
        channels = d.get("channels", [[64], [128], [256, 256]])
        if (not isinstance(channels, list) or not channels
                or any(not isinstance(b, list) or not b for b in channels)
                or any(isinstance(w, bool) or not isinstance(w, int) or w < 1
                       for b in channels for w in b)):
            raise ConfigError(f"{path}channels: expected a non-empty list of non-empty "
                              f"lists of positive integers, got {channels!r}")
        return ModelConfig(
            channels=[list(b) for b in channels],
            embed_dim=_get_int(d, "embed_dim", 64, path, minimum=1),
            gcn_layers=_get_int(d, "gcn_layers", 3, path, minimum=1),
            dropout=_get_float(d, "dropout", 0.2, path, minimum=0.0),
            fusion=_get_str(d, "fusion", "attention", path, FUSION_MODES),
            attention_projections=_get_bool(d, "attention_projections", False, path),
            gating_shared_bias=_get_bool(d, "gating_shared_bias", True, path))

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"model.dropout: must be in [0, 1), got {self.dropout}")


@dataclass
class TrainingConfig:
    batch_size: int = 64
    lr: float = 5e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 400
    loss_weights: list = field(default_factory=lambda: [1.0] * 9)
    val_interval: int = 1
    dtype: str = "float32"

    @staticmethod
    def from_dict(d: dict, path: str = "training.") -> "TrainingConfig":
        _require(d, ("batch_size", "lr", "weight_decay", "beta1", "beta2", "eps",
                     "epochs", "loss_weights", "val_interval", "dtype"), path)
        weights = d.get("loss_weights", [1.0] * 9)
        if (not isinstance(weights, list) or len(weights) != 9
                or any(isinstance(w, bool) or not isinstance(w, (int, float)) or w < 0
                       for w in weights)):
            raise ConfigError(f"{path}loss_weights: expected 9 non-negative numbers, "
                              f"got {weights!r}")
        if all(w == 0 for w in weights):
            raise ConfigError(f"{path}loss_weights: at least one weight must be positive")
        return TrainingConfig(
            batch_size=_get_int(d, "batch_size", 64, path, minimum=1),
            lr=_get_float(d, "lr", 5e-4, path, minimum=0.0, exclusive_min=True),
            weight_decay=_get_float(d, "weight_decay", 0.01, path, minimum=0.0),
            beta1=_get_float(d, "beta1", 0.9, path, minimum=0.0, maximum=0.9999),
            beta2=_get_float(d, "beta2", 0.999, path, minimum=0.0, maximum=0.9999),
            eps=_get_float(d, "eps", 1e-8, path, minimum=0.0, exclusive_min=True),
            epochs=_get_int(d, "epochs", 400, path, minimum=0),
            loss_weights=[float(w) for w in weights],
            val_interval=_get_int(d, "val_interval", 1, path, minimum=1),
            dtype=_get_str(d, "dtype", "float32", path, ("float32", "float64")))


@dataclass
class PathsConfig:
    labels_csv: str | None = None
    audio_dir: str | None = None
    taxonomy: str | None = None
    split_file: str | None = None
    out_dir: str = "runs/default"

    @staticmethod
    def from_dict(d: dict, path: str = "paths.") -> "PathsConfig":
        _require(d, ("labels_csv", "audio_dir", "taxonomy", "split_file", "out_dir"), path)
        out_dir = d.get("out_dir", "runs/default")
        if not isinstance(out_dir, str):
            raise ConfigError(f"{path}out_dir: expected a string, got {out_dir!r}")
        return PathsConfig(
            labels_csv=_get_opt_str(d, "labels_csv", path),
            audio_dir=_get_opt_str(d, "audio_dir", path),
            taxonomy=_get_opt_str(d, "taxonomy", path),
            split_file=_get_opt_str(d, "split_file", path),
            out_dir=out_dir)


@dataclass
class AnalysisConfig:
    source: str = "heads"
    spearman_method: str = "t"

    @staticmethod
    def from_dict(d: dict, path: str = "analysis.") -> "AnalysisConfig":
        _require(d, ("source", "spearman_method"), path)
        return AnalysisConfig(
            source=_get_str(d, "source", "heads", path, ("heads", "pca")),
            spearman_method=_get_str(d, "spearman_method", "t", path,
                                     ("auto", "t", "exact")))


@dataclass
class RunConfig:
    seed: int = 0
    features: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError(f"config root must be an object, got {type(d).__name__}")
        _require(d, ("seed", "features", "model", "training", "paths", "analysis"), "")
        for key in ("features", "model", "training", "paths", "analysis"):
            if key in d and not isinstance(d[key], dict):
                raise ConfigError(f"{key}: expected an object, got {d[key]!r}")
        return RunConfig(
            seed=_get_int(d, "seed", 0, "", minimum=0),
            features=FeatureConfig.from_dict(d.get("features", {})),
            model=ModelConfig.from_dict(d.get("model", {})),
            training=TrainingConfig.from_dict(d.get("training", {})),
            paths=PathsConfig.from_dict(d.get("paths", {})),
            analysis=AnalysisConfig.from_dict(d.get("analysis", {})))

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{p} is not valid JSON: {e}") from None
    return RunConfig.from_dict(raw)
