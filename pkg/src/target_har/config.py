"""Pipeline configuration: TOML file plus command-line overrides.

Precedence is flag > file > built-in default. The file has one table per
stage plus a top-level `seed`:

    seed = 7
    [tracking]
    tau_iou = 0.3
    [encoding]
    channels = 3
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from .ingest import tomllib


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrackingConfig:
    tau_iou: float = 0.3
    min_length: int = 15
    min_mean_keypoints: float = 5.0
    keypoint_floor: float = 0.05
    alpha: float = 0.6
    abs_threshold: Optional[float] = None


@dataclass(frozen=True)
class EncodingSection:
    channels: int = 3
    sigma: float = 2.0
    scale: float = 0.125
    confidence_floor: float = 0.05


@dataclass(frozen=True)
class ClipSection:
    min_dur: float = 0.2
    max_dur: float = 4.0
    balance_cap: Optional[int] = None
    val_fraction: float = 0.1
    test_subjects: Tuple[str, ...] = ()


@dataclass(frozen=True)
class TrainSection:
    lr: float = 0.01
    batch_size: int = 70
    dropout: float = 0.3
    epochs: int = 30
    sigma_aug: float = 0.01
    stop_at_accuracy: Optional[float] = None
    bn_recalibration: int = 500
    block_filters: Tuple[int, int] = (128, 256)


@dataclass(frozen=True)
class SynthSection:
    kind: str = "scenario"  # "scenario" or "actions"
    num_actors: int = 4
    num_frames: int = 1200
    clips_per_class: int = 100
    distractors: int = 0
    sigma_emb: float = 0.05


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    encoding: EncodingSection = field(default_factory=EncodingSection)
    clips: ClipSection = field(default_factory=ClipSection)
    train: TrainSection = field(default_factory=TrainSection)
    synth: SynthSection = field(default_factory=SynthSection)


_SECTION_TYPES = {
    "tracking": TrackingConfig,
    "encoding": EncodingSection,
    "clips": ClipSection,
    "train": TrainSection,
    "synth": SynthSection,
}


def _coerce(where: str, hint: Any, value: Any) -> Any:
    if typing.get_origin(hint) is typing.Union:
        if value is None:
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    if typing.get_origin(hint) is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected a list")
        item = typing.get_args(hint)[0]
        return tuple(_coerce(where, item, v) for v in value)
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported value {value!r}")


def _apply(section_obj, section: str, values: Mapping[str, Any]):
    hints = typing.get_type_hints(type(section_obj))
    unknown = set(values) - set(hints)
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
    changes = {k: _coerce(f"{section}.{k}", hints[k], v) for k, v in values.items()}
    return dataclasses.replace(section_obj, **changes)


def merge(cfg: PipelineConfig, data: Mapping[str, Any]) -> PipelineConfig:
    """Overlay a nested mapping (file contents or flags) onto `cfg`."""
    changes: Dict[str, Any] = {}
    for key, value in data.items():
        if key == "seed":
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ConfigError("seed: expected a non-negative integer")
            changes["seed"] = value
        elif key in _SECTION_TYPES:
            if not isinstance(value, Mapping):
                raise ConfigError(f"{key}: expected a table")
            changes[key] = _apply(getattr(cfg, key), key, value)
        else:
            raise ConfigError(f"unknown config key: {key}")
    return validate(dataclasses.replace(cfg, **changes))


def validate(cfg: PipelineConfig) -> PipelineConfig:
    t, e, c, tr, s = cfg.tracking, cfg.encoding, cfg.clips, cfg.train, cfg.synth
    checks = [
        (0.0 <= t.tau_iou <= 1.0, "tracking.tau_iou must lie in [0, 1]"),
        (t.min_length >= 1, "tracking.min_length must be >= 1"),
        (t.alpha > 0, "tracking.alpha must be positive"),
        (t.abs_threshold is None or t.abs_threshold > 0, "tracking.abs_threshold must be positive"),
        (e.channels >= 2, "encoding.channels must be >= 2"),
        (0.0 < e.scale <= 1.0, "encoding.scale must lie in (0, 1]"),
        (e.sigma > 0, "encoding.sigma must be positive"),
        (0 < c.min_dur <= c.max_dur, "clips.min_dur must be positive and <= clips.max_dur"),
        (c.balance_cap is None or c.balance_cap >= 0, "clips.balance_cap must be >= 0"),
        (0.0 <= c.val_fraction < 1.0, "clips.val_fraction must lie in [0, 1)"),
        (tr.lr >= 0, "train.lr must be >= 0"),
        (tr.batch_size >= 1, "train.batch_size must be >= 1"),
        (0.0 <= tr.dropout < 1.0, "train.dropout must lie in [0, 1)"),
        (tr.epochs >= 1, "train.epochs must be >= 1"),
        (tr.bn_recalibration >= 0, "train.bn_recalibration must be >= 0"),
        (len(tr.block_filters) == 2 and min(tr.block_filters) >= 1, "train.block_filters must be two positive ints"),
        (s.kind in ("scenario", "actions"), "synth.kind must be 'scenario' or 'actions'"),
        (s.num_actors >= 1 and s.num_frames >= 1, "synth.num_actors and synth.num_frames must be >= 1"),
        (s.clips_per_class >= 1 and s.distractors >= 0, "synth.clips_per_class must be >= 1, distractors >= 0"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)
    return cfg


def load_config(path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config {path}: {exc}") from None
        cfg = merge(cfg, data)
    if overrides:
        cfg = merge(cfg, overrides)
    return cfg
