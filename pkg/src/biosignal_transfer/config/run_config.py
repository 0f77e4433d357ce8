"""Run configuration: built-in defaults < JSON config file < `--set` overrides < CLI flags.

The config file is a nested JSON object keyed by section:

    {"train": {"lambda_a": 0.1, "lambda_n": 0.005, "r_n": 0.2}, "eval": {"jobs": 4}}

Overrides address the same fields with dotted keys, e.g. `train.lambda_a=0.1`.
"""

from __future__ import annotations

import copy
import json
from collections.abc import Iterable, Mapping
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from biosignal_transfer.config.settings import get_settings
from biosignal_transfer.data.synthetic import SyntheticConfig
from biosignal_transfer.model.disentangled import Architecture, ConditioningMode
from biosignal_transfer.nn.core import SGDConfig
from biosignal_transfer.training.trainer import TrainConfig


class ConfigError(ValueError):
    """Invalid run configuration: unknown key, malformed override or out-of-range value."""


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ModelSection(_Section):
    latent_dim: int = Field(100, ge=1)
    encoder_hidden: int = Field(100, ge=1)
    head_hidden: int = Field(100, ge=1)
    conditioning_mode: ConditioningMode = ConditioningMode.NUISANCE_POSTERIOR


class TrainSection(_Section):
    lambda_a: float = Field(0.0, ge=0.0)
    lambda_n: float = Field(0.0, ge=0.0)
    r_n: float = Field(0.0, ge=0.0, le=1.0)
    learning_rate: float = Field(0.01, gt=0.0)
    batch_size: int = Field(16, ge=1)
    epochs: int = Field(200, ge=1)
    seed: int = 0
    early_stop_patience: int = Field(50, ge=0)
    adversary_steps: int = Field(1, ge=1)
    nuisance_in_joint_step: bool = True


class DataSection(_Section):
    manifest: str | None = None
    num_samples: int = Field(300, ge=1)
    dedup_relaxation: bool = True
    val_frac: float = Field(0.1, gt=0.0, lt=1.0)
    window: int | None = Field(None, ge=1)
    stride: int | None = Field(None, ge=1)


class SynthSection(_Section):
    num_subjects: int = Field(20, ge=1)
    num_classes: int = Field(4, ge=1)
    num_channels: int = Field(7, ge=1)
    num_samples: int = Field(300, ge=1)
    task_effect: float = Field(1.0, ge=0.0)
    subject_effect: float = Field(1.0, ge=0.0)
    noise: float = Field(0.5, ge=0.0)
    trials_per_pair: int = Field(1, ge=1)
    seed: int = 0


class EvalSection(_Section):
    aggregate: Literal["trial", "window"] = "trial"
    jobs: int = Field(default_factory=lambda: get_settings().default_jobs, ge=1)
    repeats: int = Field(1, ge=1)
    epsilon: float = Field(0.01, ge=0.0)
    grid: str = "table1"
    grid_file: str | None = None
    held_out: int | None = Field(None, ge=1)


class RunConfig(_Section):
    model: ModelSection = Field(default_factory=ModelSection)
    train: TrainSection = Field(default_factory=TrainSection)
    data: DataSection = Field(default_factory=DataSection)
    synth: SynthSection = Field(default_factory=SynthSection)
    eval: EvalSection = Field(default_factory=EvalSection)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            lambda_a=t.lambda_a,
            lambda_n=t.lambda_n,
            r_n=t.r_n,
            sgd=SGDConfig(learning_rate=t.learning_rate, batch_size=t.batch_size, epochs=t.epochs),
            seed=t.seed,
            conditioning_mode=self.model.conditioning_mode,
            early_stop_patience=t.early_stop_patience,
            adversary_steps=t.adversary_steps,
            nuisance_in_joint_step=t.nuisance_in_joint_step,
        )

    def architecture(self) -> Architecture:
        return Architecture(
            latent_dim=self.model.latent_dim,
            encoder_hidden=self.model.encoder_hidden,
            head_hidden=self.model.head_hidden,
        )

    def synthetic_config(self) -> SyntheticConfig:
        return SyntheticConfig(**self.synth.model_dump())

    def fingerprint(self) -> dict[str, Any]:
        """Everything that can change results; seeds and worker count are left out."""
        payload = self.model_dump(mode="json")
        payload["train"].pop("seed")
        payload["eval"].pop("jobs")
        return payload


def _known_key(dotted: str) -> tuple[str, str]:
    parts = dotted.split(".")
    if len(parts) != 2 or not all(parts):
        raise ConfigError(f"config key must look like 'section.field', got '{dotted}'")
    section, field = parts
    section_field = RunConfig.model_fields.get(section)
    if section_field is None:
        known = ", ".join(RunConfig.model_fields)
        raise ConfigError(f"unknown config section '{section}' (known: {known})")
    section_model = section_field.annotation
    if field not in section_model.model_fields:  # type: ignore[union-attr]
        raise ConfigError(f"unknown config key '{dotted}'")
    return section, field


def _parse_value(raw: str) -> Any:
    # JSON literals first (numbers, true/false/null); anything else is a plain string.
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_override(text: str) -> tuple[str, Any]:
    key, sep, raw = text.partition("=")
    if not sep:
        raise ConfigError(f"override must look like 'section.field=value', got '{text}'")
    key = key.strip()
    _known_key(key)
    return key, _parse_value(raw.strip())


def load_config_file(path: str | Path) -> dict[str, Any]:
    source = Path(path)
    try:
        payload = json.loads(source.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {source}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"{source}: top level must be a JSON object")
    return payload


def _set_dotted(payload: dict[str, Any], dotted: str, value: Any) -> None:
    section, field = _known_key(dotted)
    target = payload.setdefault(section, {})
    if not isinstance(target, dict):
        raise ConfigError(f"config section '{section}' must be an object")
    target[field] = value


def resolve_run_config(
    config_path: str | Path | None = None,
    overrides: Iterable[str] = (),
    flags: Mapping[str, Any] | None = None,
) -> RunConfig:
    """Merge the layers into a validated RunConfig; `flags` maps dotted keys to values."""
    payload: dict[str, Any] = {}
    if config_path is not None:
        payload = copy.deepcopy(load_config_file(config_path))
    for text in overrides:
        key, value = parse_override(text)
        _set_dotted(payload, key, value)
    for key, value in (flags or {}).items():
        if value is not None:
            _set_dotted(payload, key, value)

    try:
        config = RunConfig.model_validate(payload)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}"
            for error in exc.errors()
        )
        raise ConfigError(f"invalid run configuration: {problems}") from None

    if (config.data.window is None) != (config.data.stride is None):
        raise ConfigError("data.window and data.stride must be set together")
    try:
        config.train_config()
        config.synthetic_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return config
