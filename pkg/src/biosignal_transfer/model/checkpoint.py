from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from biosignal_transfer.model.disentangled import DisentangledModel, ModelConfig

CHECKPOINT_FORMAT = "biosignal-transfer-checkpoint"
CHECKPOINT_VERSION = 1


def checkpoint_payload(model: DisentangledModel) -> dict[str, object]:
    # json writes floats with repr(), the shortest string that parses back to the same double.
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "parameters": {
            name: {"shape": list(value.shape), "values": value.ravel().tolist()}
            for name, value in sorted(model.parameters().items())
        },
    }


def save_checkpoint(model: DisentangledModel, path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(checkpoint_payload(model), sort_keys=True), encoding="utf-8")
    return target


def load_checkpoint(path: str | Path) -> DisentangledModel:
    source = Path(path)
    payload = json.loads(source.read_text(encoding="utf-8"))
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{source} is not a model checkpoint")
    version = int(payload.get("version", 0))
    if version != CHECKPOINT_VERSION:
        raise ValueError(
            f"{source}: unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )

    config = ModelConfig(**payload["config"])
    model = DisentangledModel.initialize(config, np.random.default_rng(0))
    state = {
        name: np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["parameters"].items()
    }
    model.load_state_dict(state)
    return model
