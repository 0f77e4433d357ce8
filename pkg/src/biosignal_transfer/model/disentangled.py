from __future__ import annotations

import copy
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from enum import Enum
from typing import Protocol

import numpy as np

from biosignal_transfer.nn.core import (
    DenseLayer,
    DimensionError,
    LayerStateError,
    Matrix,
    Vector,
    relu,
    relu_backward,
    softmax,
)
from biosignal_transfer.utils.numbers import round_half_up


class ConditioningMode(str, Enum):
    ONEHOT_TRAIN = "onehot_train"
    ZEROS = "zeros"
    UNIFORM = "uniform"
    NUISANCE_POSTERIOR = "nuisance_posterior"


def parse_conditioning_mode(value: str | ConditioningMode) -> ConditioningMode:
    if isinstance(value, ConditioningMode):
        return value
    text = str(value or "").strip().lower()
    for mode in ConditioningMode:
        if mode.value == text:
            return mode
    allowed = ", ".join(mode.value for mode in ConditioningMode)
    raise ValueError(f"conditioning mode must be one of: {allowed}; got '{value}'")


def nuisance_width(latent_dim: int, r_n: float) -> int:
    if not 0.0 <= r_n <= 1.0:
        raise ValueError(f"r_N must lie in [0, 1], got {r_n}")
    return round_half_up(latent_dim * r_n)


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    num_classes: int
    num_subjects: int
    latent_dim: int = 100
    encoder_hidden: int = 100
    r_n: float = 0.0
    head_hidden: int = 100
    conditioning_mode: ConditioningMode = ConditioningMode.NUISANCE_POSTERIOR

    def __post_init__(self) -> None:
        for name in ("input_dim", "num_classes", "num_subjects", "latent_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.encoder_hidden < 1 or self.head_hidden < 1:
            raise ValueError("hidden widths must be >= 1")
        nuisance_width(self.latent_dim, self.r_n)
        object.__setattr__(
            self, "conditioning_mode", parse_conditioning_mode(self.conditioning_mode)
        )

    @property
    def nuisance_dim(self) -> int:
        return nuisance_width(self.latent_dim, self.r_n)

    @property
    def adversary_dim(self) -> int:
        return self.latent_dim - self.nuisance_dim

    @property
    def classifier_input_dim(self) -> int:
        return self.latent_dim + self.num_subjects

    def to_dict(self) -> dict[str, object]:
        return {
            "input_dim": self.input_dim,
            "num_classes": self.num_classes,
            "num_subjects": self.num_subjects,
            "latent_dim": self.latent_dim,
            "encoder_hidden": self.encoder_hidden,
            "r_n": self.r_n,
            "head_hidden": self.head_hidden,
            "conditioning_mode": self.conditioning_mode.value,
        }


class Encoder(Protocol):
    """Anything mapping flattened trials to an n x d latent code with a matching backward."""

    @property
    def output_dim(self) -> int: ...

    def forward(self, x: Matrix) -> Matrix: ...

    def backward(self, grad_out: Matrix) -> tuple[Matrix, dict[str, np.ndarray]]: ...

    def parameters(self) -> dict[str, np.ndarray]: ...

    def relu_inputs(self) -> list[Matrix]: ...


@dataclass
class MLP:
    """Linear -> ReLU -> Linear. Used for the encoder and for all three heads."""

    hidden: DenseLayer
    output: DenseLayer
    _pre: Matrix | None = field(default=None, repr=False)

    @classmethod
    def create(
        cls, rng: np.random.Generator, in_dim: int, hidden_dim: int, out_dim: int
    ) -> MLP:
        return cls(
            hidden=DenseLayer.create(rng, in_dim, hidden_dim),
            output=DenseLayer.create(rng, hidden_dim, out_dim),
        )

    @property
    def input_dim(self) -> int:
        return self.hidden.fan_in

    @property
    def output_dim(self) -> int:
        return self.output.fan_out

    def forward(self, x: Matrix) -> Matrix:
        self._pre = self.hidden.forward(x)
        return self.output.forward(relu(self._pre))

    def backward(self, grad_out: Matrix) -> tuple[Matrix, dict[str, np.ndarray]]:
        if self._pre is None:
            raise LayerStateError("MLP.backward called before forward")
        grad_h, grad_w2, grad_b2 = self.output.backward(grad_out)
        grad_pre = relu_backward(self._pre, grad_h)
        grad_in, grad_w1, grad_b1 = self.hidden.backward(grad_pre)
        return grad_in, {
            "hidden.weights": grad_w1,
            "hidden.bias": grad_b1,
            "output.weights": grad_w2,
            "output.bias": grad_b2,
        }

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "hidden.weights": self.hidden.weights,
            "hidden.bias": self.hidden.bias,
            "output.weights": self.output.weights,
            "output.bias": self.output.bias,
        }

    def relu_inputs(self) -> list[Matrix]:
        return [] if self._pre is None else [self._pre]


GROUPS: tuple[str, ...] = ("encoder", "adversary", "nuisance", "classifier")


@dataclass
class DisentangledModel:
    config: ModelConfig
    encoder: Encoder
    adversary: MLP
    nuisance: MLP
    classifier: MLP

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> DisentangledModel:
        encoder = MLP.create(rng, config.input_dim, config.encoder_hidden, config.latent_dim)
        adversary = MLP.create(
            rng, config.adversary_dim, config.head_hidden, config.num_subjects
        )
        nuisance = MLP.create(
            rng, config.nuisance_dim, config.head_hidden, config.num_subjects
        )
        classifier = MLP.create(
            rng, config.classifier_input_dim, config.head_hidden, config.num_classes
        )
        return cls(
            config=config,
            encoder=encoder,
            adversary=adversary,
            nuisance=nuisance,
            classifier=classifier,
        )

    def group(self, name: str) -> Encoder | MLP:
        if name not in GROUPS:
            raise KeyError(f"unknown parameter group '{name}'")
        return getattr(self, name)

    def parameters(self, groups: Sequence[str] = GROUPS) -> dict[str, np.ndarray]:
        """Live parameter arrays keyed `<group>.<layer>.<weights|bias>`."""
        out: dict[str, np.ndarray] = {}
        for name in groups:
            for key, value in self.group(name).parameters().items():
                out[f"{name}.{key}"] = value
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: value.copy() for name, value in self.parameters().items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        live = self.parameters()
        missing = sorted(set(live) - set(state))
        if missing:
            raise KeyError(f"state is missing parameters: {', '.join(missing)}")
        for name, target in live.items():
            source = np.asarray(state[name], dtype=np.float64)
            if source.shape != target.shape:
                raise DimensionError(
                    f"parameter '{name}' has shape {target.shape}, state has {source.shape}"
                )
            np.copyto(target, source)

    def copy(self) -> DisentangledModel:
        return copy.deepcopy(self)


@dataclass(frozen=True)
class ForwardOutputs:
    z: Matrix
    y_logits: Matrix
    adv_logits: Matrix
    nuis_logits: Matrix


def encode(model: DisentangledModel, x_batch: Matrix) -> Matrix:
    x = np.asarray(x_batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.config.input_dim:
        raise DimensionError(
            f"encoder expects {model.config.input_dim} input columns, got shape {x.shape}"
        )
    return model.encoder.forward(x)


def split_latent(z: Matrix, r_n: float) -> tuple[Matrix, Matrix]:
    """Column partition z -> (z_a, z_n): z_a first, z_n the last round-half-up(d * r_N) columns."""
    z = np.asarray(z, dtype=np.float64)
    d = z.shape[1]
    width = nuisance_width(d, r_n)
    cut = d - width
    return z[:, :cut], z[:, cut:]


def condition_vector(
    s: int | None,
    mode: ConditioningMode | str,
    num_subjects: int,
    nuisance_logits: Vector | None = None,
) -> Vector:
    mode = parse_conditioning_mode(mode)
    if mode is ConditioningMode.ONEHOT_TRAIN:
        if s is None or not 1 <= int(s) <= num_subjects:
            raise ValueError(f"subject id must lie in [1, {num_subjects}], got {s}")
        out = np.zeros(num_subjects, dtype=np.float64)
        out[int(s) - 1] = 1.0
        return out
    if mode is ConditioningMode.ZEROS:
        return np.zeros(num_subjects, dtype=np.float64)
    if mode is ConditioningMode.UNIFORM:
        return np.full(num_subjects, 1.0 / num_subjects, dtype=np.float64)
    if nuisance_logits is None:
        raise ValueError("nuisance_posterior conditioning needs nuisance logits")
    logits = np.asarray(nuisance_logits, dtype=np.float64).reshape(1, -1)
    if logits.shape[1] != num_subjects:
        raise DimensionError(
            f"expected {num_subjects} nuisance logits, got {logits.shape[1]}"
        )
    return softmax(logits)[0]


def condition_matrix(
    subjects: Sequence[int] | np.ndarray | None,
    mode: ConditioningMode | str,
    num_subjects: int,
    *,
    num_rows: int | None = None,
    nuisance_logits: Matrix | None = None,
) -> Matrix:
    """Batched `condition_vector`: one row per trial."""
    mode = parse_conditioning_mode(mode)
    if mode is ConditioningMode.NUISANCE_POSTERIOR:
        if nuisance_logits is None:
            raise ValueError("nuisance_posterior conditioning needs nuisance logits")
        logits = np.asarray(nuisance_logits, dtype=np.float64)
        if logits.ndim != 2 or logits.shape[1] != num_subjects:
            raise DimensionError(
                f"expected nuisance logits with {num_subjects} columns, got {logits.shape}"
            )
        return softmax(logits)
    if mode is ConditioningMode.ONEHOT_TRAIN:
        if subjects is None:
            raise ValueError("onehot_train conditioning needs subject ids")
        ids = np.asarray(subjects, dtype=np.int64)
        if ids.size and (ids.min() < 1 or ids.max() > num_subjects):
            raise ValueError(f"subject ids must lie in [1, {num_subjects}]")
        out = np.zeros((ids.shape[0], num_subjects), dtype=np.float64)
        out[np.arange(ids.shape[0]), ids - 1] = 1.0
        return out
    if num_rows is not None:
        rows = num_rows
    else:
        rows = 0 if subjects is None else len(subjects)
    fill = 0.0 if mode is ConditioningMode.ZEROS else 1.0 / num_subjects
    return np.full((rows, num_subjects), fill, dtype=np.float64)


def forward_all(model: DisentangledModel, x_batch: Matrix, s_cond: Matrix) -> ForwardOutputs:
    cfg = model.config
    z = encode(model, x_batch)
    s_cond = np.asarray(s_cond, dtype=np.float64)
    if s_cond.shape != (z.shape[0], cfg.num_subjects):
        raise DimensionError(
            f"condition matrix must be {z.shape[0]}x{cfg.num_subjects}, got {s_cond.shape}"
        )
    z_a, z_n = split_latent(z, cfg.r_n)
    adv_logits = model.adversary.forward(z_a)
    nuis_logits = model.nuisance.forward(z_n)
    y_logits = model.classifier.forward(np.concatenate([z_a, z_n, s_cond], axis=1))
    return ForwardOutputs(z=z, y_logits=y_logits, adv_logits=adv_logits, nuis_logits=nuis_logits)


def infer_logits(
    model: DisentangledModel,
    x_batch: Matrix,
    subjects: Sequence[int] | np.ndarray | None,
    mode: ConditioningMode | str,
) -> ForwardOutputs:
    """Forward pass with the classifier conditioned per `mode` (test-time path)."""
    mode = parse_conditioning_mode(mode)
    n_rows = np.asarray(x_batch).shape[0]
    nuis_logits = None
    if mode is ConditioningMode.NUISANCE_POSTERIOR:
        z = encode(model, x_batch)
        _, z_n = split_latent(z, model.config.r_n)
        nuis_logits = model.nuisance.forward(z_n)
    s_cond = condition_matrix(
        subjects,
        mode,
        model.config.num_subjects,
        num_rows=n_rows,
        nuisance_logits=nuis_logits,
    )
    return forward_all(model, x_batch, s_cond)


def relu_margin(model: DisentangledModel, x_batch: Matrix, s_cond: Matrix) -> float:
    """Smallest |pre-activation| over every ReLU in the model for this batch."""
    forward_all(model, x_batch, s_cond)
    inputs: list[Matrix] = list(model.encoder.relu_inputs())
    for head in (model.adversary, model.nuisance, model.classifier):
        inputs.extend(head.relu_inputs())
    values = [np.abs(item).min() for item in inputs if item.size]
    return float(min(values)) if values else float("inf")


def count_parameters(model: DisentangledModel) -> int:
    return int(sum(value.size for value in model.parameters().values()))


def expected_parameter_count(config: ModelConfig) -> int:
    def mlp(in_dim: int, hidden: int, out_dim: int) -> int:
        return (in_dim * hidden + hidden) + (hidden * out_dim + out_dim)

    return (
        mlp(config.input_dim, config.encoder_hidden, config.latent_dim)
        + mlp(config.adversary_dim, config.head_hidden, config.num_subjects)
        + mlp(config.nuisance_dim, config.head_hidden, config.num_subjects)
        + mlp(config.classifier_input_dim, config.head_hidden, config.num_classes)
    )


@dataclass(frozen=True)
class Architecture:
    """Layer widths shared by every fold; input and output sizes come from the data."""

    latent_dim: int = 100
    encoder_hidden: int = 100
    head_hidden: int = 100


def build_model_config(
    architecture: Architecture,
    *,
    input_dim: int,
    num_classes: int,
    num_subjects: int,
    r_n: float,
    conditioning_mode: ConditioningMode | str,
) -> ModelConfig:
    return ModelConfig(
        input_dim=input_dim,
        num_classes=num_classes,
        num_subjects=num_subjects,
        latent_dim=architecture.latent_dim,
        encoder_hidden=architecture.encoder_hidden,
        r_n=r_n,
        head_hidden=architecture.head_hidden,
        conditioning_mode=parse_conditioning_mode(conditioning_mode),
    )
