"""Run configuration documents (JSON), validated with pydantic."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .controller import ControllerConfig
from .errors import ConfigError
from .evaluator import TrainConfig
from .metrics import CostModelParams, RewardParams
from .supernet import DnasConfig


def read_json(path: str | Path):
    """Parse a UTF-8 JSON file, turning syntax errors into ConfigError with line/column."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SurrogateData(_Model):
    kind: Literal["surrogate"]
    seed: int = 0
    interaction: float = Field(0.0, ge=0)
    proxy_noise: float = Field(0.05, ge=0)


class SyntheticData(_Model):
    kind: Literal["synthetic"]
    samples: int = Field(100, ge=1)
    seed: int = 0
    noise: float = Field(0.1, gt=0)


class CifarData(_Model):
    kind: Literal["cifar10"]
    paths: list[str]
    test_path: Optional[str] = None
    val_fraction: float = Field(0.1, ge=0, lt=1)


DatasetSpec = Annotated[Union[SurrogateData, SyntheticData, CifarData], Field(discriminator="kind")]


class RewardModel(_Model):
    alpha: float = Field(0.5, ge=0, le=1)
    beta: float = 0.0
    gamma: float = Field(1e9, gt=0)

    def build(self, target: float) -> RewardParams:
        return RewardParams(self.alpha, self.beta, self.gamma, target)


class CostModel(_Model):
    eta: float = Field(2.0, gt=0)
    theta: float = Field(2.0, gt=0)
    batch: int = Field(32, gt=0)
    bytes_per_value: float = Field(4.0, gt=0)

    def build(self) -> CostModelParams:
        return CostModelParams(self.eta, self.theta, self.batch, self.bytes_per_value)


class ControllerModel(_Model):
    lr: float = Field(0.5, gt=0)
    baseline_decay: float = Field(0.9, ge=0, lt=1)
    entropy_coef: float = Field(0.01, ge=0)

    def build(self, seed: int) -> ControllerConfig:
        return ControllerConfig(self.lr, self.baseline_decay, self.entropy_coef, seed)


class DnasModel(_Model):
    weight_lr: float = Field(0.05, ge=0)
    arch_lr: float = Field(0.5, ge=0)
    epochs: int = Field(5, ge=0)
    alternation: int = Field(1, ge=1)
    batch: int = Field(32, ge=1)
    cost_aware: bool = True

    def build(self) -> DnasConfig:
        return DnasConfig(**self.model_dump())


class TrainModel(_Model):
    proxy_epochs: int = Field(2, ge=1)
    full_epochs: int = Field(20, ge=1)
    lr: float = Field(0.1, gt=0)
    batch: int = Field(32, ge=1)

    @model_validator(mode="after")
    def _epochs(self):
        if self.proxy_epochs > self.full_epochs:
            raise ValueError("proxy_epochs must not exceed full_epochs")
        return self

    def build(self) -> TrainConfig:
        return TrainConfig(**self.model_dump())


class RadarsConfig(_Model):
    space: Union[str, dict]
    dataset: DatasetSpec = Field(default_factory=lambda: SurrogateData(kind="surrogate"))
    N: int = Field(10, ge=1)
    P: int = Field(6, ge=1)
    Ep: int = Field(5, ge=0)
    target: float = math.inf
    memory_budget: Optional[float] = Field(None, ge=0)
    reward: RewardModel = Field(default_factory=RewardModel)
    cost: CostModel = Field(default_factory=CostModel)
    controller: ControllerModel = Field(default_factory=ControllerModel)
    dnas: DnasModel = Field(default_factory=DnasModel)
    train: TrainModel = Field(default_factory=TrainModel)
    seed: int = 0
    pipelined: bool = False
    skip_on_overflow: bool = False
    threads: Optional[int] = Field(None, ge=1)

    # filled by load_config so relative space paths resolve against the config file
    base_dir: Optional[str] = None

    @property
    def budget(self) -> float:
        return math.inf if self.memory_budget is None else float(self.memory_budget)

    def space_document(self) -> dict:
        if isinstance(self.space, dict):
            return self.space
        path = Path(self.space)
        if not path.is_absolute() and self.base_dir:
            path = Path(self.base_dir) / path
        return read_json(path)

    def resolved(self) -> dict:
        doc = self.model_dump(exclude={"base_dir"})
        doc["space"] = self.space_document()
        if doc["target"] == math.inf:
            doc["target"] = None
        return doc


def parse_config(doc: dict, base_dir: str | None = None) -> RadarsConfig:
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    doc = dict(doc)
    if doc.get("target") is None:
        doc.pop("target", None)
    try:
        cfg = RadarsConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"invalid run config: {exc}") from exc
    cfg.base_dir = base_dir
    return cfg


def load_config(path: str | Path) -> RadarsConfig:
    return parse_config(read_json(path), str(Path(path).resolve().parent))
