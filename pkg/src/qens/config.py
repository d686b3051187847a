"""Experiment configuration: YAML file validated by pydantic.

Schema errors are reported with the line of the offending key.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .cosine import CosineConfig
from .data import BLOB_CENTERS, BLOB_STDS
from .ensemble import GridPoint
from .errors import ConfigError
from .forest import ForestConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BlobSpec(_Strict):
    cluster_std: list[float] = list(BLOB_STDS)
    centers: Optional[list[tuple[float, float]]] = None  # (p1, p2); default: full grid
    n_samples: int = Field(100, ge=20)

    def center_pairs(self) -> list:
        if self.centers is not None:
            return [tuple(c) for c in self.centers]
        return list(itertools.product(BLOB_CENTERS, BLOB_CENTERS))


class CsvSpec(_Strict):
    path: str
    pca_components: Optional[int] = Field(None, ge=1)
    features: Optional[list[str]] = None


class DatasetSpec(_Strict):
    kind: Literal["blobs", "csv"] = "blobs"
    blobs: BlobSpec = BlobSpec()
    csv: Optional[CsvSpec] = None
    scale_scope: Literal["train", "global"] = "train"

    @model_validator(mode="after")
    def _csv_present(self):
        if self.kind == "csv" and self.csv is None:
            raise ValueError("dataset.kind is 'csv' but no csv section is given")
        return self


class CosineModel(_Strict):
    kind: Literal["qcc", "qec", "qecru"]
    d: list[int] = [1]
    n_train: list[int] = [2]
    n_swap: list[int] = [1]
    n_feature: list[int] = [2]
    engine: Literal["statevector", "closed_form"] = "statevector"

    def configs(self, seed: int = 0) -> list:
        if self.kind == "qcc":
            return [CosineConfig(0, 1, 1, nf, seed) for nf in self.n_feature]
        return [CosineConfig(d, nt, ns, nf, seed)
                for d, nt, ns, nf in itertools.product(self.d, self.n_train, self.n_swap, self.n_feature)]

    @model_validator(mode="after")
    def _valid(self):
        self.configs()  # raises ValueError on bad combinations
        return self


class VariationalModel(_Strict):
    kind: Literal["soft_vote", "bagging", "adaboost"]
    learning_rate: list[float] = [1e-3, 1e-2, 1e-1]
    batch_size: list[int] = [1, 2, 4, 8, 16]
    num_learners: list[int] = [1, 2, 3, 4, 5, 6, 7]
    epochs: int = Field(100, ge=1)
    folds: int = Field(4, ge=2)
    invert: bool = False
    weighting: Literal["uniform", "accuracy"] = "uniform"

    @field_validator("learning_rate")
    @classmethod
    def _positive(cls, v):
        if any(x <= 0 for x in v):
            raise ValueError("learning rates must be positive")
        return v

    @field_validator("batch_size", "num_learners")
    @classmethod
    def _at_least_one(cls, v):
        if any(x < 1 for x in v):
            raise ValueError("values must be >= 1")
        return v

    def points(self) -> list:
        return [GridPoint(lr, b, n) for lr, b, n in itertools.product(self.learning_rate, self.batch_size, self.num_learners)]


class ForestModel(_Strict):
    kind: Literal["forest"]
    n_iter: int = Field(50, ge=1)
    folds: int = Field(5, ge=2)
    configs: Optional[list[dict]] = None  # explicit ForestConfig fields

    @model_validator(mode="after")
    def _valid(self):
        for c in self.configs or []:
            ForestConfig(**c)
        return self

    def explicit(self) -> list:
        return [ForestConfig(**c) for c in (self.configs or [{}])]


ModelSpec = Annotated[Union[CosineModel, VariationalModel, ForestModel], Field(discriminator="kind")]


class ExperimentConfig(_Strict):
    name: str = "experiment"
    seed: int = Field(0, ge=0)
    splits: int = Field(10, ge=1)
    test_fraction: float = Field(0.2, gt=0, lt=1)
    mode: Literal["exact", "shots"] = "exact"
    shots: int = Field(8192, ge=1)
    workers: int = Field(1, ge=1)
    ttest: Literal["welch", "paired"] = "welch"
    output: str = "runs/experiment"
    dataset: DatasetSpec = DatasetSpec()
    models: list[ModelSpec] = Field(min_length=1)

    def config_hash(self) -> str:
        payload = self.model_dump(exclude={"workers", "output"})
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


def _node_line(root, loc) -> Optional[int]:
    node, line = root, None
    if node is not None:
        line = node.start_mark.line + 1
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            match = [(k, v) for k, v in node.value if k.value == str(key)]
            if not match:
                continue  # union tags and similar have no node of their own
            k, node = match[0]
            line = k.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            break
    return line


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    try:
        root = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"{source}: malformed YAML: {getattr(exc, 'problem', exc)}",
                          line=None if mark is None else mark.line + 1) from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping", line=1)
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        where = ".".join(str(p) for p in err["loc"])
        raise ConfigError(f"{source}: {where}: {err['msg']}", line=_node_line(root, err["loc"])) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
