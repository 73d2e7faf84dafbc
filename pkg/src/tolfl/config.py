"""Experiment configuration: schema, parsing, canonical rendering, hashing.

Configs are JSON objects with the key set documented on ExperimentConfig.
Unknown keys are rejected and every validation error names the offending key.
render_config() emits a canonical form whose parse is the identity, and
config_hash() fingerprints that form for output file names.
"""

from __future__ import annotations

import hashlib
import json
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .data import SyntheticSpec


class ConfigError(ValueError):
    """Invalid experiment configuration; message lists key paths."""


class ArchConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden: List[int] = Field(default=[128, 96, 64], min_length=1)
    code: int = Field(default=32, ge=1)
    dropout: float = Field(default=0.2, ge=0.0, lt=1.0)


class SyntheticConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    feature_dim: int = Field(default=112, ge=1)
    num_classes: int = Field(default=4, ge=2)
    samples_per_class: int = Field(default=3000, ge=1)
    class_mean_separation: float = Field(default=6.0, gt=0.0)
    noise_scale: float = Field(default=1.0, ge=0.0)

    def to_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            feature_dim=self.feature_dim,
            num_classes=self.num_classes,
            samples_per_class=self.samples_per_class,
            class_mean_separation=self.class_mean_separation,
            noise_scale=self.noise_scale,
        )


class DatasetConfig(BaseModel):
    """Either a synthetic generator spec or a path to a matrix file."""

    model_config = ConfigDict(extra="forbid")

    synthetic: Optional[SyntheticConfig] = None
    file: Optional[str] = None

    @model_validator(mode="after")
    def _exactly_one_source(self) -> "DatasetConfig":
        if self.synthetic is not None and self.file is not None:
            raise ValueError("set either synthetic or file, not both")
        if self.synthetic is None and self.file is None:
            object.__setattr__(self, "synthetic", SyntheticConfig())
        return self


class FailureConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    device: int = Field(ge=0)
    epoch: int = Field(ge=1)


class ExperimentConfig(BaseModel):
    """One experiment: a protocol trained for some epochs over N devices.

    k counts clusters for tolfl and is implied elsewhere (batch and fl use 1,
    sbt uses N). Repetitions rerun the experiment with seeds seed, seed+1, ...
    while the failure schedule stays fixed.
    """

    model_config = ConfigDict(extra="forbid")

    protocol: Literal["batch", "fl", "sbt", "tolfl"]
    N: int = Field(ge=1)
    k: Optional[int] = Field(default=None, ge=1)
    epochs: int = Field(ge=1)
    alpha: float = Field(default=1e-3, gt=0.0)
    local_epochs: int = Field(default=1, ge=1)
    local_lr: float = Field(default=1e-3, gt=0.0)
    dropout_enabled: bool = True
    arch: ArchConfig = Field(default_factory=ArchConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    anomaly_classes: Optional[List[int]] = None
    holdout_frac: float = Field(default=0.2, ge=0.0, lt=1.0)
    partition_policy: Literal["uniform", "by-class"] = "uniform"
    failures: List[FailureConfig] = Field(default_factory=list)
    fl_server_down: Literal["halt", "local-training"] = "local-training"
    repetitions: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0)
    per_grad_cost: float = Field(default=1.0, gt=0.0)
    per_msg_cost: float = Field(default=1.0, gt=0.0)
    scenario: Optional[str] = None  # free-form label for report tables

    @model_validator(mode="after")
    def _cross_checks(self) -> "ExperimentConfig":
        if self.protocol == "batch":
            if self.N != 1:
                raise ValueError("batch is centralised: N must be 1")
            if self.k not in (None, 1):
                raise ValueError("batch is centralised: k must be 1 or omitted")
        elif self.protocol == "fl":
            if self.k not in (None, 1):
                raise ValueError("fl uses a single cluster: k must be 1 or omitted")
        elif self.protocol == "sbt":
            if self.k not in (None, self.N):
                raise ValueError("sbt is flat: k must equal N or be omitted")
        else:  # tolfl
            if self.k is None:
                raise ValueError("tolfl requires an explicit k")
            if not 1 <= self.k <= self.N:
                raise ValueError(f"k must lie in 1..N (k={self.k}, N={self.N})")
        seen = set()
        for f in self.failures:
            if f.device >= self.N:
                raise ValueError(f"failure names device {f.device}, but N={self.N}")
            if f.device in seen:
                raise ValueError(f"duplicate failure event for device {f.device}")
            seen.add(f.device)
        if self.anomaly_classes is not None and not self.anomaly_classes:
            raise ValueError("anomaly_classes must be non-empty when given")
        return self

    @property
    def resolved_k(self) -> int:
        if self.protocol in ("batch", "fl"):
            return 1
        if self.protocol == "sbt":
            return self.N
        return int(self.k)  # validated above


def _format_validation_error(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "config"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(text: str) -> ExperimentConfig:
    """Parse a JSON config, rejecting unknown keys; errors name the key."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_validation_error(exc)) from None


def render_config(cfg: ExperimentConfig) -> str:
    """Canonical JSON: sorted keys, two-space indent. parse(render(c)) == c."""
    return json.dumps(cfg.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


def config_hash(cfg: ExperimentConfig) -> str:
    """Short stable fingerprint of the canonical config, used in file names."""
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
