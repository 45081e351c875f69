"""Run and batch configuration files.

Configs are YAML (or JSON) documents whose keys mirror the field names
below. ``--set key=value`` overrides use dotted paths, e.g.
``ga.population=40``.
"""

from __future__ import annotations

import hashlib
import json
from enum import Enum
from pathlib import Path
from typing import Any, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .optimizers import GaConfig
from .problems import ProblemSpec


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class Algorithm(str, Enum):
    MONO_EI = "MonoEI"
    MULTI_EI_GUMBEL = "MultiEiGumbel"
    MULTI_EI_EXACT_MC = "MultiEiExactMC"
    MULTI_EHVI = "MultiEHVI"
    RANDOM_SEARCH = "RandomSearch"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ProblemConfig(_Strict):
    name: str
    num_objectives: int = Field(2, ge=2)
    num_variables: int = Field(5, ge=2)

    @model_validator(mode="after")
    def _check(self):
        try:
            ProblemSpec(self.name, self.num_objectives, self.num_variables)
        except ValueError as exc:
            raise ValueError(str(exc)) from exc
        self.name = self.name.upper()
        return self

    def spec(self) -> ProblemSpec:
        return ProblemSpec(self.name, self.num_objectives, self.num_variables)


class GaSettings(_Strict):
    population: int = Field(100, ge=4)
    generations: int = Field(100, ge=1)
    crossover_prob: float = Field(0.9, ge=0.0, le=1.0)
    mutation_prob: Optional[float] = Field(None, ge=0.0, le=1.0)
    sbx_eta: float = Field(15.0, gt=0.0)
    pm_eta: float = Field(20.0, gt=0.0)

    @model_validator(mode="after")
    def _even(self):
        if self.population % 2:
            raise ValueError("population must be even")
        return self

    def to_ga_config(self, seed: int) -> GaConfig:
        return GaConfig(seed=seed, **self.model_dump())


class McCounts(_Strict):
    search: int = Field(1000, ge=1)
    report: int = Field(100_000, ge=1)


class _Settings(_Strict):
    init_size: Optional[int] = Field(None, ge=2)
    budget: Optional[int] = Field(None, ge=3)
    ga: GaSettings = GaSettings()
    mc_counts: McCounts = McCounts()
    rho: float = Field(0.05, ge=0.0)
    gumbel_sample_count: int = Field(1000, ge=10)
    gp_restarts: int = Field(10, ge=1)


class RunConfig(_Settings):
    problem: ProblemConfig
    algorithm: Algorithm
    seed: int = 0

    @model_validator(mode="after")
    def _budget(self):
        n = self.problem.num_variables
        if self.init_size is None:
            self.init_size = 10 * n
        if self.budget is None:
            self.budget = 30 * n
        if self.budget <= self.init_size:
            raise ValueError(f"budget ({self.budget}) must exceed init_size ({self.init_size})")
        return self

    def config_hash(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def run_name(self) -> str:
        return f"{self.problem.spec().label}__{self.algorithm.value}__seed{self.seed}"


class BatchConfig(_Settings):
    problems: list[ProblemConfig] = Field(min_length=1)
    algorithms: list[Algorithm] = Field(min_length=1)
    seeds: list[int] = Field(min_length=1)

    def expand(self) -> list[RunConfig]:
        shared = self.model_dump(exclude={"problems", "algorithms", "seeds"})
        runs = []
        for problem in self.problems:
            for algorithm in self.algorithms:
                for seed in self.seeds:
                    runs.append(RunConfig(problem=problem.model_dump(), algorithm=algorithm,
                                          seed=seed, **shared))
        return runs


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    """Apply ``key=value`` strings; dotted keys descend into nested tables."""
    data = json.loads(json.dumps(data))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        value = yaml.safe_load(raw)
        node = data
        parts = key.strip().split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r}: {part!r} is not a table")
        node[parts[-1]] = value
    return data


def _format_validation(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{where}: {err['msg']}")
    return "; ".join(lines)


def _read(path) -> dict:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def parse_run_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from exc


def parse_batch_config(data: dict) -> BatchConfig:
    try:
        return BatchConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_validation(exc)) from exc


def load_run_config(path, overrides: Optional[list[str]] = None) -> RunConfig:
    return parse_run_config(apply_overrides(_read(path), overrides or []))


def load_batch_config(path, overrides: Optional[list[str]] = None) -> BatchConfig:
    return parse_batch_config(apply_overrides(_read(path), overrides or []))


def dump_config(cfg: BaseModel) -> dict[str, Any]:
    return cfg.model_dump(mode="json")
