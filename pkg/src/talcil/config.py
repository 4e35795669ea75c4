"""Experiment specification: explicit-key YAML in, validated dataclasses out.

Every field has an embedded default; the fully resolved spec (defaults
applied) is what gets hashed and echoed into the run manifest, so a
change of defaults between versions is visible as a hash change.
Validation happens up front, before any computation or output.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import SpecError

__all__ = ["DatasetBlock", "ScheduleBlock", "LossBlock", "ExperimentSpec", "load_spec"]


@dataclass(frozen=True)
class DatasetBlock:
    classes: int = 10
    dim: int = 16
    tasks: int = 5
    per_class: int = 100
    test_per_class: int = 100
    sep: float = 2.5
    cov_scale: float = 1.0

    def validate(self):
        if self.classes < 2:
            raise SpecError("dataset.classes must be at least 2")
        if self.tasks < 1 or self.classes % self.tasks != 0:
            raise SpecError(
                f"dataset.classes={self.classes} must be divisible by dataset.tasks={self.tasks}"
            )
        if self.dim < 1 or self.per_class < 1 or self.test_per_class < 1:
            raise SpecError("dataset sizes must be positive")
        if self.sep <= 0 or self.cov_scale <= 0:
            raise SpecError("dataset.sep and dataset.cov_scale must be positive")


@dataclass(frozen=True)
class ScheduleBlock:
    replay_per_class: int = 20
    epochs: int = 20
    batch_size: int = 32
    lr: float = 0.1
    hidden: int = 0

    def validate(self):
        if self.replay_per_class < 0:
            raise SpecError("schedule.replay_per_class cannot be negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise SpecError("schedule.epochs and schedule.batch_size must be positive")
        if self.lr <= 0:
            raise SpecError("schedule.lr must be positive")
        if self.hidden < 0:
            raise SpecError("schedule.hidden cannot be negative")


@dataclass(frozen=True)
class LossBlock:
    kind: str = "TAL"
    lam: float = 0.995
    r: float = 1.0
    epsilon: float = 1e-12
    exploratory: bool = False

    def validate(self):
        if self.kind not in ("CE", "TAL"):
            raise SpecError(f"loss.kind must be CE or TAL, got {self.kind!r}")
        if not (0.0 < self.lam < 1.0):
            raise SpecError("loss.lambda must lie in (0, 1)")
        if not (0.0 < self.epsilon <= 1e-6):
            raise SpecError("loss.epsilon must lie in (0, 1e-6]")
        if self.r <= 0:
            raise SpecError("loss.r must be positive")
        if not self.exploratory:
            if self.r < 1.0:
                raise SpecError(
                    "loss.r < 1 is outside the calibrated domain; "
                    "set loss.exploratory: true to run it anyway"
                )
            if self.lam < 0.5:
                raise SpecError(
                    "loss.lambda < 0.5 is outside the calibrated domain; "
                    "set loss.exploratory: true to run it anyway"
                )


@dataclass(frozen=True)
class ExperimentSpec:
    dataset: DatasetBlock = field(default_factory=DatasetBlock)
    schedule: ScheduleBlock = field(default_factory=ScheduleBlock)
    loss: LossBlock = field(default_factory=LossBlock)
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str | None = None

    def validate(self):
        self.dataset.validate()
        self.schedule.validate()
        self.loss.validate()
        if not self.seeds:
            raise SpecError("seeds list cannot be empty")
        if any(not isinstance(s, int) or isinstance(s, bool) for s in self.seeds):
            raise SpecError("seeds must be integers")

    def resolved_dict(self) -> dict:
        """Fully materialized mapping (defaults applied) for hashing/echoing."""
        out = asdict(self)
        out["seeds"] = list(self.seeds)
        out["loss"]["lambda"] = out["loss"].pop("lam")
        return out


_KEY_RENAMES = {"lambda": "lam"}


def _build_block(cls, mapping, where: str):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise SpecError(f"{where} must be a mapping")
    known = set(cls.__dataclass_fields__)
    kwargs = {}
    for key, value in mapping.items():
        name = _KEY_RENAMES.get(key, key)
        if name not in known:
            raise SpecError(f"unknown key {key!r} in {where}")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise SpecError(f"bad value in {where}: {exc}") from exc


def spec_from_mapping(data: dict) -> ExperimentSpec:
    if not isinstance(data, dict):
        raise SpecError("spec root must be a mapping")
    unknown = set(data) - {"dataset", "schedule", "loss", "seeds", "output_dir"}
    if unknown:
        raise SpecError(f"unknown top-level keys: {sorted(unknown)}")
    seeds = data.get("seeds", ExperimentSpec.__dataclass_fields__["seeds"].default)
    if isinstance(seeds, list):
        seeds = tuple(seeds)
    spec = ExperimentSpec(
        dataset=_build_block(DatasetBlock, data.get("dataset"), "dataset"),
        schedule=_build_block(ScheduleBlock, data.get("schedule"), "schedule"),
        loss=_build_block(LossBlock, data.get("loss"), "loss"),
        seeds=seeds,
        output_dir=data.get("output_dir"),
    )
    try:
        spec.validate()
    except TypeError as exc:  # e.g. a string where a number belongs
        raise SpecError(f"spec value has the wrong type: {exc}") from exc
    return spec


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    if not path.is_file():
        raise SpecError(f"spec file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise SpecError(f"could not parse {path}: {exc}") from exc
    if data is None:
        data = {}
    return spec_from_mapping(data)
