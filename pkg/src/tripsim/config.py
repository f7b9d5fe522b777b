"""Run configuration: schema, YAML loading, resolution.

One schema covers every experiment; sections an experiment does not
use are ignored by it.  The sim.lambda field (alias lam) must lie in
(0, 1]; consistency_threshold is "auto", "inf", or a number.
"""

from __future__ import annotations

import math
from typing import Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .adversary import AdversaryProfile, select_dishonest
from .engine import STREAM_ROSTER, SimConfig, stream
from .learner import DistributionSpec
from .topology import TopologySpec

LAMBDA_RANGE_MESSAGE = "λ ∈ (0,1]"


class TaskSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = 16
    classes: int = 4
    train_pool: int = 2000
    test_size: int = 512
    center_scale: float = 1.5
    cluster_std: float = 1.0
    csv_train: str | None = None
    csv_test: str | None = None


class DataSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["iid", "sizes", "non-iid", "noisy-images", "noisy-labels"] = "iid"
    fractions: list[float] | None = None
    alpha: float | None = None
    sigmas: list[float] | None = None
    flip_ratios: list[float] | None = None


class TopologySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["star", "line", "regular", "watts-strogatz", "file"] = "regular"
    k: int = 2
    beta: float = 0.0
    time_varying: bool = False
    schedule_file: str | None = None


class CountermeasureSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    c1: bool = False
    c2: bool = False


class SimSection(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    n: int = Field(default=8, ge=1, alias="clients")
    rounds: int = Field(default=10, ge=0)
    epochs: int = Field(default=1, ge=0)
    lr: float = Field(default=0.1, ge=0.0)
    batch_size: int = Field(default=32, ge=1)
    v_threshold: float = Field(default=0.15, ge=0.0)
    lam: float = Field(default=0.5, alias="lambda")
    consistency_threshold: float | Literal["auto"] = "auto"
    shrinkage: Literal["half", "full"] = "half"
    normalize_lcv: bool = False
    lcv_mode: Literal["exact", "sampled"] = "exact"
    lcv_samples: int = Field(default=200, ge=1)
    lcv_exact_cap: int = Field(default=16, ge=1)
    countermeasures: CountermeasureSection = Field(default_factory=CountermeasureSection)

    @field_validator("lam")
    @classmethod
    def _lambda_range(cls, value: float) -> float:
        if not 0.0 < value <= 1.0:
            raise ValueError(f"must satisfy {LAMBDA_RANGE_MESSAGE}")
        return value

    @field_validator("consistency_threshold", mode="before")
    @classmethod
    def _parse_threshold(cls, value):
        if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", ".inf"):
            return math.inf
        return value

    @field_validator("consistency_threshold")
    @classmethod
    def _threshold_range(cls, value):
        if isinstance(value, float) and value < 0:
            raise ValueError("must be nonnegative")
        return value


class AdversarySection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    ids: list[int] | None = None
    fake_pretrain: bool = False
    fake_report: bool = False
    pre_generator: Literal["stale-initial", "random-params"] = "stale-initial"
    pre_sigma: float = Field(default=5.0, gt=0.0)
    report_mode: Literal["absolute", "scale"] = "absolute"
    report_value: float = 1.0
    report_multiplier: float = 1.0
    report_offset: float = 0.0


class OracleSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cap: int = Field(default=12, ge=1)


class RemovalSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k: list[int] = Field(default_factory=lambda: [2, 4, 6])
    orders: list[Literal["low", "random", "high"]] = Field(
        default_factory=lambda: ["low", "random", "high"]
    )
    random_repeats: int = Field(default=3, ge=1)

    @field_validator("k")
    @classmethod
    def _positive_k(cls, value: list[int]) -> list[int]:
        if any(k < 1 for k in value):
            raise ValueError("every removal count must be at least 1")
        return value


class CorrelationSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    factor: Literal["size", "noise"] = "size"


class DishonestSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenarios: list[Literal["d1", "d2", "d1d2"]] = Field(
        default_factory=lambda: ["d1", "d2", "d1d2"]
    )


class ExperimentConfig(BaseModel):
    """Everything a run needs, in one document."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    name: str = "run"
    seed: int = 0
    workers: int = Field(default=1, ge=1)
    task: TaskSection = Field(default_factory=TaskSection)
    data: DataSection = Field(default_factory=DataSection)
    topology: TopologySection = Field(default_factory=TopologySection)
    sim: SimSection = Field(default_factory=SimSection)
    adversary: AdversarySection = Field(default_factory=AdversarySection)
    oracle: OracleSection = Field(default_factory=OracleSection)
    removal: RemovalSection = Field(default_factory=RemovalSection)
    correlation: CorrelationSection = Field(default_factory=CorrelationSection)
    dishonest: DishonestSection = Field(default_factory=DishonestSection)

    @model_validator(mode="after")
    def _cross_checks(self) -> "ExperimentConfig":
        n = self.sim.n
        for field_name in ("fractions", "sigmas", "flip_ratios"):
            value = getattr(self.data, field_name)
            if value is not None and len(value) != n:
                raise ValueError(f"data.{field_name} must list one entry per client ({n})")
        if self.data.kind == "sizes" and self.data.fractions is None:
            raise ValueError("data.kind sizes requires data.fractions")
        if self.data.kind == "non-iid" and self.data.alpha is None:
            raise ValueError("data.kind non-iid requires data.alpha")
        if self.data.kind == "noisy-images" and self.data.sigmas is None:
            raise ValueError("data.kind noisy-images requires data.sigmas")
        if self.data.kind == "noisy-labels" and self.data.flip_ratios is None:
            raise ValueError("data.kind noisy-labels requires data.flip_ratios")
        if self.topology.kind == "file" and not self.topology.schedule_file:
            raise ValueError("topology.kind file requires topology.schedule_file")
        if self.adversary.ids is not None:
            if self.adversary.fraction > 0.0:
                raise ValueError("give adversary.ids or adversary.fraction, not both")
            bad = [j for j in self.adversary.ids if not 0 <= j < n]
            if bad:
                raise ValueError(f"adversary.ids out of range: {bad}")
        if (self.task.csv_train is None) != (self.task.csv_test is None):
            raise ValueError("task.csv_train and task.csv_test must be given together")
        return self

    def roster(self) -> tuple[int, ...]:
        """The dishonest client ids this config pins or draws."""
        if self.adversary.ids is not None:
            return tuple(sorted(set(self.adversary.ids)))
        return select_dishonest(
            self.sim.n, self.adversary.fraction, stream(self.seed, STREAM_ROSTER)
        )

    def profile(self) -> AdversaryProfile | None:
        adv = self.adversary
        if not (adv.fake_pretrain or adv.fake_report):
            return None
        return AdversaryProfile(
            fake_pretrain=adv.fake_pretrain,
            fake_report=adv.fake_report,
            pre_generator=adv.pre_generator,
            pre_sigma=adv.pre_sigma,
            report_mode=adv.report_mode,
            report_value=adv.report_value,
            report_multiplier=adv.report_multiplier,
            report_offset=adv.report_offset,
        )

    def to_sim_config(self) -> SimConfig:
        """Resolve into the engine's settings, roster included."""
        profile = self.profile()
        dishonest = self.roster() if profile is not None else ()
        threshold = self.sim.consistency_threshold
        return SimConfig(
            n=self.sim.n,
            rounds=self.sim.rounds,
            epochs=self.sim.epochs,
            lr=self.sim.lr,
            batch_size=self.sim.batch_size,
            seed=self.seed,
            topology=TopologySpec(
                kind=self.topology.kind,
                k=self.topology.k,
                beta=self.topology.beta,
                time_varying=self.topology.time_varying,
                path=self.topology.schedule_file,
            ),
            distribution=DistributionSpec(
                kind=self.data.kind,
                fractions=tuple(self.data.fractions) if self.data.fractions else None,
                alpha=self.data.alpha,
                sigmas=tuple(self.data.sigmas) if self.data.sigmas else None,
                flip_ratios=tuple(self.data.flip_ratios) if self.data.flip_ratios else None,
            ),
            d=self.task.d,
            n_classes=self.task.classes,
            train_pool=self.task.train_pool,
            test_size=self.task.test_size,
            center_scale=self.task.center_scale,
            cluster_std=self.task.cluster_std,
            csv_train=self.task.csv_train,
            csv_test=self.task.csv_test,
            v_threshold=self.sim.v_threshold,
            lam=self.sim.lam,
            consistency_threshold=None if threshold == "auto" else float(threshold),
            shrinkage=self.sim.shrinkage,
            normalize_lcv=self.sim.normalize_lcv,
            enable_c1=self.sim.countermeasures.c1,
            enable_c2=self.sim.countermeasures.c2,
            lcv_mode=self.sim.lcv_mode,
            lcv_samples=self.sim.lcv_samples,
            lcv_exact_cap=self.sim.lcv_exact_cap,
            dishonest=dishonest,
            profile=profile,
        )


def load_config(path) -> ExperimentConfig:
    """Parse and validate a YAML config file."""
    with open(path) as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as err:
            raise ValueError(f"{path}: invalid YAML: {err}") from err
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a mapping")
    return ExperimentConfig.model_validate(raw)
