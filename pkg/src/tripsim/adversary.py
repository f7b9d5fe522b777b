"""Dishonest client behaviors.

Two attacks on the contribution accounting, separately toggleable:

* pre-model falsification: a dishonest client sends neighbors a fake
  pre-training model so its own training step looks like a bigger
  improvement in their attributions.  Its post-training model and its
  own report stay genuine, so the learning dynamics are untouched.
* report falsification: a dishonest client inflates its own entry in
  the LCV it sends the coordinator, either overwriting it with a
  constant or scaling it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lcv import Lcv
from .learner import ModelParams

DEFAULT_FAKE_SIGMA = 5.0
DEFAULT_REPORT_VALUE = 1.0


@dataclass(frozen=True)
class AdversaryProfile:
    """Which attacks a dishonest client runs, and their parameters.

    fake_pretrain toggles pre-model falsification with pre_generator
    'stale-initial' (resend the shared round-0 model) or
    'random-params' (normal(0, pre_sigma) junk).  fake_report toggles
    report falsification with report_mode 'absolute' (own entry :=
    report_value) or 'scale' (own entry := entry*report_multiplier +
    report_offset).
    """

    fake_pretrain: bool = False
    fake_report: bool = False
    pre_generator: str = "stale-initial"
    pre_sigma: float = DEFAULT_FAKE_SIGMA
    report_mode: str = "absolute"
    report_value: float = DEFAULT_REPORT_VALUE
    report_multiplier: float = 1.0
    report_offset: float = 0.0

    def __post_init__(self) -> None:
        if not (self.fake_pretrain or self.fake_report):
            raise ValueError("adversary profile must enable at least one attack")
        if self.pre_generator not in ("stale-initial", "random-params"):
            raise ValueError(f"unknown pre-model generator {self.pre_generator!r}")
        if self.pre_sigma <= 0:
            raise ValueError("pre_sigma must be positive")
        if self.report_mode not in ("absolute", "scale"):
            raise ValueError(f"unknown report mode {self.report_mode!r}")
        if self.fake_report:
            if self.report_mode == "absolute" and self.report_value <= 0:
                raise ValueError("report_value must be positive")
            if self.report_mode == "scale" and self.report_multiplier <= 0:
                raise ValueError("report_multiplier must be positive")
            if self.report_mode == "scale" and self.report_offset < 0:
                raise ValueError("report_offset must be nonnegative")


def falsify_pretrain(
    profile: AdversaryProfile,
    true_pre: ModelParams,
    initial: ModelParams,
    seed,
) -> ModelParams:
    """The fake pre-training model this client shows its neighbors."""
    if not profile.fake_pretrain:
        return true_pre
    if profile.pre_generator == "stale-initial":
        return initial
    rng = np.random.default_rng(seed)
    return ModelParams(rng.normal(0.0, profile.pre_sigma, len(true_pre)))


def falsify_report(profile: AdversaryProfile, lcv: Lcv) -> Lcv:
    """The report this client actually files: own entry inflated."""
    if not profile.fake_report:
        return lcv
    if lcv.owner not in lcv.entries:
        raise ValueError("report lacks the owner's own entry")
    entries = dict(lcv.entries)
    if profile.report_mode == "absolute":
        entries[lcv.owner] = profile.report_value
    else:
        entries[lcv.owner] = (
            entries[lcv.owner] * profile.report_multiplier + profile.report_offset
        )
    return Lcv(lcv.owner, lcv.round_index, entries)


def select_dishonest(n: int, fraction: float, seed) -> tuple[int, ...]:
    """Deterministically pick round(n*fraction) dishonest client ids."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("dishonest fraction must be in [0, 1]")
    count = int(round(n * fraction))
    if count == 0:
        return ()
    rng = np.random.default_rng(seed)
    return tuple(sorted(int(j) for j in rng.choice(n, size=count, replace=False)))
