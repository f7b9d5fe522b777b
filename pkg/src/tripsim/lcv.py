"""Local contribution vectors over a client's closed neighborhood.

After one exchange round a client holds, for itself and each sender,
a post-training model and a pre-training model.  Treating the senders
plus itself as players, the utility of a coalition S is the test
accuracy of the partial aggregate that takes post-training models
from S and pre-training models from everyone else, normalized by the
total weight either way.  The local contribution vector (LCV) is the
per-player attribution of that game.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .learner import Dataset, ModelParams, evaluate
from .shapley import monte_carlo_shapley, shapley_from_table

DEFAULT_EXACT_CAP = 16


@dataclass(frozen=True)
class Lcv:
    """One client's per-round attribution over its closed neighborhood.

    entries maps each neighborhood member (the owner included) to its
    attributed value; members outside the neighborhood have no entry.
    """

    owner: int
    round_index: int
    entries: dict[int, float] = field(default_factory=dict)

    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self.entries))

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        for j, v in self.entries.items():
            out[j] = v
        return out


def _weighted_average(parts: list[tuple[float, np.ndarray]]) -> np.ndarray:
    """Sum of w*v over parts divided by sum of w, in list order."""
    total = 0.0
    acc = np.zeros_like(parts[0][1])
    for w, v in parts:
        acc = acc + w * v
        total += w
    return acc / total


def aggregate(models: dict[int, ModelParams], weights: dict[int, float]) -> ModelParams:
    """Weighted average of models over ascending ids.

    weights must carry one positive entry per model.  This is the same
    accumulation partial_model uses, so the full-coalition partial
    model reproduces it bit for bit.
    """
    if set(models) != set(weights):
        raise ValueError("models and weights must cover the same ids")
    if not models:
        raise ValueError("cannot aggregate zero models")
    if any(w <= 0 for w in weights.values()):
        raise ValueError("aggregation weights must be positive")
    parts = [(weights[j], models[j].values) for j in sorted(models)]
    return ModelParams(_weighted_average(parts))


def partial_model(
    post_models: dict[int, ModelParams],
    pre_models: dict[int, ModelParams],
    weights: dict[int, float],
    subset: frozenset[int] | set[int],
) -> ModelParams:
    """Aggregate taking post-training models from subset, pre-training
    models from the rest, over the full neighborhood weight."""
    players = set(weights)
    if set(post_models) != players or set(pre_models) != players:
        raise ValueError("post and pre models must cover the neighborhood")
    if not players >= set(subset):
        raise ValueError("subset contains ids outside the neighborhood")
    parts = [
        (weights[j], (post_models[j] if j in subset else pre_models[j]).values)
        for j in sorted(players)
    ]
    return ModelParams(_weighted_average(parts))


def subset_utilities(
    post_models: dict[int, ModelParams],
    pre_models: dict[int, ModelParams],
    weights: dict[int, float],
    testset: Dataset,
) -> tuple[tuple[int, ...], np.ndarray]:
    """Utility table over every coalition of the neighborhood.

    Returns (players, utilities) where players lists the neighborhood
    ascending and utilities[mask] is the accuracy of the partial model
    for the coalition whose bit b set means players[b] is included.
    """
    players = tuple(sorted(weights))
    m = len(players)
    utilities = np.zeros(1 << m)
    for mask in range(1 << m):
        subset = {players[b] for b in range(m) if mask >> b & 1}
        utilities[mask] = evaluate(partial_model(post_models, pre_models, weights, subset), testset)
    return players, utilities


def lcv_from_table(
    owner: int,
    round_index: int,
    players: tuple[int, ...],
    utilities: np.ndarray,
    normalize: bool = False,
) -> Lcv:
    values = shapley_from_table(utilities, len(players), normalized=normalize)
    return Lcv(owner, round_index, {players[b]: float(values[b]) for b in range(len(players))})


def compute_lcv(
    owner: int,
    round_index: int,
    post_models: dict[int, ModelParams],
    pre_models: dict[int, ModelParams],
    weights: dict[int, float],
    testset: Dataset,
    mode: str = "exact",
    samples: int = 200,
    normalize: bool = False,
    exact_cap: int = DEFAULT_EXACT_CAP,
    seed=None,
) -> Lcv:
    """The owner's LCV for this round.

    mode 'exact' enumerates all coalitions (refused above exact_cap
    players); mode 'sampled' averages marginals over sampled player
    orderings seeded by seed.
    """
    if owner not in weights:
        raise ValueError("owner must belong to its own neighborhood")
    players = tuple(sorted(weights))
    m = len(players)
    if mode == "exact":
        if m > exact_cap:
            raise ValueError(
                f"neighborhood of {m} exceeds the exact enumeration cap "
                f"{exact_cap}; use sampled mode"
            )
        players, utilities = subset_utilities(post_models, pre_models, weights, testset)
        return lcv_from_table(owner, round_index, players, utilities, normalize=normalize)
    if mode == "sampled":
        def utility(mask: int) -> float:
            subset = {players[b] for b in range(m) if mask >> b & 1}
            return evaluate(partial_model(post_models, pre_models, weights, subset), testset)

        rng = np.random.default_rng(seed)
        values, _ = monte_carlo_shapley(utility, m, samples, rng, normalized=normalize)
        return Lcv(owner, round_index, {players[b]: float(values[b]) for b in range(m)})
    raise ValueError(f"unknown LCV mode {mode!r}")


def filter_pretrain_models(
    owner: int,
    pre_models: dict[int, ModelParams],
    testset: Dataset,
    v_threshold: float,
) -> tuple[dict[int, ModelParams], tuple[int, ...]]:
    """Replace implausibly weak claimed pre-training models.

    The owner scores its own pre-training model as the round reference
    v; any other member whose claimed model scores below v - v_threshold
    is replaced by the owner's own pre-training model.  Returns the
    filtered mapping and the ids replaced.
    """
    if v_threshold < 0:
        raise ValueError("v_threshold must be nonnegative")
    if owner not in pre_models:
        raise ValueError("owner missing from the pre-training models")
    own = pre_models[owner]
    reference = evaluate(own, testset)
    filtered: dict[int, ModelParams] = {}
    replaced: list[int] = []
    for j in sorted(pre_models):
        if j != owner and evaluate(pre_models[j], testset) < reference - v_threshold:
            filtered[j] = own
            replaced.append(j)
        else:
            filtered[j] = pre_models[j]
    return filtered, tuple(replaced)
