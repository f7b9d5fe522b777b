"""Centralized federated baselines for contribution accounting.

A coordinator-held global model is trained by uniform federated
averaging over the same shards the decentralized run would use.  Two
classical attribution schemes are provided: per-round marginal-gain
Shapley summed over rounds (MR), and one Shapley over full retraining
replays restricted to each coalition (OR), reusing the recorded
per-round client updates so the full-coalition replay reproduces the
training run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import STREAM_INIT, STREAM_TRAIN, SimConfig, materialize_data, stream
from .learner import Dataset, ModelParams, evaluate, init_params, train
from .shapley import shapley_from_table

DEFAULT_REPLAY_CAP = 12


def _average_step(
    theta: ModelParams, posts: dict[int, ModelParams], members: tuple[int, ...]
) -> ModelParams:
    """theta plus the uniform mean of members' updates against theta."""
    if not members:
        return theta
    acc = np.zeros_like(theta.values)
    for j in members:
        acc = acc + (posts[j].values - theta.values)
    return ModelParams(theta.values + acc / len(members))


@dataclass
class CflResult:
    """A centralized run: global model trace and per-round client posts."""

    config: SimConfig
    global_models: list[ModelParams]
    client_posts: list[dict[int, ModelParams]]
    accuracy: np.ndarray
    testset: Dataset


def run_cfl(cfg: SimConfig) -> CflResult:
    """Uniform federated averaging over cfg's shards for cfg.rounds."""
    if cfg.dishonest:
        raise ValueError("the centralized baseline is only defined for honest runs")
    shards, testset, d, n_classes = materialize_data(cfg)
    theta = init_params(d, n_classes, stream(cfg.seed, STREAM_INIT))
    global_models = [theta]
    client_posts: list[dict[int, ModelParams]] = []
    accuracy = [evaluate(theta, testset)]
    for t in range(cfg.rounds):
        posts = {
            i: train(theta, shards[i], cfg.epochs, cfg.lr,
                     stream(cfg.seed, STREAM_TRAIN, t, i), cfg.batch_size)
            for i in range(cfg.n)
        }
        theta = _average_step(theta, posts, tuple(range(cfg.n)))
        client_posts.append(posts)
        global_models.append(theta)
        accuracy.append(evaluate(theta, testset))
    return CflResult(cfg, global_models, client_posts, np.asarray(accuracy), testset)


def _members(mask: int, n: int) -> tuple[int, ...]:
    return tuple(j for j in range(n) if mask >> j & 1)


def mr_contributions(result: CflResult, normalized: bool = False) -> np.ndarray:
    """Multi-round attribution: per-round Shapley values, summed.

    Round t's game values a coalition S by the accuracy of the global
    model advanced one averaging step using only S's updates; the
    empty coalition keeps the round's starting model.
    """
    cfg = result.config
    total = np.zeros(cfg.n)
    for t in range(cfg.rounds):
        theta = result.global_models[t]
        posts = result.client_posts[t]
        utilities = np.array([
            evaluate(_average_step(theta, posts, _members(mask, cfg.n)), result.testset)
            for mask in range(1 << cfg.n)
        ])
        total += shapley_from_table(utilities, cfg.n, normalized=normalized)
    return total


def or_contributions(
    result: CflResult,
    normalized: bool = False,
    cap: int = DEFAULT_REPLAY_CAP,
    return_table: bool = False,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """One-shot attribution over full-run replays.

    A coalition's utility is the final accuracy after replaying every
    round's averaging step restricted to the coalition's recorded
    updates (weights renormalized over those present).  The
    full-coalition replay is bit-identical to the training run.  With
    ``return_table`` the 2^n replay utilities come back alongside the
    attribution, indexed by membership bitmask.
    """
    cfg = result.config
    if cfg.n > cap:
        raise ValueError(
            f"{cfg.n} clients means {1 << cfg.n} replays, above the cap {cap}"
        )
    utilities = np.zeros(1 << cfg.n)
    for mask in range(1 << cfg.n):
        members = _members(mask, cfg.n)
        theta = result.global_models[0]
        for t in range(cfg.rounds):
            theta = _average_step(theta, result.client_posts[t], members)
        utilities[mask] = evaluate(theta, result.testset)
    phi = shapley_from_table(utilities, cfg.n, normalized=normalized)
    if return_table:
        return phi, utilities
    return phi
