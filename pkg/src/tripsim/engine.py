"""Decentralized training rounds with contribution accounting.

Each round, every client trains locally, swaps models with its
neighbors, aggregates the post-training models over its closed
neighborhood, attributes the round's improvement across that
neighborhood (its LCV), and files the LCV with the coordinator, which
folds it into the running contribution vectors.

Determinism: every random draw comes from a stream keyed by the
master seed plus a fixed purpose tag (and round/client where it
applies), so any subset of the work can be replayed bit for bit and
skipping one client's work never shifts anyone else's draws.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import coordinator as coord
from .adversary import AdversaryProfile, falsify_pretrain, falsify_report
from .learner import (
    Dataset,
    DistributionSpec,
    ModelParams,
    blob_centers,
    evaluate,
    generate_partitions,
    init_params,
    load_csv,
    make_blobs,
    train,
)
from .lcv import (
    Lcv,
    aggregate,
    filter_pretrain_models,
    lcv_from_table,
    partial_model,
    subset_utilities,
)
from .shapley import monte_carlo_shapley
from .topology import RoundSchedule, TopologySpec, build_schedule, load_schedule_file

# RNG stream purpose tags; never renumber or reruns stop replaying.
STREAM_DATA = 1
STREAM_INIT = 2
STREAM_TOPO = 3
STREAM_TRAIN = 4
STREAM_ADV = 5
STREAM_ROSTER = 6
STREAM_MC = 7


class NumericError(RuntimeError):
    """Training or aggregation produced non-finite numbers."""


def stream(master: int, *path: int) -> np.random.SeedSequence:
    """The dedicated seed stream for one purpose."""
    return np.random.SeedSequence([master, *path])


def derive_int(master: int, *path: int) -> int:
    """A stable integer seed drawn from the purpose stream."""
    return int(stream(master, *path).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class SimConfig:
    """Fully resolved simulation settings.

    The topology and distribution seeds are overridden internally from
    the master seed, so one seed fixes the entire run.
    consistency_threshold None means per-round automatic (twice the
    median absolute report entry); inf disables replacement.
    """

    n: int
    rounds: int
    epochs: int = 1
    lr: float = 0.1
    batch_size: int = 32
    seed: int = 0
    topology: TopologySpec = field(default_factory=lambda: TopologySpec("regular", k=2))
    distribution: DistributionSpec = field(default_factory=DistributionSpec)
    d: int = 16
    n_classes: int = 4
    train_pool: int = 2000
    test_size: int = 512
    center_scale: float = 1.5
    cluster_std: float = 1.0
    csv_train: str | None = None
    csv_test: str | None = None
    v_threshold: float = 0.15
    lam: float = coord.DEFAULT_LAMBDA
    consistency_threshold: float | None = None
    shrinkage: str = "half"
    normalize_lcv: bool = False
    enable_c1: bool = False
    enable_c2: bool = False
    lcv_mode: str = "exact"
    lcv_samples: int = 200
    lcv_exact_cap: int = 16
    dishonest: tuple[int, ...] = ()
    profile: AdversaryProfile | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("need at least one client")
        if self.rounds < 0:
            raise ValueError("round count must be nonnegative")
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.epochs < 0:
            raise ValueError("epoch count must be nonnegative")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must satisfy {coord.LAMBDA_RANGE_MESSAGE}")
        if self.v_threshold < 0:
            raise ValueError("v_threshold must be nonnegative")
        if self.lcv_mode not in ("exact", "sampled"):
            raise ValueError(f"unknown LCV mode {self.lcv_mode!r}")
        if (self.csv_train is None) != (self.csv_test is None):
            raise ValueError("csv_train and csv_test must be given together")
        if self.consistency_threshold is not None and self.consistency_threshold < 0:
            raise ValueError("consistency_threshold must be nonnegative")
        bad = [j for j in self.dishonest if not 0 <= j < self.n]
        if bad:
            raise ValueError(f"dishonest ids out of range: {bad}")
        if tuple(sorted(set(self.dishonest))) != self.dishonest:
            raise ValueError("dishonest ids must be sorted and unique")
        if self.dishonest and self.profile is None:
            raise ValueError("dishonest clients need an adversary profile")


@dataclass
class ClientState:
    """One client's mutable per-round view."""

    id: int
    theta: ModelParams
    data: Dataset
    profile: AdversaryProfile | None = None


@dataclass(frozen=True)
class ExchangePacket:
    """What one client hands a neighbor: its post-training model and
    the pre-training model it claims it started the round from."""

    sender: int
    post: ModelParams
    claimed_pre: ModelParams


@dataclass
class RoundLog:
    """Everything observable about one round."""

    round_index: int
    accuracy: np.ndarray
    lcvs_true: list[Lcv] | None
    lcvs_reported: list[Lcv] | None
    lcvs_used: list[Lcv] | None
    c1_replaced: dict[int, tuple[int, ...]]
    lcv_audit: dict[int, tuple[float, float, float, int]]
    outlier_replaced: tuple[int, ...] = ()
    outlier_flag_rows: int = 0
    outlier_objective: float | None = None
    no_report: tuple[int, ...] = ()
    skipped_training: tuple[int, ...] = ()


@dataclass
class SimResult:
    """A full run: contribution state, learning curve, round logs."""

    config: SimConfig
    contributions: np.ndarray
    contributions_history: list[np.ndarray]
    accuracy: np.ndarray
    round_logs: list[RoundLog]
    final_models: list[ModelParams]
    dishonest: tuple[int, ...]
    schedules: list[RoundSchedule]
    testset: Dataset

    def client_totals(self) -> np.ndarray:
        """Consensus contribution per client: column mean of the state."""
        return self.contributions.mean(axis=0)


def materialize_data(cfg: SimConfig) -> tuple[list[Dataset], Dataset, int, int]:
    """Per-client shards, test set, feature dim, class count."""
    if cfg.csv_train is not None:
        pool = load_csv(cfg.csv_train, name="train-pool")
        testset = load_csv(cfg.csv_test, name="test")
        d = pool.features.shape[1]
        if testset.features.shape[1] != d:
            raise ValueError("train and test files disagree on feature count")
        n_classes = int(max(pool.labels.max(), testset.labels.max())) + 1
    else:
        d, n_classes = cfg.d, cfg.n_classes
        centers = blob_centers(d, n_classes, stream(cfg.seed, STREAM_DATA, 0), cfg.center_scale)
        pool = make_blobs(
            cfg.train_pool, d, n_classes, stream(cfg.seed, STREAM_DATA, 1),
            cluster_std=cfg.cluster_std, centers=centers, name="train-pool",
        )
        testset = make_blobs(
            cfg.test_size, d, n_classes, stream(cfg.seed, STREAM_DATA, 2),
            cluster_std=cfg.cluster_std, centers=centers, name="test",
        )
    dist = dataclasses.replace(cfg.distribution, seed=derive_int(cfg.seed, STREAM_DATA, 3))
    shards = generate_partitions(dist, pool, cfg.n)
    return shards, testset, d, n_classes


def _schedule_for(cfg: SimConfig, schedules_from_file: list[RoundSchedule] | None, t: int) -> RoundSchedule:
    if cfg.topology.kind == "file":
        assert schedules_from_file is not None
        if len(schedules_from_file) == 1:
            return schedules_from_file[0]
        if t >= len(schedules_from_file):
            raise ValueError(
                f"schedule file covers {len(schedules_from_file)} rounds, round {t} requested"
            )
        return schedules_from_file[t]
    spec = dataclasses.replace(cfg.topology, seed=derive_int(cfg.seed, STREAM_TOPO))
    return build_schedule(spec, cfg.n, t)


def run_round(
    states: list[ClientState],
    schedule: RoundSchedule,
    t: int,
    cfg: SimConfig,
    testset: Dataset,
    initial: ModelParams,
    active: frozenset[int],
    compute_lcvs: bool = True,
) -> RoundLog:
    """Advance every client one round in place and log what happened.

    Clients outside active skip their training step (their
    post-training model is their current model) but exchange and
    aggregate as usual.
    """
    n = len(states)
    pres = {i: states[i].theta for i in range(n)}
    posts: dict[int, ModelParams] = {}
    for i in range(n):
        if i in active:
            try:
                posts[i] = train(
                    states[i].theta, states[i].data, cfg.epochs, cfg.lr,
                    stream(cfg.seed, STREAM_TRAIN, t, i), cfg.batch_size,
                )
            except ValueError as err:
                raise NumericError(f"round {t} client {i}: {err}") from err
        else:
            posts[i] = states[i].theta

    # One packet per sender per round, shown identically to every
    # receiver.  A pre-model faker lies in the packet but keeps using
    # its true pre-model in its own accounting.  At t=0 every
    # pre-model IS the public common initialization, so the claim
    # carries no information to falsify.
    packets: dict[int, ExchangePacket] = {}
    for j in range(n):
        profile = states[j].profile
        claimed_pre = pres[j]
        if t > 0 and profile is not None and profile.fake_pretrain:
            claimed_pre = falsify_pretrain(
                profile, pres[j], initial, stream(cfg.seed, STREAM_ADV, t, j)
            )
        packets[j] = ExchangePacket(j, posts[j], claimed_pre)

    new_thetas: dict[int, ModelParams] = {}
    for i in range(n):
        members = schedule.closure(i)
        new_thetas[i] = aggregate(
            {j: packets[j].post for j in members}, dict(schedule.weights[i])
        )

    lcvs_true: list[Lcv] | None = None
    lcvs_reported: list[Lcv] | None = None
    c1_replaced: dict[int, tuple[int, ...]] = {}
    audit: dict[int, tuple[float, float, float, int]] = {}
    if compute_lcvs:
        lcvs_true = []
        lcvs_reported = []
        for i in range(n):
            members = schedule.closure(i)
            weights = dict(schedule.weights[i])
            neighborhood_posts = {j: packets[j].post for j in members}
            claimed = {
                j: pres[i] if j == i else packets[j].claimed_pre for j in members
            }
            if cfg.enable_c1:
                claimed, replaced = filter_pretrain_models(
                    i, claimed, testset, cfg.v_threshold
                )
                if replaced:
                    c1_replaced[i] = replaced
            if cfg.lcv_mode == "exact":
                if len(members) > cfg.lcv_exact_cap:
                    raise ValueError(
                        f"neighborhood of {len(members)} exceeds the exact "
                        f"enumeration cap {cfg.lcv_exact_cap}; use sampled mode"
                    )
                players, table = subset_utilities(
                    neighborhood_posts, claimed, weights, testset
                )
                lcv = lcv_from_table(i, t, players, table, normalize=cfg.normalize_lcv)
                audit[i] = (
                    float(table[0]),
                    float(table[-1]),
                    float(sum(lcv.entries.values())),
                    len(players),
                )
            else:
                players = tuple(sorted(weights))

                def utility(mask: int, _posts=neighborhood_posts, _pre=claimed,
                            _w=weights, _players=players) -> float:
                    subset = {_players[b] for b in range(len(_players)) if mask >> b & 1}
                    return evaluate(partial_model(_posts, _pre, _w, subset), testset)

                rng = np.random.default_rng(stream(cfg.seed, STREAM_MC, t, i))
                values, _ = monte_carlo_shapley(
                    utility, len(players), cfg.lcv_samples, rng,
                    normalized=cfg.normalize_lcv,
                )
                lcv = Lcv(i, t, {players[b]: float(values[b]) for b in range(len(players))})
            lcvs_true.append(lcv)
            profile = states[i].profile
            if profile is not None and profile.fake_report:
                lcv = falsify_report(profile, lcv)
            lcvs_reported.append(lcv)

    for i in range(n):
        states[i].theta = new_thetas[i]
    accuracy = np.array([evaluate(states[i].theta, testset) for i in range(n)])
    return RoundLog(
        round_index=t,
        accuracy=accuracy,
        lcvs_true=lcvs_true,
        lcvs_reported=lcvs_reported,
        lcvs_used=None,
        c1_replaced=c1_replaced,
        lcv_audit=audit,
        skipped_training=tuple(sorted(set(range(n)) - set(active))),
    )


def run_simulation(
    cfg: SimConfig,
    active_subset: frozenset[int] | None = None,
    compute_lcvs: bool = True,
) -> SimResult:
    """Run the whole protocol for cfg.rounds rounds.

    active_subset restricts which clients actually train (everyone
    still exchanges and aggregates); None means all of them.
    """
    shards, testset, d, n_classes = materialize_data(cfg)
    initial = init_params(d, n_classes, stream(cfg.seed, STREAM_INIT))
    profiles: dict[int, AdversaryProfile] = {j: cfg.profile for j in cfg.dishonest}
    states = [
        ClientState(i, initial, shards[i], profiles.get(i)) for i in range(cfg.n)
    ]
    active = frozenset(range(cfg.n)) if active_subset is None else frozenset(active_subset)
    if not active <= set(range(cfg.n)):
        raise ValueError("active subset contains unknown client ids")

    schedules_from_file = (
        load_schedule_file(cfg.topology.path) if cfg.topology.kind == "file" else None
    )
    if schedules_from_file is not None and schedules_from_file[0].n != cfg.n:
        raise ValueError("schedule file client count does not match the configuration")

    phi = np.zeros((cfg.n, cfg.n))
    history = [phi.copy()]
    logs: list[RoundLog] = []
    schedules: list[RoundSchedule] = []
    accuracy_rows = [np.full(cfg.n, evaluate(initial, testset))]
    for t in range(cfg.rounds):
        schedule = _schedule_for(cfg, schedules_from_file, t)
        schedules.append(schedule)
        log = run_round(states, schedule, t, cfg, testset, initial, active, compute_lcvs)
        if compute_lcvs:
            used = log.lcvs_reported
            if cfg.enable_c2:
                problem = coord.stack_round(used, cfg.n, cfg.lam)
                detection = coord.detect_outliers(problem, shrinkage=cfg.shrinkage)
                threshold = (
                    coord.consistency_threshold(problem)
                    if cfg.consistency_threshold is None
                    else cfg.consistency_threshold
                )
                consensus = coord.refit_consensus(problem, detection.flags, detection.v)
                used, replaced = coord.correct_lcvs(used, consensus, threshold)
                log.outlier_replaced = replaced
                log.outlier_flag_rows = int(np.count_nonzero(detection.flags))
                log.outlier_objective = detection.objective
                log.no_report = tuple(np.flatnonzero(detection.no_report))
            log.lcvs_used = used
            phi = coord.propagate(phi, schedule, used)
        history.append(phi.copy())
        accuracy_rows.append(log.accuracy)
        logs.append(log)
    return SimResult(
        config=cfg,
        contributions=phi,
        contributions_history=history,
        accuracy=np.vstack(accuracy_rows),
        round_logs=logs,
        final_models=[states[i].theta for i in range(cfg.n)],
        dishonest=cfg.dishonest,
        schedules=schedules,
        testset=testset,
    )
