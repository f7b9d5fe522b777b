"""Local learner: softmax regression, datasets, partitioning.

Model parameters are a flat float64 vector of length d*C + C: the
weight matrix W (d x C) flattened row-major, followed by the bias b.
Training is plain mini-batch gradient descent on the multinomial
cross-entropy; evaluation is argmax accuracy, where numpy's argmax
breaks score ties toward the lowest class index.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np

DEFAULT_BATCH_SIZE = 32
# Tag ints separating the RNG streams used when carving up a base pool.
_SPLIT_STREAM = 101
_NOISE_STREAM = 102
_FLIP_STREAM = 103
_DIRICHLET_STREAM = 104


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector.  Rejects non-finite entries at construction."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("model parameters must be a flat vector")
        if not np.all(np.isfinite(v)):
            raise ValueError("model parameters contain non-finite entries")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer labels."""

    features: np.ndarray
    labels: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise ValueError("labels must be a vector matching the feature rows")
        if y.size and y.min() < 0:
            raise ValueError("labels must be nonnegative")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class DistributionSpec:
    """How to carve a base pool into per-client shards.

    kind is one of iid / sizes / non-iid / noisy-images / noisy-labels.
    fractions (sizes), alpha (non-iid), sigmas (noisy-images) and
    flip_ratios (noisy-labels) apply only to their own kind.
    """

    kind: str = "iid"
    seed: int = 0
    fractions: tuple[float, ...] | None = None
    alpha: float | None = None
    sigmas: tuple[float, ...] | None = None
    flip_ratios: tuple[float, ...] | None = None

    KINDS = ("iid", "sizes", "non-iid", "noisy-images", "noisy-labels")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")


def init_params(d: int, n_classes: int, seed, scale: float = 0.01) -> ModelParams:
    """Small random initial parameters, shared by every client at round 0."""
    rng = np.random.default_rng(seed)
    return ModelParams(rng.normal(0.0, scale, d * n_classes + n_classes))


def _unpack(theta: ModelParams, d: int) -> tuple[np.ndarray, np.ndarray, int]:
    p = len(theta)
    if p % (d + 1) != 0:
        raise ValueError(f"parameter length {p} does not fit feature dimension {d}")
    c = p // (d + 1)
    w = theta.values[: d * c].reshape(d, c)
    b = theta.values[d * c :]
    return w, b, c

def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def train(
    theta: ModelParams,
    data: Dataset,
    epochs: int,
    lr: float,
    seed,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> ModelParams:
    """Mini-batch gradient descent from theta; returns the new parameters.

    Batches are consecutive chunks of a fresh per-epoch shuffle drawn
    from seed.  A dataset smaller than the batch size trains full-batch.
    Training on an empty dataset returns theta unchanged with a warning.
    lr must be nonnegative; epochs 0 returns theta unchanged.
    """
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    if epochs < 0:
        raise ValueError("epoch count must be nonnegative")
    if batch_size <= 0:
        raise ValueError("batch size must be positive")
    if len(data) == 0:
        warnings.warn("training on an empty dataset leaves the model unchanged")
        return theta
    d = data.features.shape[1]
    w, b, c = _unpack(theta, d)
    if data.labels.max() >= c:
        raise ValueError("label outside the model's class range")
    w = w.copy()
    b = b.copy()
    rng = np.random.default_rng(seed)
    m = len(data)
    for _ in range(epochs):
        order = rng.permutation(m)
        for start in range(0, m, batch_size):
            idx = order[start : start + batch_size]
            x = data.features[idx]
            y = data.labels[idx]
            probs = _softmax(x @ w + b)
            probs[np.arange(len(idx)), y] -= 1.0
            probs /= len(idx)
            w -= lr * (x.T @ probs)
            b -= lr * probs.sum(axis=0)
    return ModelParams(np.concatenate([w.reshape(-1), b]))


def evaluate(theta: ModelParams, data: Dataset) -> float:
    """Accuracy of argmax predictions on data.  Errors on an empty set."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    d = data.features.shape[1]
    w, b, c = _unpack(theta, d)
    if data.labels.max() >= c:
        raise ValueError("label outside the model's class range")
    predictions = np.argmax(data.features @ w + b, axis=1)
    return float(np.mean(predictions == data.labels))


def make_blobs(
    n_samples: int,
    d: int,
    n_classes: int,
    seed,
    center_scale: float = 1.5,
    cluster_std: float = 1.0,
    centers: np.ndarray | None = None,
    name: str = "blobs",
) -> Dataset:
    """Gaussian blob classification data with near-balanced classes.

    Class centers default to fresh normal(0, center_scale) draws; pass
    centers explicitly to share them between a train pool and test set.
    """
    if n_samples <= 0:
        raise ValueError("sample count must be positive")
    if n_classes <= 0 or d <= 0:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    if centers is None:
        centers = rng.normal(0.0, center_scale, (n_classes, d))
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape != (n_classes, d):
        raise ValueError("centers shape must be (n_classes, d)")
    labels = np.arange(n_samples, dtype=np.int64) % n_classes
    labels = labels[rng.permutation(n_samples)]
    features = centers[labels] + rng.normal(0.0, cluster_std, (n_samples, d))
    return Dataset(features, labels, name=name)


def blob_centers(d: int, n_classes: int, seed, center_scale: float = 1.5) -> np.ndarray:
    """The centers make_blobs would draw from seed, for reuse across sets."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, center_scale, (n_classes, d))


def _apportion(total: int, quotas: np.ndarray) -> np.ndarray:
    """Integer counts summing to round(sum(quotas)), largest remainder."""
    base = np.floor(quotas).astype(np.int64)
    target = int(round(quotas.sum()))
    target = min(target, total)
    remainder = quotas - base
    short = target - int(base.sum())
    if short > 0:
        # stable tie-break: bigger remainder first, then lower index
        order = np.lexsort((np.arange(len(quotas)), -remainder))
        base[order[:short]] += 1
    return base


def _stratified_indices(base: Dataset, rng: np.random.Generator) -> list[np.ndarray]:
    """Shuffled row indices per class, classes in ascending label order."""
    per_class = []
    for cls in np.unique(base.labels):
        idx = np.flatnonzero(base.labels == cls)
        per_class.append(rng.permutation(idx))
    return per_class


def _deal_iid(base: Dataset, n_clients: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Round-robin deal of each class's shuffled rows.

    The deal start rotates with the class so the +1 leftovers spread
    across clients instead of piling onto the low ids.
    """
    shards: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
    for ci, idx in enumerate(_stratified_indices(base, rng)):
        for i in range(n_clients):
            shards[(i + ci) % n_clients].append(idx[i::n_clients])
    return [np.sort(np.concatenate(parts)) for parts in shards]


def _deal_sizes(
    base: Dataset, fractions: tuple[float, ...], rng: np.random.Generator
) -> list[np.ndarray]:
    if any(f <= 0 for f in fractions):
        raise ValueError("size fractions must be positive")
    if sum(fractions) > 1.0 + 1e-9:
        raise ValueError("size fractions must sum to at most 1")
    n_clients = len(fractions)
    shards: list[list[np.ndarray]] = [[] for _ in range(n_clients)]
    for idx in _stratified_indices(base, rng):
        counts = _apportion(len(idx), np.asarray(fractions) * len(idx))
        stop = np.cumsum(counts)
        start = stop - counts
        for i in range(n_clients):
            shards[i].append(idx[start[i] : stop[i]])
    return [np.sort(np.concatenate(parts)) for parts in shards]


def _deal_dirichlet(
    base: Dataset, n_clients: int, alpha: float, rng: np.random.Generator
) -> list[np.ndarray]:
    """Equal shard sizes, class mix drawn from Dirichlet(alpha) per client."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    per_class = _stratified_indices(base, rng)
    n_classes = len(per_class)
    m = len(base)
    sizes = _apportion(m, np.full(n_clients, m / n_clients))
    mixes = rng.dirichlet(np.full(n_classes, alpha), size=n_clients)
    remaining = [list(idx) for idx in per_class]
    shards: list[list[int]] = [[] for _ in range(n_clients)]
    for i in range(n_clients):
        want = _apportion(sizes[i], mixes[i] * sizes[i])
        for cls in range(n_classes):
            take = min(int(want[cls]), len(remaining[cls]))
            shards[i].extend(remaining[cls][:take])
            remaining[cls] = remaining[cls][take:]
        # top up from whatever classes still have stock
        short = sizes[i] - len(shards[i])
        for cls in range(n_classes):
            if short <= 0:
                break
            take = min(short, len(remaining[cls]))
            shards[i].extend(remaining[cls][:take])
            remaining[cls] = remaining[cls][take:]
            short -= take
    return [np.sort(np.asarray(shard, dtype=np.int64)) for shard in shards]


def generate_partitions(spec: DistributionSpec, base: Dataset, n_clients: int) -> list[Dataset]:
    """Split base into n_clients shards according to spec.

    The split shuffle, feature-noise draws and label-flip draws use
    separate streams derived from spec.seed, so e.g. noisy-labels with
    all-zero flip ratios reproduces the iid split exactly.
    """
    if n_clients <= 0:
        raise ValueError("client count must be positive")
    if n_clients > len(base):
        raise ValueError("insufficient samples: more clients than base rows")
    split_rng = np.random.default_rng([spec.seed, _SPLIT_STREAM])

    def need(value, label):
        if value is None:
            raise ValueError(f"{spec.kind} distribution requires {label}")
        return value

    if spec.kind == "sizes":
        fractions = need(spec.fractions, "fractions")
        if len(fractions) != n_clients:
            raise ValueError("fractions must list one entry per client")
        shards = _deal_sizes(base, fractions, split_rng)
    elif spec.kind == "non-iid":
        alpha = need(spec.alpha, "alpha")
        dir_rng = np.random.default_rng([spec.seed, _DIRICHLET_STREAM])
        shards = _deal_dirichlet(base, n_clients, alpha, dir_rng)
    else:
        shards = _deal_iid(base, n_clients, split_rng)

    datasets = []
    n_classes = int(base.labels.max()) + 1 if len(base) else 0
    for i, rows in enumerate(shards):
        features = base.features[rows].copy()
        labels = base.labels[rows].copy()
        if spec.kind == "noisy-images":
            sigmas = need(spec.sigmas, "sigmas")
            if len(sigmas) != n_clients:
                raise ValueError("sigmas must list one entry per client")
            if sigmas[i] < 0:
                raise ValueError("noise sigma must be nonnegative")
            if sigmas[i] > 0:
                noise_rng = np.random.default_rng([spec.seed, _NOISE_STREAM, i])
                features = features + noise_rng.normal(0.0, sigmas[i], features.shape)
        elif spec.kind == "noisy-labels":
            ratios = need(spec.flip_ratios, "flip_ratios")
            if len(ratios) != n_clients:
                raise ValueError("flip_ratios must list one entry per client")
            if not 0.0 <= ratios[i] <= 1.0:
                raise ValueError("flip ratio must be in [0, 1]")
            k = int(round(ratios[i] * len(rows)))
            if k > 0:
                flip_rng = np.random.default_rng([spec.seed, _FLIP_STREAM, i])
                where = flip_rng.choice(len(rows), size=k, replace=False)
                shift = flip_rng.integers(1, n_classes, size=k)
                labels[where] = (labels[where] + shift) % n_classes
        datasets.append(Dataset(features, labels, name=f"client-{i}"))
    return datasets


def save_csv(data: Dataset, path) -> None:
    """Write a dataset as f0,...,f{d-1},label rows with full-precision floats."""
    d = data.features.shape[1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"f{j}" for j in range(d)] + ["label"])
        for row, label in zip(data.features, data.labels):
            writer.writerow([format(v, ".17g") for v in row] + [int(label)])


def load_csv(path, name: str = "") -> Dataset:
    """Read a dataset written in the f0..f{d-1},label column format."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty dataset file")
        d = len(header) - 1
        expected = [f"f{j}" for j in range(d)] + ["label"]
        if header != expected:
            raise ValueError(f"{path}: header must be f0..f{d - 1},label")
        features = []
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} columns")
            features.append([float(v) for v in row[:d]])
            labels.append(int(row[d]))
    return Dataset(np.asarray(features, dtype=np.float64).reshape(-1, d),
                   np.asarray(labels, dtype=np.int64), name=name or str(path))
