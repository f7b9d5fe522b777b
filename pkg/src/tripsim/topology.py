"""Communication topologies and per-round exchange schedules.

A RoundSchedule fixes, for one round, who sends to whom and with what
weight.  Graph families here are undirected (every edge appears in
both directions) with unit weights, including the implicit self-loop
every client uses when aggregating.  Custom directed schedules can be
loaded from a JSON file instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

SELF_WEIGHT = 1.0
EDGE_WEIGHT = 1.0


@dataclass(frozen=True)
class RoundSchedule:
    """Directed exchange plan for a single round.

    in_neighbors[i] lists senders to i, out_neighbors[i] lists receivers
    of i, both sorted and excluding i itself.  weights[i] maps every
    member of i's closed in-neighborhood (senders plus i) to a positive
    aggregation weight.
    """

    n: int
    in_neighbors: tuple[tuple[int, ...], ...]
    out_neighbors: tuple[tuple[int, ...], ...]
    weights: tuple[dict[int, float], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.n <= 0:
            raise ValueError("schedule needs at least one client")
        if len(self.in_neighbors) != self.n or len(self.out_neighbors) != self.n:
            raise ValueError("neighbor lists must cover every client")
        if not self.weights:
            object.__setattr__(
                self,
                "weights",
                tuple(
                    {j: EDGE_WEIGHT for j in self.in_neighbors[i]} | {i: SELF_WEIGHT}
                    for i in range(self.n)
                ),
            )
        if len(self.weights) != self.n:
            raise ValueError("weights must cover every client")
        for i in range(self.n):
            ins = self.in_neighbors[i]
            if any(not 0 <= j < self.n for j in ins):
                raise ValueError(f"client {i} has an out-of-range in-neighbor")
            if i in ins:
                raise ValueError(f"client {i} lists itself as an in-neighbor")
            if tuple(sorted(set(ins))) != ins:
                raise ValueError(f"client {i} in-neighbors must be sorted and unique")
            outs = self.out_neighbors[i]
            if i in outs or tuple(sorted(set(outs))) != outs:
                raise ValueError(f"client {i} out-neighbors must be sorted, unique, non-self")
            expected_keys = set(ins) | {i}
            if set(self.weights[i]) != expected_keys:
                raise ValueError(f"client {i} weights must cover exactly its senders plus itself")
            if any(w <= 0 for w in self.weights[i].values()):
                raise ValueError(f"client {i} has a non-positive weight")
        for i in range(self.n):
            for j in self.in_neighbors[i]:
                if i not in self.out_neighbors[j]:
                    raise ValueError(f"edge {j}->{i} missing from sender's out list")
        for j in range(self.n):
            for i in self.out_neighbors[j]:
                if j not in self.in_neighbors[i]:
                    raise ValueError(f"edge {j}->{i} missing from receiver's in list")

    def closure(self, i: int) -> tuple[int, ...]:
        """i's in-neighbors plus i, ascending."""
        return tuple(sorted(self.in_neighbors[i] + (i,)))


@dataclass(frozen=True)
class TopologySpec:
    """Named graph family plus its parameters.

    kind: star, line, regular, watts-strogatz, or file.
    k / beta apply to regular and watts-strogatz; seed feeds the
    rewiring draws; time_varying redraws watts-strogatz each round.
    """

    kind: str
    k: int = 2
    beta: float = 0.0
    seed: int = 0
    time_varying: bool = False
    path: str | None = None

    KINDS = ("star", "line", "regular", "watts-strogatz", "file")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file topology requires a schedule path")
        if self.kind == "watts-strogatz" and not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")


def _from_undirected_edges(n: int, edges: set[tuple[int, int]]) -> RoundSchedule:
    neighbors: list[set[int]] = [set() for _ in range(n)]
    for a, b in edges:
        neighbors[a].add(b)
        neighbors[b].add(a)
    lists = tuple(tuple(sorted(s)) for s in neighbors)
    return RoundSchedule(n=n, in_neighbors=lists, out_neighbors=lists)


def _ring_lattice_edges(n: int, k: int) -> set[tuple[int, int]]:
    """Circulant graph: offsets 1..k//2 each way, plus the diametric
    edge when k is odd (which requires even n for n*k to be even)."""
    if k >= n:
        raise ValueError("degree k must be smaller than the client count")
    if k < 1:
        raise ValueError("degree k must be at least 1")
    if (n * k) % 2 != 0:
        raise ValueError("no k-regular graph exists: n*k must be even")
    edges = set()
    for i in range(n):
        for off in range(1, k // 2 + 1):
            j = (i + off) % n
            edges.add((min(i, j), max(i, j)))
        if k % 2 == 1:
            j = (i + n // 2) % n
            edges.add((min(i, j), max(i, j)))
    return edges


def star_schedule(n: int) -> RoundSchedule:
    """Hub client 0 linked to every other client."""
    if n < 2:
        raise ValueError("star topology needs at least two clients")
    return _from_undirected_edges(n, {(0, j) for j in range(1, n)})


def line_schedule(n: int) -> RoundSchedule:
    """Path graph in client-id order."""
    if n < 2:
        raise ValueError("line topology needs at least two clients")
    return _from_undirected_edges(n, {(j, j + 1) for j in range(n - 1)})


def regular_schedule(n: int, k: int) -> RoundSchedule:
    """Deterministic k-regular ring lattice."""
    return _from_undirected_edges(n, _ring_lattice_edges(n, k))


def watts_strogatz_schedule(n: int, k: int, beta: float, seed) -> RoundSchedule:
    """Small-world graph: even-k ring lattice with random rewiring.

    Each clockwise lattice edge (i, i+off) is rewired with probability
    beta to (i, random target) avoiding self-loops and duplicates; an
    edge with no legal target is kept.  beta = 0 reproduces the ring
    lattice exactly.
    """
    if k % 2 != 0:
        raise ValueError("watts-strogatz requires an even degree k")
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must be in [0, 1]")
    if k >= n:
        raise ValueError("degree k must be smaller than the client count")
    rng = np.random.default_rng(seed)
    edges = {(min(i, (i + off) % n), max(i, (i + off) % n))
             for i in range(n) for off in range(1, k // 2 + 1)}
    for off in range(1, k // 2 + 1):
        for i in range(n):
            if rng.random() >= beta:
                continue
            old = (min(i, (i + off) % n), max(i, (i + off) % n))
            candidates = [
                j for j in range(n)
                if j != i and (min(i, j), max(i, j)) not in edges
            ]
            if not candidates:
                continue
            j = candidates[rng.integers(len(candidates))]
            edges.discard(old)
            edges.add((min(i, j), max(i, j)))
    return _from_undirected_edges(n, edges)


def load_schedule_file(path) -> list[RoundSchedule]:
    """Read a JSON list of rounds, each a list of {from, to, w} edges.

    Edges are directed; weights default to 1.0 and the self-weight is
    always 1.0.  The client count is 1 + the largest id mentioned.
    """
    with open(path) as f:
        rounds = json.load(f)
    if not isinstance(rounds, list) or not rounds:
        raise ValueError(f"{path}: schedule file must be a non-empty JSON list of rounds")
    schedules = []
    for t, entries in enumerate(rounds):
        if not isinstance(entries, list):
            raise ValueError(f"{path}: round {t} must be a list of edges")
        n = 0
        for e in entries:
            if not isinstance(e, dict) or "from" not in e or "to" not in e:
                raise ValueError(f"{path}: round {t} edges need 'from' and 'to'")
            n = max(n, int(e["from"]) + 1, int(e["to"]) + 1)
        if n == 0:
            raise ValueError(f"{path}: round {t} has no edges")
        ins: list[set[int]] = [set() for _ in range(n)]
        outs: list[set[int]] = [set() for _ in range(n)]
        weights: list[dict[int, float]] = [{i: SELF_WEIGHT} for i in range(n)]
        for e in entries:
            src, dst = int(e["from"]), int(e["to"])
            w = float(e.get("w", EDGE_WEIGHT))
            if src == dst:
                raise ValueError(f"{path}: round {t} has a self-edge on {src}")
            ins[dst].add(src)
            outs[src].add(dst)
            weights[dst][src] = w
        schedules.append(RoundSchedule(
            n=n,
            in_neighbors=tuple(tuple(sorted(s)) for s in ins),
            out_neighbors=tuple(tuple(sorted(s)) for s in outs),
            weights=tuple(weights),
        ))
    return schedules


def build_schedule(spec: TopologySpec, n: int, t: int) -> RoundSchedule:
    """The schedule for round t under spec (file kind uses load_schedule_file)."""
    if spec.kind == "star":
        return star_schedule(n)
    if spec.kind == "line":
        return line_schedule(n)
    if spec.kind == "regular":
        return regular_schedule(n, spec.k)
    if spec.kind == "watts-strogatz":
        draw = t if spec.time_varying else 0
        return watts_strogatz_schedule(n, spec.k, spec.beta, [spec.seed, draw])
    raise ValueError(f"cannot build {spec.kind!r} directly; load its schedule file")
