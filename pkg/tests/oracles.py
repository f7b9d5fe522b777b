"""Independent reference implementations used only by the tests.

These deliberately avoid the package's code paths and encodings:
Shapley values come from the factorial-weight subset formula over
explicit id sets, and the mean-shift fit is a scalar coordinate
descent run for a fixed large iteration count.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def shapley_by_subsets(utility_of: dict[frozenset, float], players: list[int]) -> dict[int, float]:
    """Normalized Shapley values via sum over subsets with factorial weights."""
    n = len(players)
    values: dict[int, float] = {}
    for j in players:
        others = [q for q in players if q != j]
        total = 0.0
        for size in range(n):
            for combo in itertools.combinations(others, size):
                s = frozenset(combo)
                weight = math.factorial(size) * math.factorial(n - size - 1) / math.factorial(n)
                total += weight * (utility_of[s | {j}] - utility_of[s])
        values[j] = total
    return values


def table_as_set_game(utilities, players: list[int]) -> dict[frozenset, float]:
    """Re-key a bitmask utility table by explicit player sets."""
    game = {}
    for mask in range(1 << len(players)):
        members = frozenset(players[b] for b in range(len(players)) if mask >> b & 1)
        game[members] = float(utilities[mask])
    return game


def mean_shift_reference(
    p: np.ndarray,
    subjects: np.ndarray,
    n: int,
    lam: float,
    shrink: float,
    iterations: int = 2000,
) -> tuple[np.ndarray, np.ndarray]:
    """Scalar coordinate descent on ||p - v[subj] - g||^2 + lam*|g|_1.

    Updates each g entry then each v entry one at a time, for a fixed
    iteration budget, starting from zeros.
    """
    p = np.asarray(p, dtype=np.float64)
    subjects = np.asarray(subjects, dtype=np.int64)
    v = np.zeros(n)
    g = np.zeros(len(p))
    for _ in range(iterations):
        for k in range(len(p)):
            r = p[k] - v[subjects[k]]
            g[k] = math.copysign(max(abs(r) - shrink, 0.0), r)
        for j in range(n):
            rows = np.flatnonzero(subjects == j)
            if rows.size:
                v[j] = float(np.mean(p[rows] - g[rows]))
    return v, g


def mean_shift_objective(p, subjects, v, g, lam: float) -> float:
    p = np.asarray(p, dtype=np.float64)
    residual = p - np.asarray(v)[np.asarray(subjects, dtype=np.int64)] - np.asarray(g)
    return float(residual @ residual + lam * np.abs(np.asarray(g)).sum())
