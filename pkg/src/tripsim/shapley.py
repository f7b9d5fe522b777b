"""Shapley value computation over subset-indexed utility tables.

A coalition of m players is encoded as a bitmask over positions
0..m-1.  A utility table is a length 2**m array u where u[mask] is
the utility of the coalition encoded by mask.  Two conventions are
supported for the attribution itself:

* literal:     phi(j) = sum_{S not containing j} [u(S+j) - u(S)] / C(m-1, |S|)
* normalized:  literal / m, which is the classical Shapley value and
               sums to u(full) - u(empty).

The literal form is what the per-round contribution reports use by
default; the normalized form is the permutation-average convention.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence

import numpy as np


def popcounts(n_masks: int) -> np.ndarray:
    """Population count for every mask in [0, n_masks)."""
    counts = np.zeros(n_masks, dtype=np.int64)
    for mask in range(1, n_masks):
        counts[mask] = counts[mask >> 1] + (mask & 1)
    return counts


def shapley_from_table(utilities: Sequence[float], m: int, normalized: bool = False) -> np.ndarray:
    """Exact Shapley values for an m-player game given as a utility table.

    utilities must have length 2**m, indexed by coalition bitmask.
    Returns an array of m attributions in player order.
    """
    u = np.asarray(utilities, dtype=np.float64)
    if m < 0:
        raise ValueError("player count must be nonnegative")
    if u.shape != (1 << m,):
        raise ValueError(f"utility table must have length {1 << m}, got {u.shape}")
    if m == 0:
        return np.zeros(0)
    counts = popcounts(1 << m)
    # coeff[s] = 1 / C(m-1, s) for a coalition of size s not containing j
    coeff = np.array([1.0 / math.comb(m - 1, s) for s in range(m)])
    phi = np.zeros(m)
    for j in range(m):
        bit = 1 << j
        for mask in range(1 << m):
            if mask & bit:
                continue
            phi[j] += (u[mask | bit] - u[mask]) * coeff[counts[mask]]
    if normalized:
        phi /= m
    return phi


def permutation_shapley(utilities: Sequence[float], m: int) -> np.ndarray:
    """Shapley values by full enumeration of all m! orderings.

    Averages each player's marginal over every permutation, so the
    result is the normalized convention.  Exponential; intended as a
    cross-check for small m.
    """
    u = np.asarray(utilities, dtype=np.float64)
    if u.shape != (1 << m,):
        raise ValueError(f"utility table must have length {1 << m}, got {u.shape}")
    if m == 0:
        return np.zeros(0)
    import itertools

    phi = np.zeros(m)
    n_perms = 0
    for order in itertools.permutations(range(m)):
        mask = 0
        for j in order:
            phi[j] += u[mask | (1 << j)] - u[mask]
            mask |= 1 << j
        n_perms += 1
    return phi / n_perms


def monte_carlo_shapley(
    utility: Callable[[int], float],
    m: int,
    samples: int,
    rng: np.random.Generator,
    normalized: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate Shapley values by sampling player orderings.

    utility maps a coalition bitmask to its value and is memoized
    internally, so repeated masks cost one evaluation.  samples is the
    number of sampled permutations.  Returns (estimate, standard error)
    per player, in the normalized convention unless the literal one is
    requested (which scales both by m).
    """
    if m <= 0:
        raise ValueError("player count must be positive")
    if samples <= 0:
        raise ValueError("sample count must be positive")
    cache: dict[int, float] = {}

    def u(mask: int) -> float:
        got = cache.get(mask)
        if got is None:
            got = float(utility(mask))
            cache[mask] = got
        return got

    total = np.zeros(m)
    total_sq = np.zeros(m)
    for _ in range(samples):
        order = rng.permutation(m)
        mask = 0
        for j in order:
            j = int(j)
            delta = u(mask | (1 << j)) - u(mask)
            total[j] += delta
            total_sq[j] += delta * delta
            mask |= 1 << j
    mean = total / samples
    var = np.maximum(total_sq / samples - mean**2, 0.0)
    stderr = np.sqrt(var / samples)
    if not normalized:
        mean = mean * m
        stderr = stderr * m
    return mean, stderr
