"""Ground-truth contribution accounting by re-execution.

The oracle replays the whole decentralized run once per coalition S,
letting only S's members train (everyone else forwards its current
model unchanged) while the exchange topology and every random draw
stay fixed.  The utility a client assigns to S is the accuracy of its
own final model under that replay; exact Shapley values over those
2**n utilities are the reference the per-round accounting is judged
against.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .engine import SimConfig, SimResult, run_simulation
from .learner import evaluate
from .shapley import shapley_from_table

DEFAULT_EXACT_CAP = 12


def _require_honest(cfg: SimConfig) -> None:
    if cfg.dishonest:
        raise ValueError("re-execution oracle is only defined for honest runs")


def rerun_with_subset(cfg: SimConfig, subset: frozenset[int] | set[int]) -> SimResult:
    """Replay the run with only subset training; topology and draws fixed."""
    _require_honest(cfg)
    if not set(subset) <= set(range(cfg.n)):
        raise ValueError("subset contains unknown client ids")
    return run_simulation(cfg, active_subset=frozenset(subset), compute_lcvs=False)


def _mask_utilities(args: tuple[SimConfig, int]) -> list[float]:
    cfg, mask = args
    subset = frozenset(j for j in range(cfg.n) if mask >> j & 1)
    result = run_simulation(cfg, active_subset=subset, compute_lcvs=False)
    return [evaluate(m, result.testset) for m in result.final_models]


@dataclass(frozen=True)
class OracleResult:
    """Per-client utility tables and exact attributions.

    utilities[i, mask] is the accuracy of client i's final model when
    exactly the coalition encoded by mask trains.  phi_literal[i] and
    phi_normalized[i] are the exact attributions of that game; the
    literal convention is n times the normalized one.
    """

    utilities: np.ndarray
    phi_literal: np.ndarray
    phi_normalized: np.ndarray


def exact_shapley(
    cfg: SimConfig,
    cap: int = DEFAULT_EXACT_CAP,
    workers: int = 1,
) -> OracleResult:
    """Exact contribution ground truth via 2**n full replays.

    Refuses runs larger than cap clients.  workers > 1 spreads the
    replays over processes; results are reduced in mask order either
    way, so the output is identical.
    """
    _require_honest(cfg)
    if cfg.n > cap:
        raise ValueError(
            f"{cfg.n} clients means {1 << cfg.n} replays, above the cap {cap}"
        )
    tasks = [(cfg, mask) for mask in range(1 << cfg.n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_mask_utilities, tasks, chunksize=8))
    else:
        rows = [_mask_utilities(task) for task in tasks]
    utilities = np.asarray(rows, dtype=np.float64).T  # (n, 2**n)
    phi_literal = np.vstack([
        shapley_from_table(utilities[i], cfg.n) for i in range(cfg.n)
    ])
    return OracleResult(
        utilities=utilities,
        phi_literal=phi_literal,
        phi_normalized=phi_literal / cfg.n,
    )


def cosine_distance(a, b) -> float:
    """1 - cos(a, b); undefined (raises) when either vector is zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("cosine distance needs two equal-length vectors")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance undefined for a zero vector")
    return float(1.0 - (a @ b) / (na * nb))


def pearson(x, y) -> float:
    """Pearson correlation; undefined (raises) for constant input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("correlation needs two equal-length vectors of 2+ points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.linalg.norm(xc)
    sy = np.linalg.norm(yc)
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for constant input")
    return float((xc @ yc) / (sx * sy))
