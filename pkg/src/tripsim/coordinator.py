"""Coordinator-side contribution accounting.

The coordinator sees only per-round attribution reports (LCVs) and
the exchange schedule; it never holds model parameters or data.  Each
round it can screen the stacked reports for falsified entries with a
mean-shift outlier model, then folds the (possibly corrected) reports
into every client's running contribution vector by averaging over the
same closed neighborhoods the models were averaged over.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lcv import Lcv
from .topology import RoundSchedule

DEFAULT_LAMBDA = 0.5
DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-8
LAMBDA_RANGE_MESSAGE = "λ ∈ (0,1]"


def propagate(
    phi: np.ndarray,
    schedule: RoundSchedule,
    lcvs: list[Lcv],
) -> np.ndarray:
    """One accounting round: average neighborhood vectors, add reports.

    phi is the n x n state, row i holding client i's contribution
    vector.  Row i becomes the weighted average of the rows in i's
    closed in-neighborhood plus the dense form of i's report.  lcvs
    must hold exactly one report per client, in owner order.
    """
    phi = np.asarray(phi, dtype=np.float64)
    n = schedule.n
    if phi.shape != (n, n):
        raise ValueError(f"contribution state must be {n}x{n}")
    if [lcv.owner for lcv in lcvs] != list(range(n)):
        raise ValueError("incomplete round report: need one LCV per client in owner order")
    rounds = {lcv.round_index for lcv in lcvs}
    if len(rounds) > 1:
        raise ValueError("round report mixes different rounds")
    out = np.zeros_like(phi)
    for i in range(n):
        weights = schedule.weights[i]
        acc = np.zeros(n)
        total = 0.0
        for j in sorted(weights):
            acc = acc + weights[j] * phi[j]
            total += weights[j]
        out[i] = acc / total + lcvs[i].dense(n)
    return out


@dataclass(frozen=True)
class OutlierProblem:
    """Stacked round reports in mean-shift form.

    Row k says reporters[k] attributed p[k] to subjects[k].  n is the
    number of subjects (clients), lam the sparsity penalty weight.
    """

    reporters: np.ndarray
    subjects: np.ndarray
    p: np.ndarray
    n: int
    lam: float

    def __post_init__(self) -> None:
        reporters = np.asarray(self.reporters, dtype=np.int64)
        subjects = np.asarray(self.subjects, dtype=np.int64)
        p = np.asarray(self.p, dtype=np.float64)
        if not (reporters.shape == subjects.shape == p.shape) or p.ndim != 1:
            raise ValueError("reporters, subjects and p must be equal-length vectors")
        if subjects.size and (subjects.min() < 0 or subjects.max() >= self.n):
            raise ValueError("subject id out of range")
        if not 0.0 < self.lam <= 1.0:
            raise ValueError(f"lambda must satisfy {LAMBDA_RANGE_MESSAGE}")
        object.__setattr__(self, "reporters", reporters)
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "p", p)


def stack_round(lcvs: list[Lcv], n: int, lam: float = DEFAULT_LAMBDA) -> OutlierProblem:
    """Stack every stored report entry, owners ascending then subjects."""
    reporters: list[int] = []
    subjects: list[int] = []
    values: list[float] = []
    for lcv in sorted(lcvs, key=lambda v: v.owner):
        for j in lcv.support():
            reporters.append(lcv.owner)
            subjects.append(j)
            values.append(lcv.entries[j])
    return OutlierProblem(
        reporters=np.asarray(reporters, dtype=np.int64),
        subjects=np.asarray(subjects, dtype=np.int64),
        p=np.asarray(values, dtype=np.float64),
        n=n,
        lam=lam,
    )


def soft_threshold(r, lam: float, convention: str = "half"):
    """Elementwise shrink toward zero.

    convention 'half' shrinks by lam/2 (matching the squared-residual
    penalty as written), 'full' by lam.
    """
    if convention == "half":
        shrink = lam / 2.0
    elif convention == "full":
        shrink = lam
    else:
        raise ValueError(f"unknown shrinkage convention {convention!r}")
    r = np.asarray(r, dtype=np.float64)
    out = np.sign(r) * np.maximum(np.abs(r) - shrink, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class OutlierResult:
    """Consensus values, per-row shifts, and bookkeeping from detection."""

    v: np.ndarray
    gamma: np.ndarray
    flags: np.ndarray
    no_report: np.ndarray
    objective_trace: tuple[float, ...]
    iterations: int
    converged: bool

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def detect_outliers(
    problem: OutlierProblem,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    shrinkage: str = "half",
) -> OutlierResult:
    """Alternating minimization of ||p - v[subject] - gamma||^2 + lam*|gamma|_1.

    gamma starts at zero and v at the per-subject medians; each sweep
    soft-thresholds the residuals into gamma, then refits v as the
    per-subject mean of p - gamma.  Rows with nonzero gamma are flagged
    as outliers.  A subject with no rows keeps v = 0 and is marked in
    no_report.  The recorded objective never increases across sweeps.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    subjects = problem.subjects
    p = problem.p
    lam = problem.lam
    rows_of = [np.flatnonzero(subjects == j) for j in range(problem.n)]
    no_report = np.array([rows.size == 0 for rows in rows_of])
    v = np.zeros(problem.n)
    for j, rows in enumerate(rows_of):
        if rows.size:
            v[j] = np.median(p[rows])
    gamma = np.zeros_like(p)

    def objective(v_cur, gamma_cur) -> float:
        residual = p - v_cur[subjects] - gamma_cur if p.size else p
        return float(residual @ residual + lam * np.abs(gamma_cur).sum())

    trace = [objective(v, gamma)]
    converged = False
    iterations = 0
    for _ in range(max_iters):
        iterations += 1
        new_gamma = (
            soft_threshold(p - v[subjects], lam, convention=shrinkage)
            if p.size
            else gamma
        )
        new_gamma = np.atleast_1d(np.asarray(new_gamma, dtype=np.float64))
        new_v = v.copy()
        for j, rows in enumerate(rows_of):
            if rows.size:
                new_v[j] = np.mean(p[rows] - new_gamma[rows])
        trace.append(objective(new_v, new_gamma))
        delta = max(
            np.max(np.abs(new_v - v)) if v.size else 0.0,
            np.max(np.abs(new_gamma - gamma)) if gamma.size else 0.0,
        )
        v, gamma = new_v, new_gamma
        if delta < tol:
            converged = True
            break
    return OutlierResult(
        v=v,
        gamma=gamma,
        flags=gamma != 0.0,
        no_report=no_report,
        objective_trace=tuple(trace),
        iterations=iterations,
        converged=converged,
    )


def consistency_threshold(problem: OutlierProblem) -> float:
    """Default replacement threshold: twice the median absolute report."""
    if problem.p.size == 0:
        return float("inf")
    return 2.0 * float(np.median(np.abs(problem.p)))


def refit_consensus(
    problem: OutlierProblem,
    flags: np.ndarray,
    fallback: np.ndarray,
) -> np.ndarray:
    """Per-subject means over unflagged rows only.

    The soft threshold leaves part of each manipulation inside the
    quadratic term, biasing the jointly fitted v toward the outliers;
    refitting on the rows it cleared removes that bias.  Subjects
    whose every report is flagged keep the fallback estimate.
    """
    flags = np.asarray(flags, dtype=bool)
    if flags.shape != problem.p.shape:
        raise ValueError("flags must mark each report row")
    sums = np.zeros(problem.n)
    counts = np.zeros(problem.n)
    for row, subject in enumerate(problem.subjects):
        if not flags[row]:
            sums[subject] += problem.p[row]
            counts[subject] += 1
    v = np.asarray(fallback, dtype=np.float64).copy()
    seen = counts > 0
    v[seen] = sums[seen] / counts[seen]
    return v


def correct_lcvs(
    lcvs: list[Lcv],
    v: np.ndarray,
    threshold: float,
) -> tuple[list[Lcv], tuple[int, ...]]:
    """Replace reports that stray too far from the consensus.

    For each report, the consensus stand-in carries v on the report's
    own support and zero elsewhere.  Reports whose euclidean distance
    from their stand-in exceeds threshold are replaced by it.  An
    infinite threshold disables replacement.
    """
    if threshold < 0:
        raise ValueError("threshold must be nonnegative")
    corrected: list[Lcv] = []
    replaced: list[int] = []
    for lcv in lcvs:
        support = lcv.support()
        reported = np.array([lcv.entries[j] for j in support])
        stand_in = np.array([v[j] for j in support])
        if np.linalg.norm(reported - stand_in) > threshold:
            corrected.append(Lcv(lcv.owner, lcv.round_index,
                                 {j: float(v[j]) for j in support}))
            replaced.append(lcv.owner)
        else:
            corrected.append(lcv)
    return corrected, tuple(replaced)
