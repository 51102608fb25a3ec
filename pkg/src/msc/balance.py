"""Training-set label balancing by uneven replication of notes.

Replication counts x >= 0 minimise ||A x - r||^2 where A is the class by
document 0/1 contingency matrix and r = c * 1. The multiplier is
c = k * max_rep with max_rep the count of the most frequent label, and k is
swept to find the rounded replication whose label distribution sits closest
to a uniform reference.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from msc import DataError, NumericalError

log = logging.getLogger(__name__)


class ConvergenceError(NumericalError):
    def __init__(self, message: str, best: np.ndarray):
        super().__init__(message)
        self.best = best


def contingency(documents: Sequence) -> np.ndarray:
    """N x M matrix whose column j is document j's label vector."""
    if not documents:
        raise DataError("no documents")
    A = np.array([np.asarray(d.labels) for d in documents], dtype=np.float64).T
    if not np.any(A):
        raise DataError("every document has an empty label vector")
    return A


def label_frequency(A: np.ndarray, counts: np.ndarray | None = None) -> np.ndarray:
    """l = row sums / total, optionally with documents weighted by ``counts``."""
    occ = A.sum(axis=1) if counts is None else A @ np.asarray(counts, dtype=np.float64)
    return occ / occ.sum()


@dataclass
class NnlsResult:
    x: np.ndarray
    objective: float
    iterations: int
    history: list[float] = field(default_factory=list)


def nnls_objective(A: np.ndarray, x: np.ndarray, r: np.ndarray) -> float:
    res = A @ x - r
    return float(res @ res)


def solve_nnls(A: np.ndarray, r: np.ndarray, max_iter: int = 100_000, tol: float = 1e-8,
               x0: np.ndarray | None = None, record: bool = False) -> NnlsResult:
    """min ||A x - r||^2 subject to x >= 0.

    Projected gradient with a Barzilai-Borwein step, safeguarded by an
    Armijo backtrack on the projection arc so the objective never rises.
    Stops once the relative objective change drops below ``tol`` and the
    projected gradient satisfies the KKT conditions to 1e-7 of ||A^T A||_inf,
    or raises ConvergenceError carrying the best iterate.
    """
    A = np.asarray(A, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise DataError("target vector must be non-negative")
    M = A.shape[1]
    AtA = A.T @ A
    Atr = A.T @ r
    scale = float(np.abs(AtA).sum(axis=1).max()) or 1.0
    kkt_tol = 1e-7 * scale
    x = np.zeros(M) if x0 is None else np.maximum(np.asarray(x0, dtype=np.float64), 0.0)
    g = 2.0 * (AtA @ x - Atr)
    f = nnls_objective(A, x, r)
    alpha = 1.0 / (2.0 * scale)
    history = [f] if record else []
    small = 0
    for it in range(1, max_iter + 1):
        while True:
            x_new = np.maximum(x - alpha * g, 0.0)
            d = x_new - x
            f_new = nnls_objective(A, x_new, r)
            if f_new <= f + 1e-4 * float(g @ d) or alpha < 1e-300:
                break
            alpha *= 0.5
        g_new = 2.0 * (AtA @ x_new - Atr)
        s, yv = d, g_new - g
        sy = float(s @ yv)
        alpha = float(s @ s) / sy if sy > 0 else 1.0 / (2.0 * scale)
        change = f - f_new
        x, g, f = x_new, g_new, f_new
        if record:
            history.append(f)
        small = small + 1 if change <= tol * max(1.0, f) else 0
        if small >= 3 and _kkt_residual(x, g) <= kkt_tol:
            return NnlsResult(x, f, it, history)
    if _kkt_residual(x, g) <= kkt_tol:
        return NnlsResult(x, f, max_iter, history)
    raise ConvergenceError(f"NNLS did not converge in {max_iter} iterations", x)


def _kkt_residual(x: np.ndarray, g: np.ndarray) -> float:
    active = x > 0
    res = np.abs(g[active]).max(initial=0.0)
    return float(max(res, -g[~active].min(initial=0.0)))


def round_counts(x: np.ndarray) -> np.ndarray:
    """Round half up, never below one copy."""
    return np.maximum(np.floor(np.asarray(x) + 0.5), 1).astype(np.int64)


@dataclass
class ReplicationPlan:
    x: np.ndarray
    counts: np.ndarray
    c: float
    k: int
    residual: float
    score: float
    freq_before: np.ndarray
    freq_after: np.ndarray
    candidates: list[dict] = field(default_factory=list)


def _present(A: np.ndarray) -> np.ndarray:
    return A.sum(axis=1) > 0


def uniformity_score(freq: np.ndarray, eps: float = 1e-12) -> tuple[float, dict]:
    """Distance of a label distribution's (mean, variance) to a uniform reference.

    The reference is uniform on [a, b] with a, b the largest and smallest
    label probabilities: mean (a + b) / 2, variance (a - b)^2 / 12.
    """
    p = np.sort(np.asarray(freq, dtype=np.float64))[::-1]
    a, b = p[0], p[-1]
    ref_mean, ref_var = (a + b) / 2.0, (a - b) ** 2 / 12.0
    mean, var = float(p.mean()), float(p.var())
    score = abs(mean - ref_mean) / ref_mean + abs(var - ref_var) / max(ref_var, eps)
    return score, {"mean": mean, "var": var, "ref_mean": ref_mean, "ref_var": ref_var}


def sweep_c(A: np.ndarray, k_range: Sequence[int] = range(1, 11), **solver) -> ReplicationPlan:
    """Solve and round for every c = k * max_rep and keep the most uniform result.

    Classes absent from the corpus are left out of the distribution
    statistics. Ties go to the smaller k.
    """
    ks = list(k_range)
    if not ks:
        raise DataError("k_range is empty")
    A = np.asarray(A, dtype=np.float64)
    present = _present(A)
    if not present.any():
        raise DataError("contingency matrix has no labels")
    max_rep = float(A.sum(axis=1).max())
    before = label_frequency(A[present])
    # x scales linearly in c, so one solve at c = max_rep serves every k
    base = solve_nnls(A, np.full(A.shape[0], max_rep), **solver)
    best: ReplicationPlan | None = None
    table = []
    for k in ks:
        c = k * max_rep
        x = base.x * k
        counts = round_counts(x)
        after = label_frequency(A[present], counts)
        score, stats = uniformity_score(after)
        r = np.full(A.shape[0], c)
        row = {"k": k, "c": c, "score": score, "residual": nnls_objective(A, x, r),
               "replicated_docs": int(counts.sum()), "std_after": float(after.std()), **stats}
        table.append(row)
        if best is None or score < best.score - 1e-12:
            best = ReplicationPlan(x, counts, c, k, row["residual"], score, before, after)
    best.candidates = table
    return best


def replicate(documents: Sequence, plan: ReplicationPlan | np.ndarray, seed: int = 0) -> list:
    """Each document repeated by its count (at least once), shuffled with ``seed``."""
    counts = plan.counts if isinstance(plan, ReplicationPlan) else round_counts(plan)
    if len(counts) != len(documents):
        raise DataError("replication plan does not match the document count")
    order = np.repeat(np.arange(len(documents)), np.maximum(counts, 1))
    order = np.random.default_rng(seed).permutation(order)
    return [documents[i] for i in order]


def write_replication_manifest(documents: Sequence, counts: np.ndarray, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("note_id", "count"))
        w.writerows((d.note_id, int(c)) for d, c in zip(documents, counts))


def read_replication_manifest(path: str | Path) -> dict[str, int]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if set(reader.fieldnames or ()) < {"note_id", "count"}:
            raise DataError(f"{path}: expected columns note_id, count")
        out = {}
        for row in reader:
            try:
                n = int(row["count"])
            except ValueError:
                raise DataError(f"{path}:{reader.line_num}: bad count {row['count']!r}") from None
            if n < 1:
                raise DataError(f"{path}:{reader.line_num}: count must be at least 1")
            out[row["note_id"]] = n
    return out


def write_frequency_report(plan: ReplicationPlan, A: np.ndarray, path: str | Path) -> None:
    """Per-class occurrence counts and frequencies before and after replication."""
    before = A.sum(axis=1)
    after = A @ plan.counts
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("category", "count_before", "freq_before", "count_after", "freq_after"))
        for i in range(A.shape[0]):
            w.writerow((i, int(before[i]), f"{before[i] / before.sum():.6f}",
                        int(after[i]), f"{after[i] / after.sum():.6f}"))
