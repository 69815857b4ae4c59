"""AUROC, equalized odds across two groups, AUEOC and their harmonic mean.

A score is a positive prediction at threshold tau iff ``score >= tau``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    pass


class DegenerateGroupWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ScoredSet:
    scores: np.ndarray
    labels: np.ndarray
    groups: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        y = np.asarray(self.labels).reshape(-1).astype(int)
        g = np.asarray(self.groups).reshape(-1)
        if not (s.size == y.size == g.size):
            raise ValueError("scores, labels and groups must have equal length")
        if s.size and (s.min() < 0.0 or s.max() > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "groups", g)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; tied positive/negative pairs count one half."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUROC needs both classes present")
    ranks = rankdata(s)  # average ranks, so twice each rank is an integer
    u2 = 2.0 * ranks[y].sum() - n_pos * (n_pos + 1)
    return float(u2 / 2.0) / (n_pos * n_neg)


def _two_groups(groups: np.ndarray):
    ids = np.unique(groups)
    if ids.size != 2:
        raise UndefinedMetricError(f"equalized odds needs exactly two groups, got {ids.size}")
    return ids


def _group_counts(ss: ScoredSet, gid):
    m = ss.groups == gid
    pos = np.sort(ss.scores[m & (ss.labels == 1)])
    neg = np.sort(ss.scores[m & (ss.labels == 0)])
    return pos, neg


def _rate_at(sorted_scores: np.ndarray, taus: np.ndarray) -> np.ndarray:
    # fraction of scores >= tau
    n = sorted_scores.size
    return (n - np.searchsorted(sorted_scores, taus, side="left")) / n


def _eo_values(ss: ScoredSet, taus: np.ndarray, warn: bool = True) -> np.ndarray:
    ids = _two_groups(ss.groups)
    (pos1, neg1), (pos2, neg2) = (_group_counts(ss, g) for g in ids)
    total = np.zeros_like(taus, dtype=np.float64)
    n_terms = 0
    if pos1.size and pos2.size:
        total += np.abs(_rate_at(pos1, taus) - _rate_at(pos2, taus))
        n_terms += 1
    if neg1.size and neg2.size:
        total += np.abs(_rate_at(neg1, taus) - _rate_at(neg2, taus))
        n_terms += 1
    if n_terms == 0:
        raise UndefinedMetricError("no group has both classes; equalized odds undefined")
    if n_terms == 1 and warn:
        warnings.warn("a group lacks one class; equalized odds uses the defined term only",
                      DegenerateGroupWarning, stacklevel=3)
    # (2 - dTP - dFP) / 2, or 1 - d when only one term is defined
    return 1.0 - total / n_terms


def eo_at_threshold(ss: ScoredSet, tau: float) -> float:
    return float(_eo_values(ss, np.array([float(tau)]))[0])


def eo_curve(ss: ScoredSet) -> tuple[np.ndarray, np.ndarray]:
    """Breakpoints of the EO step function and its value on each segment.

    Returns ``(taus, eo)`` where ``taus = [0, u_1, ..., u_m, 1]`` over the unique
    scores in (0, 1) and ``eo[k]`` is EO on the interval (taus[k], taus[k+1]].
    """
    inner = np.unique(ss.scores)
    inner = inner[(inner > 0.0) & (inner < 1.0)]
    taus = np.concatenate([[0.0], inner, [1.0]])
    # on (t_k, t_{k+1}] the positive set is {score >= t_{k+1}}
    return taus, _eo_values(ss, taus[1:])


def aueoc(ss: ScoredSet) -> float:
    """Area under EO(tau) for tau in [0, 1] (exact integral of the step function)."""
    taus, eo = eo_curve(ss)
    return float(np.sum(np.diff(taus) * eo))


def harmonic_mean(a: float, b: float) -> float:
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def roc_points(scores, labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, fpr, tpr) for every unique score, descending, plus the (0,0) corner."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    if y.all() or not y.any():
        raise UndefinedMetricError("ROC needs both classes present")
    taus = np.unique(s)[::-1]
    pos, neg = np.sort(s[y]), np.sort(s[~y])
    tpr = _rate_at(pos, taus)
    fpr = _rate_at(neg, taus)
    return (np.concatenate([[np.inf], taus]), np.concatenate([[0.0], fpr]),
            np.concatenate([[0.0], tpr]))


def write_eo_curve_csv(ss: ScoredSet, path) -> None:
    taus, eo = eo_curve(ss)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau_lo", "tau_hi", "eo"])
        for lo, hi, v in zip(taus[:-1], taus[1:], eo):
            w.writerow([f"{lo:.12g}", f"{hi:.12g}", f"{v:.12g}"])


def write_roc_csv(scores, labels, path) -> None:
    taus, fpr, tpr = roc_points(scores, labels)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(taus, fpr, tpr):
            w.writerow([f"{t:.12g}", f"{f:.12g}", f"{p:.12g}"])
