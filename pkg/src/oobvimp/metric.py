"""Prediction-error functionals, all in percentage points.

Harrell's concordance uses these permissible pairs (i, j), with i the
member that fails first:

* ``time_i < time_j`` and ``event_i == 1``, or
* ``time_i == time_j`` and exactly one of the two has an event (i is it).

A pair scores 1 when ``score_i > score_j``, 1/2 on tied scores, else 0.
"""

from __future__ import annotations

import numpy as np

from .errors import UndefinedErrorValue


class ConcordancePairs:
    """Permissible pairs of one survival outcome, reusable across scores.

    The pair set depends only on the outcome, so scoring many score
    vectors (one per noised group) against the same OOB rows builds it
    once.
    """

    def __init__(self, time, event):
        t = np.asarray(time, dtype=np.float64)
        d = np.asarray(event, dtype=np.float64)
        if t.shape != d.shape or t.ndim != 1:
            raise ValueError("time and event must be vectors of equal length")
        ev = np.flatnonzero(d == 1.0)
        ti = t[ev][:, None]
        mask = (ti < t[None, :]) | ((ti == t[None, :]) & (d[None, :] == 0.0))
        self.left = ev
        self.mask = mask
        self.n_pairs = int(np.count_nonzero(mask))

    def error(self, scores) -> float:
        """``100 * (1 - C)`` for ``scores``; higher score = higher risk."""
        if self.n_pairs == 0:
            raise UndefinedErrorValue("no permissible pairs for the concordance index")
        s = np.asarray(scores, dtype=np.float64)
        si = s[self.left][:, None]
        gt = np.count_nonzero((si > s[None, :]) & self.mask)
        eq = np.count_nonzero((si == s[None, :]) & self.mask)
        # half-credit counts kept integral: 2C * pairs = 2 * gt + eq
        den = 2 * self.n_pairs
        return 100 * (den - 2 * gt - eq) / den


def concordance_error(scores, time, event) -> float:
    """Harrell concordance error ``100 * (1 - C)``.

    Raises:
        UndefinedErrorValue: no permissible pair exists (e.g. every row
            censored).
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != np.shape(time):
        raise ValueError("scores and outcome lengths differ")
    return ConcordancePairs(time, event).error(s)


def standardized_mse_error(pred, y) -> float:
    """``100 * mean((y - pred)**2) / Var(y)``, variance with denominator n."""
    p = np.asarray(pred, dtype=np.float64)
    yy = np.asarray(y, dtype=np.float64)
    if p.shape != yy.shape or yy.size < 2:
        raise ValueError("pred and y must be equal-length vectors with >= 2 entries")
    var = float(np.var(yy))
    if var <= 0.0:
        raise UndefinedErrorValue("standardized MSE is undefined for a constant response")
    return 100.0 * float(np.mean((yy - p) ** 2)) / var


def misclassification_error(probs, labels) -> float:
    """Percentage of rows where ``prob > 0.5`` disagrees with the 0/1 label."""
    p = np.asarray(probs, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.float64)
    if p.shape != lab.shape or p.size == 0:
        raise ValueError("probs and labels must be equal-length, non-empty vectors")
    wrong = np.count_nonzero((p > 0.5) != (lab == 1.0))
    return 100 * wrong / p.size
