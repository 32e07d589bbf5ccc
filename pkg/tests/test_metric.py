from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oobvimp.errors import UndefinedErrorValue
from oobvimp.metric import (
    ConcordancePairs,
    concordance_error,
    misclassification_error,
    standardized_mse_error,
)
from oracles import brute_concordance_error


def test_perfect_ranking():
    t = np.arange(1.0, 9.0)
    assert concordance_error(-t, t, np.ones(8)) == 0.0


def test_identical_scores():
    rng = np.random.default_rng(0)
    t = rng.exponential(size=20)
    e = (rng.random(20) < 0.6).astype(float)
    e[0] = 1.0
    assert concordance_error(np.zeros(20), t, e) == 50.0


def test_eight_rows_mixed_censoring():
    t = np.array([2.0, 5.0, 1.0, 3.0, 3.0, 7.0, 4.0, 6.0])
    e = np.array([1, 0, 1, 1, 0, 1, 0, 1], dtype=float)
    s = np.array([0.3, -1.0, 2.0, 0.3, 0.5, -0.2, 0.0, 0.3])
    assert concordance_error(s, t, e) == brute_concordance_error(s, t, e)


def test_no_pairs_is_undefined():
    with pytest.raises(UndefinedErrorValue):
        concordance_error(np.arange(4.0), np.arange(1.0, 5.0), np.zeros(4))


def test_pairs_reused_across_scores():
    rng = np.random.default_rng(3)
    t = rng.integers(1, 6, 25).astype(float)
    e = (rng.random(25) < 0.5).astype(float)
    e[0] = 1
    pairs = ConcordancePairs(t, e)
    for _ in range(5):
        s = rng.integers(0, 4, 25).astype(float)
        assert pairs.error(s) == brute_concordance_error(s, t, e)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 30).flatmap(lambda n: st.tuples(
    st.lists(st.integers(1, 8), min_size=n, max_size=n),
    st.lists(st.booleans(), min_size=n, max_size=n),
    st.lists(st.integers(-3, 3), min_size=n, max_size=n),
)))
def test_matches_pair_enumeration(data):
    t, e, s = (np.array(v, dtype=float) for v in data)
    expected = brute_concordance_error(s, t, e)
    if expected is None:
        with pytest.raises(UndefinedErrorValue):
            concordance_error(s, t, e)
    else:
        assert concordance_error(s, t, e) == expected


def test_standardized_mse():
    y = np.array([1.0, 2.0, 3.0])
    assert standardized_mse_error(y, y) == 0.0
    assert standardized_mse_error(np.full(3, y.mean()), y) == pytest.approx(100.0, abs=1e-12)
    assert standardized_mse_error(np.ones(3), y) == pytest.approx(250.0, abs=1e-12)


def test_misclassification():
    labels = np.array([0, 1, 1, 0, 1, 0, 0, 1, 1, 0], dtype=float)
    assert misclassification_error(labels, labels) == 0.0
    assert misclassification_error(1 - labels, labels) == 100.0
    probs = labels.copy()
    probs[[0, 3, 7]] = 1 - probs[[0, 3, 7]]
    assert misclassification_error(probs, labels) == pytest.approx(30.0)


def test_misclassification_threshold_is_strict():
    assert misclassification_error(np.array([0.5, 0.51]), np.array([0.0, 1.0])) == 0.0
