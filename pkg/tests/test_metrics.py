import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from timediscount.metrics import auc, auc_trapezoid, rmse


def pair_auc(y, s):
    pos = [a for a, t in zip(s, y) if t == 1]
    neg = [a for a, t in zip(s, y) if t == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


def test_examples():
    assert auc([0, 0, 1, 1], [0.1, 0.2, 0.8, 0.9]) == 1.0
    assert auc([0, 1, 0, 1], [0.5] * 4) == 0.5
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert rmse([[0.0, 0.0]], [[3.0, 4.0]]) == pytest.approx(np.sqrt(12.5))


def test_single_class_rejected():
    with pytest.raises(ValueError):
        auc([1, 1], [0.1, 0.2])
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])


labels_scores = st.integers(2, 40).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 1), min_size=n, max_size=n),
                        st.lists(st.integers(-6, 6), min_size=n, max_size=n))
).filter(lambda ys: 0 < sum(ys[0]) < len(ys[0]))


@given(labels_scores)
def test_auc_matches_pair_counting(ys):
    y, s = ys
    want = pair_auc(y, s)
    assert auc(y, s) == pytest.approx(want, abs=1e-12)
    assert auc_trapezoid(y, s) == pytest.approx(want, abs=1e-12)


@given(labels_scores)
def test_auc_invariant_under_monotone_transform(ys):
    y, s = ys
    s = np.asarray(s, dtype=float)
    assert auc(y, s) == auc(y, s**3 + 7.0)
    assert auc(y, s) == auc(y, np.exp(s / 4))
