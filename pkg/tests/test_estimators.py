import math

import numpy as np
import pytest
from sklearn.base import clone

from rpos.estimators import DoobTransformer, RClassifier, SpectralRadiusEstimator, check_matrix
from rpos.models import srw


def test_dense_input():
    est = SpectralRadiusEstimator(tol=1e-12).fit(np.array([[0.5, 1.0], [1.0, 1.0]]))
    assert est.rho_ == pytest.approx((1.5 + math.sqrt(4.25)) / 2, abs=1e-10)
    assert est.bracket_[0] <= est.rho_ <= est.bracket_[1]


def test_triples_and_generators():
    A = check_matrix([("a", "b", 2.0), ("b", "a", 0.5)])
    assert A.n == 2
    assert check_matrix(srw(0.4)).root == "0"


def test_rejects_non_square():
    with pytest.raises(ValueError):
        check_matrix(np.ones((2, 3)))


def test_classifier_predict():
    clf = RClassifier().fit()
    out = clf.predict([np.eye(2) + np.fliplr(np.eye(2)), srw(0.5)])
    assert list(out) == ["strongly-R-positive", "R-null-recurrent"]


def test_transformer_and_clone():
    t = DoobTransformer()
    P = t.fit_transform(np.array([[0.0, 2.0], [2.0, 0.0]]))
    assert P.entries == {("0", "1"): 1.0, ("1", "0"): 1.0}
    assert t.c_ == pytest.approx(2.0)
    assert clone(t).get_params() == {"tol": 1e-10}
