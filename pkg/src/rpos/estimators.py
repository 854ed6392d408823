"""scikit-learn style wrappers around the functional API.

The estimators hold configuration in ``__init__`` and learned quantities in
trailing-underscore attributes, so they work with ``get_params``/``clone``.
Inputs may be dense array-likes (state labels ``"0" .. "n-1"``), triples
``(x, y, w)``, a :class:`SparseNonnegMatrix` or a :class:`StateGenerator`.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils import check_array
from sklearn.utils.validation import check_is_fitted

from .classify import classify
from .core import SparseNonnegMatrix, StateGenerator, build_matrix
from .htransform import doob_transform
from .spectral import rho_bisect

__all__ = ["check_matrix", "SpectralRadiusEstimator", "RClassifier", "DoobTransformer"]


def check_matrix(X):
    """Coerce ``X`` to a :class:`SparseNonnegMatrix` (generators pass through)."""
    if isinstance(X, (SparseNonnegMatrix, StateGenerator)):
        return X
    if isinstance(X, (list, tuple)) and X and all(isinstance(t, tuple) and len(t) == 3 for t in X):
        return build_matrix(X)
    arr = check_array(X, dtype=np.float64, ensure_all_finite=True)
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    rows, cols = np.nonzero(arr)
    return build_matrix([(str(i), str(j), float(arr[i, j])) for i, j in zip(rows, cols)])


class SpectralRadiusEstimator(BaseEstimator):
    """Certified bracket of ``ρ(A)`` by ψ-bisection.

    Attributes
    ----------
    rho_ : float
        Midpoint (geometric) estimate.
    bracket_ : tuple of float
        ``(lower, upper)``.
    estimate_ : SpectralEstimate
    """

    def __init__(self, tol=1e-10, z=None, window=256):
        self.tol = tol
        self.z = z
        self.window = window

    def fit(self, X, y=None):
        A = check_matrix(X)
        self.estimate_ = rho_bisect(A, self.z, self.tol, self.window)
        self.rho_ = self.estimate_.rho
        self.bracket_ = (self.estimate_.lower, self.estimate_.upper)
        return self


class RClassifier(BaseEstimator):
    """Four-way classification; ``predict`` takes a sequence of matrices."""

    def __init__(self, tol=1e-10, z=None, window=256):
        self.tol = tol
        self.z = z
        self.window = window

    def fit(self, X=None, y=None):
        # stateless: nothing is learned across inputs
        self.fitted_ = True
        return self

    def classify_one(self, A):
        return classify(check_matrix(A), self.z, self.tol, window=self.window)

    def predict(self, Xs):
        return np.array([self.classify_one(A).verdict for A in Xs], dtype=object)


class DoobTransformer(TransformerMixin, BaseEstimator):
    """Fit the Perron eigenpair of ``A``; ``transform`` returns the probability kernel."""

    def __init__(self, tol=1e-10):
        self.tol = tol

    def fit(self, X, y=None):
        self.kernel_ = doob_transform(check_matrix(X), tol=self.tol)
        self.c_ = self.kernel_.c
        self.h_ = self.kernel_.h
        return self

    def transform(self, X=None):
        check_is_fitted(self, "kernel_")
        return self.kernel_.kernel
