"""scikit-learn style classifier around the sparse Newton solvers."""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .adaptive import AdaptiveConfig, default_s0, solve_adaptive
from .dataset import Dataset
from .linear import Penalties
from .newton import SolverConfig, solve_fixed_s

__all__ = ["NSSVMClassifier"]


class NSSVMClassifier(ClassifierMixin, BaseEstimator):
    """Linear soft-margin SVM with at most ``s`` support vectors.

    Parameters
    ----------
    C, c : float
        Loss weights on positive and negative margin residuals; ``c=None``
        means ``0.01 * C``.
    eta : float or None
        Step parameter of the active-set rule; None means ``1/m``.
    s0 : int or None
        Initial sparsity level. None derives it from ``beta``.
    beta : float
        Used when ``s0`` is None: ``s0 = ceil(beta * n * log2(m/n)^2)``.
    sigma : float
        Growth factor of the sparsity level when ``tune`` is true.
    tol : float or None
        Residual tolerance; None means ``max(sqrt(m), sqrt(n)) * 1e-6``.
    max_iter : int
    tune : bool
        Grow the sparsity level adaptively. When false, ``s0`` stays fixed.

    Attributes
    ----------
    coef_ : ndarray of shape (1, n_features)
    intercept_ : ndarray of shape (1,)
    dual_coef_ : ndarray of shape (1, n_SV)
        ``y_i * alpha_i`` on the support, with ``classes_[1]`` as +1.
    support_ : ndarray of int
    n_iter_ : int
    converged_ : bool
    """

    def __init__(
        self,
        C=0.25,
        c=None,
        eta=None,
        s0=None,
        beta=0.5,
        sigma=1.1,
        tol=None,
        max_iter=1000,
        tune=True,
    ):
        self.C = C
        self.c = c
        self.eta = eta
        self.s0 = s0
        self.beta = beta
        self.sigma = sigma
        self.tol = tol
        self.max_iter = max_iter
        self.tune = tune

    def _solver_config(self, m, n):
        c = 0.01 * self.C if self.c is None else self.c
        s = self.s0 if self.s0 is not None else default_s0(self.beta, m, n)
        base = SolverConfig(
            penalties=Penalties(self.C, c),
            s=int(min(s, m)),
            eta=self.eta,
            eps=self.tol,
            max_iter=self.max_iter,
        )
        if not self.tune:
            return base
        return AdaptiveConfig(base=base, sigma=self.sigma, max_it=self.max_iter)

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", dtype=np.float64)
        check_classification_targets(y)
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"need exactly 2 classes, got {self.classes_.size}")
        self.n_features_in_ = X.shape[1]
        signed = np.where(y == self.classes_[1], 1.0, -1.0)
        d = Dataset(X, signed)
        cfg = self._solver_config(d.m, d.n)
        if isinstance(cfg, AdaptiveConfig):
            fit = solve_adaptive(d, cfg)
        else:
            fit = solve_fixed_s(d, cfg)
        if not fit.converged:
            warnings.warn(
                f"solver stopped after {fit.iters} iterations with residual {fit.residual:.3g}",
                ConvergenceWarning,
            )
        self.fit_result_ = fit
        self.coef_ = fit.w.reshape(1, -1)
        self.intercept_ = np.array([fit.b])
        self.support_ = fit.support
        self.dual_coef_ = (signed[fit.support] * fit.alpha[fit.support]).reshape(1, -1)
        self.n_iter_ = fit.iters
        self.converged_ = fit.converged
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr", dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, model was fitted with {self.n_features_in_}"
            )
        scores = X @ self.coef_.ravel()
        if sp.issparse(scores):
            scores = scores.toarray()
        return np.asarray(scores).ravel() + self.intercept_[0]

    def predict(self, X):
        """``classes_[1]`` where the decision value is positive, else ``classes_[0]``."""
        return np.where(self.decision_function(X) > 0, self.classes_[1], self.classes_[0])
