"""scikit-learn style wrappers around the solvers.

The estimators follow the usual ``fit``/``predict``/``get_params``
conventions.  Since a mixture model has one prediction per component,
``predict`` returns an ``(n, K)`` array and ``score`` is ``1 - f_real``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import baselines, mix_irls
from .core import Dataset, SolverConfig, draw_init
from .metrics import f_real


class _MixtureRegressor(BaseEstimator):
    """Shared plumbing; subclasses implement ``_solve(data, init)``."""

    def _init(self, d):
        rs = check_random_state(self.random_state)
        return draw_init(self.n_components, d, rs.randint(np.iinfo(np.int32).max))

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        data = Dataset(X, y)
        report = self._solve(data, self._init(X.shape[1]))
        self.report_ = report
        self.coef_ = np.array(report.model.betas)
        self.n_components_ = report.K_found
        self.labels_ = np.array(report.labels)
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = report.iterations
        return self

    def predict(self, X):
        """Per-component responses ``X @ coef_.T``, shape ``(n, K)``."""
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_.T

    def predict_labels(self, X, y):
        """1-based index of the best-fitting component for each ``(x_i, y_i)``."""
        check_is_fitted(self, "coef_")
        X, y = check_X_y(X, y, y_numeric=True)
        return np.argmin(np.abs(self.predict(X) - y[:, None]), axis=1) + 1

    def score(self, X, y):
        """``1 - f_real``: one minus the relative min-over-components MSE."""
        check_is_fitted(self, "coef_")
        X, y = check_X_y(X, y, y_numeric=True)
        return 1.0 - f_real(self.coef_, X, y)


class MixIRLSRegressor(_MixtureRegressor):
    """Mix-IRLS.

    Parameters
    ----------
    n_components : int
        Number of components, or an upper bound when ``unknown_k=True``.
    nu : float
        Robustness level; the weight constant is ``sqrt(0.6745 / nu)``.
    w_th : float
        Initial weight threshold for passing samples to the next round.
    rho : float
        Oversampling ratio; each component is refitted on ``ceil(rho d)`` samples.
    max_iter : int
        Iteration cap of each IRLS round and of the refinement phase.
    trim_fraction : float
        Fraction of largest-residual samples ignored during refinement.
    unknown_k : bool
        Stop adding components once too few samples remain.
    tol : float or None
        Relative-change stopping tolerance; ``None`` means ``2 eps``.
    ridge : bool
        Regularize the least-squares solves.
    random_state : int, RandomState or None
        Seeds the random initialization.
    """

    def __init__(self, n_components=2, nu=0.5, w_th=0.01, rho=1.0, max_iter=1000,
                 trim_fraction=0.0, unknown_k=False, tol=None, ridge=False, random_state=None):
        self.n_components = n_components
        self.nu = nu
        self.w_th = w_th
        self.rho = rho
        self.max_iter = max_iter
        self.trim_fraction = trim_fraction
        self.unknown_k = unknown_k
        self.tol = tol
        self.ridge = ridge
        self.random_state = random_state

    def _solve(self, data, init):
        cfg = SolverConfig(K=self.n_components, nu=self.nu, w_th=self.w_th, rho=self.rho,
                           max_iters=self.max_iter, trim_fraction=self.trim_fraction,
                           unknown_K=self.unknown_k, tol_delta=self.tol, ridge=self.ridge)
        return mix_irls.fit(data, cfg, init=init)


class _BaselineRegressor(_MixtureRegressor):
    _solver = None

    def __init__(self, n_components=2, max_iter=None, tol=None, trim_fraction=0.0, random_state=None):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.trim_fraction = trim_fraction
        self.random_state = random_state

    def _config(self, **extra):
        return baselines.BaselineConfig(K=self.n_components, max_iters=self.max_iter,
                                        tol_delta=self.tol, trim_fraction=self.trim_fraction, **extra)

    def _solve(self, data, init):
        return getattr(baselines, self._solver)(data, self._config(), init)


class AltMinRegressor(_BaselineRegressor):
    """Alternating minimization: hard assignment, then per-component OLS."""

    _solver = "altmin"


class EMRegressor(_BaselineRegressor):
    """Expectation-maximization for a Gaussian-noise mixture of regressions."""

    _solver = "em"


class GDRegressor(_BaselineRegressor):
    """Fixed-step subgradient descent on the min-residual objective."""

    _solver = "gd"

    def __init__(self, n_components=2, step_size=0.1, max_iter=None, tol=None,
                 trim_fraction=0.0, random_state=None):
        super().__init__(n_components=n_components, max_iter=max_iter, tol=tol,
                         trim_fraction=trim_fraction, random_state=random_state)
        self.step_size = step_size

    def _solve(self, data, init):
        return baselines.gd(data, self._config(step_size=self.step_size), init)
