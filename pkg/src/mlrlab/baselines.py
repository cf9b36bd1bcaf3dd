"""Simultaneous-estimation baselines: AltMin, EM and GD, plus the label oracle.

All three start from a caller-supplied ``(K, d)`` initialization so that a
benchmark trial can hand the same starting point to every solver.  EM and
GD finish with a single AltMin step.  With ``trim_fraction = f > 0`` each
update only uses the ``ceil((1-f) n)`` samples of smallest current
residual.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import EPS, Dataset, FitReport, MLRModel, ols, oracle_ols, wls
from .exceptions import DegenerateComponent, Diverged
from .metrics import converged, delta_tilde
from .mix_irls import trim_mask

# grid of GD step sizes searched by the tuned variant
GD_STEP_GRID = (1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 5e-1)
VARIANCE_FLOOR = 1e6 * EPS


@dataclass(frozen=True)
class BaselineConfig:
    """``max_iters=None`` means 1e3 (AltMin, EM) or 1e5 (GD).

    ``tol_delta=None`` derives the tolerance from the dataset noise level;
    GD uses a hundredth of it.
    """

    K: int
    max_iters: Optional[int] = None
    tol_delta: Optional[float] = None
    step_size: float = 0.1
    trim_fraction: float = 0.0
    seed: Optional[int] = None

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if not 0 <= self.trim_fraction < 1:
            raise ValueError("trim_fraction must lie in [0, 1)")
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")

    def iters(self, default):
        return self.max_iters or default

    def tolerance(self, data, scale=1.0):
        if self.tol_delta is not None:
            return self.tol_delta * scale
        return delta_tilde(data.noise_sigma or 0.0) * scale


def _start(cfg, data, init):
    betas = np.array(init.betas if isinstance(init, MLRModel) else init, dtype=float)
    if betas.shape != (cfg.K, data.d):
        raise ValueError(f"init has shape {betas.shape}, expected {(cfg.K, data.d)}")
    return betas


def _report(betas, data, iters, start, **diag):
    model = MLRModel(betas)
    return FitReport(model=model, labels=model.assign(data.X, data.y), K_found=model.K,
                     iterations=iters, elapsed_seconds=time.perf_counter() - start,
                     diagnostics=diag)


def altmin_step(X, y, betas, trim_fraction=0.0):
    """Hard-assign each sample to its best component, then refit each by OLS."""
    R = np.abs(X @ betas.T - y[:, None])
    labels = np.argmin(R, axis=1)
    keep = trim_mask(R, trim_fraction)
    new = np.empty_like(betas)
    for k in range(betas.shape[0]):
        rows = keep & (labels == k)
        new[k] = ols(X[rows], y[rows], component=k + 1)
    return new


def min_residual_objective(X, y, betas):
    """``sum_i min_k (x_i^T beta_k - y_i)^2``."""
    return float(np.sum(np.min((X @ betas.T - y[:, None]) ** 2, axis=1)))


def altmin(data: Dataset, cfg: BaselineConfig, init) -> FitReport:
    start = time.perf_counter()
    betas = _start(cfg, data, init)
    tol = cfg.tolerance(data)
    objective = [min_residual_objective(data.X, data.y, betas)]
    t = 0
    for t in range(1, cfg.iters(1000) + 1):
        new = altmin_step(data.X, data.y, betas, cfg.trim_fraction)
        done = converged(betas, new, tol)
        betas = new
        objective.append(min_residual_objective(data.X, data.y, betas))
        if done:
            break
    return _report(betas, data, t, start, objective=objective)


def _log_joint(X, y, betas, sig2, pi):
    r2 = (X @ betas.T - y[:, None]) ** 2
    return np.log(pi) - 0.5 * np.log(2 * np.pi * sig2) - 0.5 * r2 / sig2


def em(data: Dataset, cfg: BaselineConfig, init) -> FitReport:
    """EM for a mixture of linear regressions with per-component noise levels.

    Starts from unit noise levels and uniform proportions.  Responsibilities
    are normalized in log space.

    Raises
    ------
    DegenerateComponent
        If a mixture proportion falls below ``1/n``.
    """
    start = time.perf_counter()
    X, y = data.X, data.y
    n = data.n
    K = cfg.K
    betas = _start(cfg, data, init)
    sig2 = np.ones(K)
    pi = np.full(K, 1.0 / K)
    tol = cfg.tolerance(data)
    loglik = []
    t = 0
    for t in range(1, cfg.iters(1000) + 1):
        log_joint = _log_joint(X, y, betas, sig2, pi)
        norm = logsumexp(log_joint, axis=1, keepdims=True)
        loglik.append(float(norm.sum()))
        resp = np.exp(log_joint - norm)
        if cfg.trim_fraction > 0:
            R = np.abs(X @ betas.T - y[:, None])
            resp = resp * trim_mask(R, cfg.trim_fraction)[:, None]
        mass = resp.sum(axis=0)
        new = np.empty_like(betas)
        for k in range(K):
            new[k] = wls(X, resp[:, k], y, component=k + 1)
        r2 = (X @ new.T - y[:, None]) ** 2
        sig2 = np.maximum((resp * r2).sum(axis=0) / np.maximum(mass, np.finfo(float).tiny),
                          VARIANCE_FLOOR)
        pi = mass / mass.sum()
        if np.any(pi < 1.0 / n):
            k = int(np.argmin(pi))
            raise DegenerateComponent(f"component {k + 1} collapsed (pi={pi[k]:.3g})", component=k + 1)
        done = converged(betas, new, tol)
        betas = new
        if done:
            break
    betas = altmin_step(X, y, betas, cfg.trim_fraction)
    return _report(betas, data, t + 1, start, loglik=loglik, sigma2=sig2, proportions=pi)


def gd_step(X, y, betas, step, keep=None):
    """One subgradient step on ``(1/n) sum_i min_k (x_i^T beta_k - y_i)^2``.

    Each sample contributes only to the gradient of its current best
    component (lowest index on ties).  ``keep`` restricts the sum to a
    subset of samples.
    """
    res = X @ betas.T - y[:, None]
    labels = np.argmin(np.abs(res), axis=1)
    owner = np.zeros_like(res)
    owner[np.arange(len(y)), labels] = 1.0
    if keep is not None:
        owner *= keep[:, None]
    m = owner.sum()
    grad = (2.0 / m) * (X.T @ (owner * res))
    return betas - step * grad.T


def gd(data: Dataset, cfg: BaselineConfig, init) -> FitReport:
    """Fixed-step subgradient descent on the min-residual objective.

    Raises
    ------
    Diverged
        If the objective grows beyond 1e6 times its initial value.
    """
    start = time.perf_counter()
    X, y = data.X, data.y
    betas = _start(cfg, data, init)
    tol = cfg.tolerance(data, scale=0.01)
    limit = 1e6 * max(min_residual_objective(X, y, betas), EPS)
    t = 0
    for t in range(1, cfg.iters(100_000) + 1):
        keep = None
        if cfg.trim_fraction > 0:
            keep = trim_mask(np.abs(X @ betas.T - y[:, None]), cfg.trim_fraction)
        new = gd_step(X, y, betas, cfg.step_size, keep)
        if t % 50 == 0 or not np.all(np.isfinite(new)):
            if not np.all(np.isfinite(new)) or min_residual_objective(X, y, new) > limit:
                raise Diverged(f"objective blew up by iteration {t}; try a step size below {cfg.step_size:g}")
        done = converged(betas, new, tol)
        betas = new
        if done:
            break
    betas = altmin_step(X, y, betas, cfg.trim_fraction)
    return _report(betas, data, t + 1, start)


def oracle(data: Dataset) -> MLRModel:
    """Per-component OLS using the true labels."""
    return oracle_ols(data)


def single_ols(data: Dataset) -> np.ndarray:
    return ols(data.X, data.y)
