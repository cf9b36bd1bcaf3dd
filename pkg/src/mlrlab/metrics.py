"""Error measures, failure thresholds and the shared stopping rule."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import EPS, MLRModel
from .exceptions import Indeterminate, ZeroVariance

BRUTE_FORCE_MAX_K = 8


@dataclass(frozen=True)
class MetricReport:
    f_latent: float
    best_permutation: tuple
    failed: bool
    threshold: float
    f_real: float = float("nan")


def _betas(m):
    return m.betas if isinstance(m, MLRModel) else np.atleast_2d(np.asarray(m, dtype=float))


def _distances(est, truth):
    # D[j, k] = ||est_j - truth_k||
    return np.linalg.norm(est[:, None, :] - truth[None, :, :], axis=2)


def _brute_force(D, K_true):
    """Exhaustive search over injections [K*] -> [K]; returns (sum, map)."""
    K = D.shape[0]
    cols = np.arange(K_true)
    best, best_map = np.inf, None
    for perm in itertools.permutations(range(K), K_true):
        total = D[list(perm), cols].sum()
        if total < best:
            best, best_map = total, perm
    return best, tuple(best_map)


def _assignment(D, K_true):
    rows, cols = linear_sum_assignment(D)
    mapping = [0] * K_true
    for r, c in zip(rows, cols):
        mapping[c] = r
    return D[rows, cols].sum(), tuple(mapping)


def f_latent(est, truth, method="auto"):
    """Permutation-invariant mean coefficient error.

    Returns ``(value, permutation)`` where ``permutation[k]`` is the 0-based
    index of the estimated vector matched to true component ``k``.

    ``method`` selects ``"brute"`` (all ``K!`` permutations),
    ``"assignment"`` (Hungarian algorithm) or ``"auto"`` (brute force up to
    ``K = 8``).
    """
    E, T = _betas(est), _betas(truth)
    if E.shape != T.shape:
        raise ValueError(f"shape mismatch: estimate {E.shape} vs truth {T.shape}")
    return _matched_error(E, T, method)


def f_latent_overparam(est, truth, method="auto"):
    """Error of the best ``K*`` estimated vectors, ignoring the remaining ones."""
    E, T = _betas(est), _betas(truth)
    if E.shape[1] != T.shape[1]:
        raise ValueError(f"dimension mismatch: {E.shape[1]} vs {T.shape[1]}")
    if E.shape[0] < T.shape[0]:
        raise ValueError(f"estimate has {E.shape[0]} components, truth has {T.shape[0]}")
    return _matched_error(E, T, method)[0]


def _matched_error(E, T, method):
    D = _distances(E, T)
    K_true = T.shape[0]
    if method == "auto":
        method = "brute" if E.shape[0] <= BRUTE_FORCE_MAX_K else "assignment"
    if method == "brute":
        total, mapping = _brute_force(D, K_true)
    elif method == "assignment":
        total, mapping = _assignment(D, K_true)
    else:
        raise ValueError(f"unknown method {method!r}")
    return total / K_true, mapping


def f_real(model, X, y):
    """Mean squared min-over-components residual, relative to ``Var[y]``.

    ``Var[y]`` uses the population convention (divide by ``n``).
    """
    B = _betas(model)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    var = np.var(y)
    if var == 0:
        raise ZeroVariance("response has zero variance")
    r2 = (X @ B.T - y[:, None]) ** 2
    return float(np.mean(r2.min(axis=1)) / var)


def failure_threshold(sigma):
    """``2 sigma``, or ``1e-6`` in the noiseless case."""
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    return 2.0 * sigma if sigma > 0 else 1e-6


def delta_tilde(sigma):
    """Default stopping tolerance ``min(1, max(0.01 sigma, 2 eps))``."""
    return min(1.0, max(0.01 * sigma, 2 * EPS))


def converged(prev, curr, delta):
    """Relative squared change of the stacked estimates falls below ``delta**2``."""
    P, C = _betas(prev), _betas(curr)
    if P.shape != C.shape:
        raise ValueError(f"shape mismatch {P.shape} vs {C.shape}")
    denom = np.sum(C ** 2)
    if denom == 0:
        raise Indeterminate("current estimate is identically zero")
    return bool(np.sum((C - P) ** 2) / denom < delta ** 2)


def evaluate(est, truth, sigma, data=None):
    """Bundle ``f_latent`` (overparameterized when ``K > K*``) with the failure flag."""
    E, T = _betas(est), _betas(truth)
    if E.shape[0] < T.shape[0] or E.shape[1] != T.shape[1]:
        raise ValueError(f"cannot score a {E.shape} estimate against a {T.shape} truth")
    value, perm = _matched_error(E, T, "auto")
    th = failure_threshold(sigma)
    fr = f_real(E, data.X, data.y) if data is not None else float("nan")
    return MetricReport(f_latent=value, best_permutation=perm, failed=value > th,
                        threshold=th, f_real=fr)
