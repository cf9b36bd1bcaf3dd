"""Mix-IRLS: sequential robust recovery followed by simultaneous refinement.

Phase I finds the components one at a time.  Each round runs IRLS with
Cauchy-type weights ``1 / (1 + eta r^2 / median(r)^2)`` on the active
samples, passes the poorly fitted samples (weight ``<= w_th``) on to the
next round and refits the component by OLS on the ``ceil(rho d)``
best-fitting ones.  When a round leaves too few samples for the next, the
whole phase restarts with ``w_th`` raised by 0.1.

Phase II refines all components jointly with inverse-residual soft
weights that are partly binarized at every iteration.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import EPS, Dataset, FitReport, MLRModel, SolverConfig, ceil_count, draw_init, ols, wls
from .exceptions import DegenerateSystem, EmptySubset, InsufficientData, ThresholdExhausted
from .metrics import converged

W_TH_CAP = 0.95
DOMINANT_WEIGHT = 2.0 / 3.0


@dataclass
class RoundRecord:
    """What one phase-I round saw; ``active`` and ``good`` hold sample indices."""

    round: int
    active: np.ndarray
    weights: np.ndarray
    residuals: np.ndarray
    median_residual: float
    good: np.ndarray
    passed: np.ndarray
    iterations: int


@dataclass
class PhaseIResult:
    models: np.ndarray
    good_sets: list
    final_w_th: float
    restarts: int
    iterations: int
    rounds: list = field(default_factory=list)

    @property
    def K_found(self):
        return self.models.shape[0]


def _init_for(cfg, d, seed, init):
    if init is not None:
        init = np.atleast_2d(np.asarray(init, dtype=float))
        if init.shape != (cfg.K, d):
            raise ValueError(f"init has shape {init.shape}, expected {(cfg.K, d)}")
        return init
    return draw_init(cfg.K, d, seed)


def _median_floor(y):
    return 1e3 * EPS * np.sqrt(np.mean(np.asarray(y) ** 2))


def irls_round(X, y, beta, eta, n_iter, tol, floor, ridge=False, round=None):
    """Run up to ``n_iter`` IRLS steps from ``beta``.

    Returns the estimate, the ``(weights, residuals, median)`` of the step
    that produced it and the number of completed steps.

    With fewer than about ``2 d`` active samples the median residual can
    reach zero: the iterate interpolates a subset and every other weight
    underflows.  A rank-deficient reweighted system after the first step
    therefore ends the loop with the last well-posed estimate.
    """
    state = None
    for t in range(1, n_iter + 1):
        r = np.abs(X @ beta - y)
        rbar = max(float(np.median(r)), floor)
        w = 1.0 / (1.0 + eta * r ** 2 / rbar ** 2)
        try:
            new = wls(X, w, y, ridge=ridge, round=round)
        except DegenerateSystem:
            if state is None:
                raise
            break
        done = converged(beta, new, tol)
        beta = new
        state = (w, r, rbar, t)
        if done:
            break
    return (beta, *state)


def phase1(data: Dataset, cfg: SolverConfig, seed=None, init=None) -> PhaseIResult:
    """Sequential recovery of the components.

    With ``cfg.unknown_K`` the restart rule is replaced by a stopping rule:
    rounds end once fewer than ``rho d`` samples remain for the next one,
    and only the completed rounds are returned.

    Raises
    ------
    ThresholdExhausted
        If threshold adaptation would exceed ``cfg.max_restarts`` or push
        ``w_th`` past 0.95.
    InsufficientData
        In unknown-K mode, if not even the first round has ``rho d`` samples.
    """
    X, y = data.X, data.y
    n, d = X.shape
    init = _init_for(cfg, d, seed, init)
    eta, rho = cfg.eta, cfg.rho
    need = rho * d
    n_good = ceil_count(need)
    tol = cfg.tolerance(data)
    floor = _median_floor(y)

    w_th = cfg.w_th
    restarts = 0
    total_iters = 0
    while True:
        active = np.arange(n)
        models, good_sets, rounds = [], [], []
        restart = False
        for k in range(1, cfg.K + 1):
            if cfg.unknown_K and active.size < need:
                if k == 1:
                    raise InsufficientData(f"{n} samples cannot support a first component (need {need:g})")
                break
            Xa, ya = X[active], y[active]
            beta, w, r, rbar, iters = irls_round(Xa, ya, init[k - 1], eta, cfg.t1, tol, floor,
                                                 ridge=cfg.ridge, round=k)
            total_iters += iters
            passed = active[w <= w_th]
            # stable sort: equal weights keep the lower sample index first
            order = np.argsort(-w, kind="stable")[:min(n_good, active.size)]
            good = active[np.sort(order)]
            rounds.append(RoundRecord(k, active, w, r, rbar, good, passed, iters))
            if not cfg.unknown_K and k < cfg.K and passed.size < need:
                restart = True
                break
            models.append(ols(X[good], y[good], ridge=cfg.ridge, round=k))
            good_sets.append(good)
            active = passed
            if cfg.unknown_K and active.size < need:
                break
        if not restart:
            return PhaseIResult(np.array(models), good_sets, w_th, restarts, total_iters, rounds)
        new_w_th = round(w_th + 0.1, 12)
        if restarts + 1 > cfg.max_restarts or new_w_th > W_TH_CAP:
            raise ThresholdExhausted(
                f"round {len(rounds)} left {passed.size} samples (need {need:g}) at w_th={w_th:g}",
                diagnostics={"restarts": restarts, "w_th": w_th,
                             "active_sizes": [rec.active.size for rec in rounds],
                             "passed": int(passed.size)})
        w_th = new_w_th
        restarts += 1


def soft_weights(R):
    """Inverse squared-residual weights normalized per sample, ``(n, K)``."""
    inv = 1.0 / (R ** 2 + EPS)
    return inv / inv.sum(axis=1, keepdims=True)


def binarize(W):
    """Snap dominant weights to one-hot rows and prune weights below ``1/K``.

    Samples with a weight ``>= 2/3`` keep only their top component (lowest
    index on ties).  Elsewhere weights under ``1/K`` are zeroed and the row
    is renormalized.  Returns the new weights and the dominant-set mask.
    """
    n, K = W.shape
    top = np.argmax(W, axis=1)
    dominant = (W >= DOMINANT_WEIGHT).any(axis=1)
    out = W.copy()
    is_top = np.zeros_like(W, dtype=bool)
    is_top[np.arange(n), top] = True
    # the top weight is >= 1/K up to rounding; never prune it
    out[(W < 1.0 / K) & ~is_top] = 0.0
    out /= out.sum(axis=1, keepdims=True)
    out[dominant] = is_top[dominant].astype(float)
    return out, dominant


def trim_mask(R, f):
    """Mask of the ``ceil((1-f) n)`` samples with smallest min-over-components residual."""
    n = R.shape[0]
    keep = np.zeros(n, dtype=bool)
    if f <= 0:
        keep[:] = True
        return keep
    m = ceil_count((1 - f) * n)
    keep[np.argsort(R.min(axis=1), kind="stable")[:m]] = True
    return keep


def phase2_step(X, y, betas, trim_fraction=0.0, ridge=False):
    """One refinement iteration; returns ``(new_betas, weights)``."""
    R = np.abs(X @ betas.T - y[:, None])
    W, _ = binarize(soft_weights(R))
    if trim_fraction > 0:
        W = W * trim_mask(R, trim_fraction)[:, None]
    new = np.empty_like(betas)
    for k in range(betas.shape[0]):
        new[k] = wls(X, W[:, k], y, ridge=ridge, component=k + 1)
    return new, W


def phase2(data: Dataset, init, cfg: SolverConfig, trim_fraction=None):
    """Joint refinement from ``init``; returns ``(MLRModel, iterations)``."""
    betas = np.array(init.betas if isinstance(init, MLRModel) else init, dtype=float)
    f = cfg.trim_fraction if trim_fraction is None else trim_fraction
    tol = cfg.tolerance(data)
    X, y = data.X, data.y
    t = 0
    for t in range(1, cfg.t2 + 1):
        new, _ = phase2_step(X, y, betas, f, cfg.ridge)
        done = converged(betas, new, tol)
        betas = new
        if done:
            break
    return MLRModel(betas), t


def fit(data: Dataset, cfg: SolverConfig, seed=None, init=None) -> FitReport:
    """Run both phases and label every sample by its best-fitting component.

    ``init`` overrides the seeded ``(K, d)`` starting vectors.  Trimming
    (``cfg.trim_fraction > 0``) applies to phase II only.
    """
    start = time.perf_counter()
    p1 = phase1(data, cfg, seed=seed, init=init)
    model, it2 = phase2(data, p1.models, cfg)
    return FitReport(
        model=model,
        labels=model.assign(data.X, data.y),
        K_found=model.K,
        restarts=p1.restarts,
        final_w_th=p1.final_w_th,
        iterations=p1.iterations + it2,
        elapsed_seconds=time.perf_counter() - start,
        diagnostics={"phase1": p1, "phase1_models": p1.models},
    )


def fit_unknown_K(data: Dataset, cfg: SolverConfig, seed=None, init=None) -> FitReport:
    """Fit with ``cfg.K`` read as an upper bound on the number of components."""
    if not cfg.unknown_K:
        raise ValueError("fit_unknown_K needs a config with unknown_K=True")
    return fit(data, cfg, seed=seed, init=init)


@dataclass
class ModifiedPhaseIResult:
    model: MLRModel
    S2: np.ndarray
    S1_good: np.ndarray


def phase1_modified(data: Dataset, cfg: SolverConfig, R: float, seed=None, init=None):
    """Two-component analysis variant with fixed residual scale ``R``.

    One IRLS step with weights ``1 / (1 + eta r^2 / R)``; the second
    component is fitted on the bounded-norm samples that the first fits
    poorly, and the first is then refitted on the bounded-norm samples that
    the second fits poorly.  There is no top-``rho d`` truncation and no
    automatic restart.

    Raises
    ------
    EmptySubset
        If either fit subset is empty.
    """
    if cfg.K != 2:
        raise ValueError("the analysis variant is defined for K = 2")
    if R <= 0:
        raise ValueError("R must be positive")
    X, y = data.X, data.y
    beta1 = _init_for(cfg, X.shape[1], seed, init)[0]
    eta = cfg.eta

    def weights(beta):
        return 1.0 / (1.0 + eta * (X @ beta - y) ** 2 / R)

    bounded = np.einsum("ij,ij->i", X, X) <= R
    beta1 = wls(X, weights(beta1), y, ridge=cfg.ridge, round=1)
    S2 = np.flatnonzero(bounded & (weights(beta1) <= cfg.w_th))
    if S2.size == 0:
        raise EmptySubset(f"no bounded sample has weight <= w_th={cfg.w_th:g}; raise w_th")
    beta2 = ols(X[S2], y[S2], ridge=cfg.ridge, component=2)
    S1 = np.flatnonzero(bounded & (weights(beta2) <= cfg.w_th))
    if S1.size == 0:
        raise EmptySubset(f"no bounded sample fits the second component poorly at w_th={cfg.w_th:g}")
    beta1 = ols(X[S1], y[S1], ridge=cfg.ridge, component=1)
    return ModifiedPhaseIResult(MLRModel(np.vstack([beta1, beta2])), S2, S1)
