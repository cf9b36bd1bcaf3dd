"""Domain types, synthetic mixtures and the least-squares primitives.

Random draws go through :func:`numpy.random.default_rng` (PCG64 bit
generator, Ziggurat normals).  Ports to other languages reproduce the
distributions, not the bit streams.

Labels are 1-based everywhere in the public API: component ``k`` of a
model with ``K`` components carries label ``k`` in ``1..K``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import DegenerateSystem, InsufficientData

EPS = np.finfo(float).eps

# smallest/largest singular value of the weighted Gram matrix below which
# a system counts as rank deficient
GRAM_RCOND = 1e6 * EPS


def ceil_count(x: float) -> int:
    """``ceil(x)`` that ignores float noise such as ``0.07 * 100 = 7.000000000000001``."""
    return int(math.ceil(round(x, 9)))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MLRModel:
    """``K`` regression vectors of a common dimension ``d``, stored as a ``(K, d)`` array."""

    betas: np.ndarray

    def __post_init__(self):
        betas = np.atleast_2d(np.asarray(self.betas, dtype=float))
        if betas.ndim != 2 or betas.shape[0] < 1 or betas.shape[1] < 1:
            raise ValueError(f"betas must be a non-empty (K, d) array, got shape {betas.shape}")
        object.__setattr__(self, "betas", _frozen(betas))

    @property
    def K(self) -> int:
        return self.betas.shape[0]

    @property
    def d(self) -> int:
        return self.betas.shape[1]

    def residuals(self, X, y):
        """Absolute residuals ``|x_i^T beta_k - y_i|`` as an ``(n, K)`` array."""
        return np.abs(np.asarray(X) @ self.betas.T - np.asarray(y)[:, None])

    def assign(self, X, y):
        """1-based argmin-residual labels; ties go to the lowest component."""
        return np.argmin(self.residuals(X, y), axis=1) + 1

    def to_list(self):
        return self.betas.tolist()


@dataclass(frozen=True)
class MixtureSpec:
    K: int
    p: tuple
    d: int
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        p = tuple(float(v) for v in self.p)
        object.__setattr__(self, "p", p)
        if self.K < 1 or len(p) != self.K:
            raise ValueError(f"need {self.K} proportions, got {len(p)}")
        if any(v <= 0 for v in p):
            raise ValueError("mixture proportions must be positive")
        if abs(sum(p) - 1.0) > 1e-12:
            raise ValueError(f"mixture proportions sum to {sum(p)!r}, not 1")
        if self.d < 1:
            raise ValueError("d must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    @property
    def n_inf(self) -> float:
        return information_limit(self.d, self.p)


def information_limit(d, p) -> float:
    """Minimal noiseless sample size ``d / min(p)``."""
    return d / min(p)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    true_labels: Optional[np.ndarray] = None
    truth: Optional[MLRModel] = None
    noise_sigma: Optional[float] = None
    corrupted: Optional[np.ndarray] = None
    columns: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))
        if self.true_labels is not None:
            labels = _frozen(self.true_labels, dtype=int).ravel()
            if labels.shape[0] != y.shape[0]:
                raise ValueError("true_labels length differs from n")
            K = self.truth.K if self.truth is not None else labels.max(initial=1)
            if labels.size and (labels.min() < 1 or labels.max() > K):
                raise ValueError(f"true_labels must lie in [1, {K}]")
            object.__setattr__(self, "true_labels", labels)
        if self.corrupted is not None:
            object.__setattr__(self, "corrupted", _frozen(self.corrupted, dtype=int))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def draw_init(K, d, seed):
    """Shared random initialization: a ``(K, d)`` standard-normal matrix."""
    return np.random.default_rng(seed).standard_normal((K, d))


def generate_synthetic(spec: MixtureSpec, n: int) -> Dataset:
    """Sample a dataset from the mixed linear regression model.

    ``X``, the regression vectors and the noise are Gaussian; labels are
    i.i.d. categorical with probabilities ``spec.p``.  The whole draw is a
    function of ``spec.seed``.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(spec.seed)
    betas = rng.standard_normal((spec.K, spec.d))
    X = rng.standard_normal((n, spec.d))
    labels = rng.choice(spec.K, size=n, p=np.asarray(spec.p) / sum(spec.p))
    noise = spec.sigma * rng.standard_normal(n)
    y = np.einsum("ij,ij->i", X, betas[labels]) + noise
    return Dataset(X, y, true_labels=labels + 1, truth=MLRModel(betas), noise_sigma=spec.sigma)


def inject_outliers(data: Dataset, f: float, seed) -> Dataset:
    """Replace ``ceil(f n)`` random responses with draws from ``N(0, mean(y^2))``."""
    if data.n == 0:
        raise ValueError("dataset is empty")
    if not 0 <= f < 1:
        raise ValueError("corruption fraction must lie in [0, 1)")
    m = ceil_count(f * data.n)
    if m == 0:
        return data
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(data.n, size=m, replace=False))
    rms = np.sqrt(np.mean(data.y ** 2))
    y = data.y.copy()
    y[idx] = rms * rng.standard_normal(m)
    return Dataset(data.X, y, true_labels=data.true_labels, truth=data.truth,
                   noise_sigma=data.noise_sigma, corrupted=idx, columns=data.columns)


def wls(X, w, y, ridge=False, round=None, component=None):
    """Weighted least squares ``argmin ||W^(1/2) (y - X beta)||^2``.

    Rows with zero weight are dropped and the remaining system is solved
    by an SVD-based least-squares routine on ``sqrt(w) * X``.

    Parameters
    ----------
    X : ndarray of shape (m, d)
    w : ndarray of shape (m,)
        Nonnegative weights.
    y : ndarray of shape (m,)
    ridge : bool
        Add ``1e3 * eps * trace(G) / d`` to the diagonal of the weighted Gram
        matrix ``G`` instead of raising on near rank deficiency.
    round, component : int, optional
        Context attached to a :class:`DegenerateSystem` error.

    Raises
    ------
    DegenerateSystem
        If the smallest singular value of the weighted Gram matrix is below
        ``1e6 * eps`` times its largest.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    keep = w > 0
    if not keep.all():
        X, w, y = X[keep], w[keep], y[keep]
    d = X.shape[1]
    sw = np.sqrt(w)
    A = X * sw[:, None]
    b = y * sw
    if ridge:
        lam = 1e3 * EPS * np.einsum("ij,ij->", A, A) / d
        A = np.vstack([A, np.sqrt(lam) * np.eye(d)])
        b = np.concatenate([b, np.zeros(d)])
    where = _where(round, component)
    if A.shape[0] < d:
        raise DegenerateSystem(f"{A.shape[0]} effective samples for {d} unknowns{where}",
                               round=round, component=component)
    beta, _, _, s = np.linalg.lstsq(A, b, rcond=None)
    # singular values of the Gram matrix are the squares of those of A
    if not ridge and (s[0] == 0 or s[-1] ** 2 < GRAM_RCOND * s[0] ** 2):
        raise DegenerateSystem(f"weighted Gram matrix is rank deficient{where}",
                               round=round, component=component)
    return beta


def ols(X, y, **kwargs):
    """Ordinary least squares; :func:`wls` with unit weights."""
    return wls(X, np.ones(len(y)), y, **kwargs)


def _where(round, component):
    parts = []
    if round is not None:
        parts.append(f"round {round}")
    if component is not None:
        parts.append(f"component {component}")
    return f" ({', '.join(parts)})" if parts else ""


def oracle_ols(data: Dataset) -> MLRModel:
    """Per-component OLS given the true labels."""
    if data.true_labels is None:
        raise ValueError("dataset carries no true labels")
    K = data.truth.K if data.truth is not None else int(data.true_labels.max())
    betas = []
    for k in range(1, K + 1):
        rows = data.true_labels == k
        if rows.sum() < data.d:
            raise InsufficientData(f"component {k} has {rows.sum()} samples, need {data.d}")
        betas.append(ols(data.X[rows], data.y[rows], component=k))
    return MLRModel(np.array(betas))


def save_dataset(data: Dataset, path):
    """Write ``x1..xd,y[,label]`` CSV; labels are 1-based."""
    header = [f"x{j}" for j in range(1, data.d + 1)] + ["y"]
    with_labels = data.true_labels is not None
    if with_labels:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(data.n):
            row = [repr(float(v)) for v in data.X[i]] + [repr(float(data.y[i]))]
            if with_labels:
                row.append(str(int(data.true_labels[i])))
            writer.writerow(row)


def load_dataset(path) -> Dataset:
    """Read a CSV written by :func:`save_dataset`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    if "y" not in header:
        raise ValueError(f"{path}: header has no 'y' column")
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header))
    yi = header.index("y")
    xcols = [j for j, h in enumerate(header) if h.startswith("x")]
    labels = arr[:, header.index("label")].astype(int) if "label" in header else None
    return Dataset(arr[:, xcols], arr[:, yi], true_labels=labels)


# Phi^{-1}(0.75), the normal MAD constant used to map nu to eta
MAD_CONSTANT = 0.6745


@dataclass(frozen=True)
class SolverConfig:
    """Tunables of the Mix-IRLS solver.

    ``eta`` is derived as ``sqrt(0.6745 / nu)``.  ``T1``/``T2`` default to
    ``max_iters``; both phases also stop early once the relative change of
    the estimates drops below ``tol_delta`` (``None`` derives it from the
    dataset's noise level, or uses ``2 eps`` when that is unknown).
    """

    K: int
    nu: float = 0.5
    w_th: float = 0.01
    rho: float = 1.0
    T1: Optional[int] = None
    T2: Optional[int] = None
    max_iters: int = 1000
    trim_fraction: float = 0.0
    unknown_K: bool = False
    tol_delta: Optional[float] = None
    max_restarts: int = 9
    ridge: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be positive")
        if self.nu <= 0:
            raise ValueError("nu must be positive")
        if not 0 <= self.w_th < 1:
            raise ValueError("w_th must lie in [0, 1)")
        if self.rho < 1:
            raise ValueError("rho must be at least 1")
        if not 0 <= self.trim_fraction < 1:
            raise ValueError("trim_fraction must lie in [0, 1)")
        for name in ("T1", "T2", "max_iters", "max_restarts"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be a positive integer")

    @classmethod
    def for_real_data(cls, K, **overrides):
        """Defaults used on real datasets (``nu = 1``, ``rho = 2``)."""
        return cls(K=K, **{"nu": 1.0, "rho": 2.0, **overrides})

    @property
    def eta(self) -> float:
        return math.sqrt(MAD_CONSTANT / self.nu)

    @property
    def t1(self) -> int:
        return self.T1 or self.max_iters

    @property
    def t2(self) -> int:
        return self.T2 or self.max_iters

    def tolerance(self, data: Dataset) -> float:
        if self.tol_delta is not None:
            return self.tol_delta
        sigma = data.noise_sigma or 0.0
        return min(1.0, max(0.01 * sigma, 2 * EPS))


@dataclass
class FitReport:
    """Output of a solver run.  ``labels`` are 1-based argmin-residual assignments."""

    model: MLRModel
    labels: np.ndarray
    K_found: int
    restarts: int = 0
    final_w_th: float = float("nan")
    iterations: int = 0
    elapsed_seconds: float = 0.0
    diagnostics: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "model": self.model.to_list(),
            "labels": [int(v) for v in self.labels],
            "K_found": int(self.K_found),
            "restarts": int(self.restarts),
            "final_w_th": None if math.isnan(self.final_w_th) else float(self.final_w_th),
            "iterations": int(self.iterations),
            "elapsed_seconds": float(self.elapsed_seconds),
        }

    @classmethod
    def from_dict(cls, doc):
        w_th = doc.get("final_w_th")
        return cls(model=MLRModel(np.array(doc["model"], dtype=float)),
                   labels=np.array(doc["labels"], dtype=int),
                   K_found=doc["K_found"], restarts=doc.get("restarts", 0),
                   final_w_th=float("nan") if w_th is None else w_th,
                   iterations=doc.get("iterations", 0),
                   elapsed_seconds=doc.get("elapsed_seconds", 0.0))
