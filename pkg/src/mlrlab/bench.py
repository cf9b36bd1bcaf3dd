"""Declarative synthetic sweeps: seeding, solver dispatch, CSV and summaries.

A trial is fully determined by ``(base_seed, sweep_value, trial)``: the
data, the outlier draw and the shared initial vectors all derive from a
splitmix64 hash of that triple, so adding solvers or sweep values never
changes existing trials.
"""

from __future__ import annotations

import csv
import io
import math
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import baselines, mix_irls
from .core import FitReport, MixtureSpec, SolverConfig, draw_init, generate_synthetic, inject_outliers, oracle_ols
from .exceptions import MLRError
from .metrics import f_latent_overparam, failure_threshold

CSV_HEADER = ["sweep_value", "solver", "trial", "seed", "f_latent", "failed",
              "elapsed_seconds", "iterations", "k_found"]
SWEEP_VARIABLES = ("n", "n_over_inf", "sigma", "f", "K_over", "dxn")
SOLVERS = ("mix-irls", "mix-irls-tuned", "altmin", "em", "gd", "gd-tuned", "oracle")
NU_GRID = (0.1, 0.5, 1.0, 2.0)
W_TH_GRID = (0.01, 0.1, 0.5, 0.75)
TUNING_TRIAL_OFFSET = 1 << 32

_MASK = (1 << 64) - 1


def splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _value_key(value) -> int:
    if isinstance(value, (tuple, list)):
        h = 0
        for v in value:
            h = splitmix64(h ^ _value_key(v))
        return h
    return struct.unpack("<Q", struct.pack("<d", float(value)))[0]


def trial_seed(base_seed: int, sweep_value, trial: int) -> int:
    """64-bit seed for one trial."""
    h = splitmix64(base_seed & _MASK)
    h = splitmix64(h ^ _value_key(sweep_value))
    return splitmix64(h ^ (trial & _MASK))


@dataclass(frozen=True)
class SolverSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in SOLVERS:
            raise ValueError(f"unknown solver {self.name!r}; choose from {', '.join(SOLVERS)}")


@dataclass(frozen=True)
class ExperimentSpec:
    """One sweep.

    ``n`` or ``n_over_inf`` fixes the sample size when the sweep variable
    is not itself a sample size; ``dxn`` sweeps take ``[d, n]`` pairs.
    """

    sweep_variable: str
    sweep_values: tuple
    mixture: MixtureSpec
    solvers: tuple
    trials: int = 50
    base_seed: int = 0
    n: Optional[int] = None
    n_over_inf: Optional[float] = None
    tuning: dict = field(default_factory=dict)
    tuning_reps: int = 10
    name: str = "experiment"

    def __post_init__(self):
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep_variable must be one of {SWEEP_VARIABLES}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not self.sweep_values:
            raise ValueError("sweep_values is empty")
        values = tuple(tuple(v) if isinstance(v, list) else v for v in self.sweep_values)
        object.__setattr__(self, "sweep_values", values)
        if self.sweep_variable != "dxn" and any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("sweep_values must be strictly increasing")
        if self.sweep_variable not in ("n", "n_over_inf", "dxn") and self.n is None and self.n_over_inf is None:
            raise ValueError("set n or n_over_inf for this sweep")
        solvers = tuple(s if isinstance(s, SolverSpec) else SolverSpec(**s) for s in self.solvers)
        if not solvers:
            raise ValueError("no solvers given")
        object.__setattr__(self, "solvers", solvers)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentSpec":
        doc = dict(doc)
        mix = dict(doc.pop("mixture"))
        mix.setdefault("seed", 0)
        mixture = MixtureSpec(K=mix["K"], p=tuple(mix["p"]), d=mix["d"],
                              sigma=mix.get("sigma", 0.0), seed=mix["seed"])
        solvers = []
        for s in doc.pop("solvers"):
            s = dict(s)
            name = s.pop("name")
            solvers.append(SolverSpec(name, s))
        tuning = dict(doc.pop("tuning", {}))
        reps = tuning.pop("reps", 10)
        return cls(mixture=mixture, solvers=tuple(solvers), tuning=tuning, tuning_reps=reps,
                   sweep_values=tuple(doc.pop("sweep_values")), **doc)


@dataclass(frozen=True)
class TrialSetting:
    mixture: MixtureSpec
    n: int
    K_in: int
    corruption: float


def setting_for(spec: ExperimentSpec, value) -> TrialSetting:
    mix = spec.mixture
    K_in, f = mix.K, 0.0
    var = spec.sweep_variable
    if var == "sigma":
        mix = replace(mix, sigma=float(value))
    elif var == "dxn":
        mix = replace(mix, d=int(value[0]))
    if var == "n":
        n = int(value)
    elif var == "n_over_inf":
        n = int(round(value * mix.n_inf))
    elif var == "dxn":
        n = int(value[1])
    elif spec.n is not None:
        n = spec.n
    else:
        n = int(round(spec.n_over_inf * mix.n_inf))
    if var == "f":
        f = float(value)
    elif var == "K_over":
        K_in = mix.K + int(value)
    return TrialSetting(mix, n, K_in, f)


def make_trial(setting: TrialSetting, seed: int):
    """Data and the shared ``(K_in, d)`` initialization for one trial."""
    mix = replace(setting.mixture, seed=seed)
    data = generate_synthetic(mix, setting.n)
    if setting.corruption > 0:
        data = inject_outliers(data, setting.corruption, splitmix64(seed ^ 2))
    init = draw_init(setting.K_in, mix.d, splitmix64(seed ^ 1))
    return data, init


def run_solver(name, params, data, init, setting: TrialSetting):
    """Dispatch one solver; returns a :class:`FitReport`."""
    K_true = setting.mixture.K
    f = setting.corruption
    if name in ("mix-irls", "mix-irls-tuned"):
        cfg = SolverConfig(**{"K": setting.K_in, "unknown_K": setting.K_in > K_true,
                              "trim_fraction": f, **params})
        return mix_irls.fit(data, cfg, init=init)
    if name in ("altmin", "em", "gd", "gd-tuned"):
        cfg = baselines.BaselineConfig(**{"K": setting.K_in, "trim_fraction": f, **params})
        return getattr(baselines, name.split("-")[0])(data, cfg, init)
    if name == "oracle":
        start = time.perf_counter()
        model = oracle_ols(data)
        return FitReport(model=model, labels=model.assign(data.X, data.y), K_found=model.K,
                         elapsed_seconds=time.perf_counter() - start)
    raise ValueError(f"unknown solver {name!r}")


def score(report, data) -> float:
    """Coefficient error against the truth; ``inf`` if too few components came back."""
    if report.model.K < data.truth.K:
        return math.inf
    return f_latent_overparam(report.model, data.truth)


def _tuning_grid(spec: ExperimentSpec, name):
    t = spec.tuning
    if name == "mix-irls-tuned":
        return [{"nu": nu, "w_th": w} for nu in t.get("nu", NU_GRID) for w in t.get("w_th", W_TH_GRID)]
    if name == "gd-tuned":
        return [{"step_size": s} for s in t.get("step_size", baselines.GD_STEP_GRID)]
    return [{}]


def tune(spec: ExperimentSpec, solver: SolverSpec, value):
    """Pick the grid point with the smallest median error over the tuning repetitions."""
    grid = _tuning_grid(spec, solver.name)
    if len(grid) == 1:
        return {**solver.params, **grid[0]}
    setting = setting_for(spec, value)
    trials = []
    for rep in range(spec.tuning_reps):
        seed = trial_seed(spec.base_seed, value, TUNING_TRIAL_OFFSET + rep)
        trials.append(make_trial(setting, seed))
    best, best_err = None, math.inf
    for point in grid:
        params = {**solver.params, **point}
        errs = []
        for data, init in trials:
            try:
                errs.append(score(run_solver(solver.name, params, data, init, setting), data))
            except MLRError:
                errs.append(math.inf)
        med = float(np.median(errs))
        if best is None or med < best_err:
            best, best_err = params, med
    return best


@dataclass(frozen=True)
class TrialRow:
    sweep_value: object
    solver: str
    trial: int
    seed: int
    f_latent: float
    failed: bool
    elapsed_seconds: Optional[float]
    iterations: int
    k_found: int
    error: str = ""


def _fmt_value(v):
    if isinstance(v, tuple):
        return "x".join(str(int(x)) for x in v)
    return repr(v)


@dataclass
class ExperimentResult:
    rows: list
    spec: Optional[ExperimentSpec] = None
    tuned_params: dict = field(default_factory=dict)

    def to_csv(self, fh=None):
        """Write the canonical CSV; returns the text when ``fh`` is None."""
        buf = fh or io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([_fmt_value(r.sweep_value), r.solver, r.trial, r.seed, repr(float(r.f_latent)),
                        "true" if r.failed else "false",
                        "" if r.elapsed_seconds is None else repr(r.elapsed_seconds),
                        r.iterations, r.k_found])
        if fh is None:
            return buf.getvalue()


def _run_trial(spec, tuned, value_index, value, trial, timing):
    seed = trial_seed(spec.base_seed, value, trial)
    setting = setting_for(spec, value)
    data, init = make_trial(setting, seed)
    threshold = failure_threshold(setting.mixture.sigma)
    rows = []
    for solver in spec.solvers:
        params = tuned.get((value_index, solver.name), solver.params)
        err, f_lat, iters, k_found, elapsed = "", math.inf, 0, 0, None
        start = time.perf_counter()
        try:
            rep = run_solver(solver.name, params, data, init, setting)
            f_lat = score(rep, data)
            iters, k_found = rep.iterations, rep.K_found
        except MLRError as exc:
            err = f"{type(exc).__name__}: {exc}"
        if timing:
            elapsed = time.perf_counter() - start
        rows.append(TrialRow(value, solver.name, trial, seed, f_lat, not f_lat <= threshold,
                             elapsed, iters, k_found, err))
    return value_index, rows


def resolve_threads(threads=None) -> int:
    if threads:
        return int(threads)
    return int(os.environ.get("MLRLAB_THREADS", "1") or 1)


def run_experiment(spec: ExperimentSpec, threads=None, timing=False) -> ExperimentResult:
    """Run every (sweep value, trial) and return rows in canonical order.

    Solver errors become failed rows.  Wall-clock times are only recorded
    with ``timing=True`` so that untimed runs are byte-for-byte reproducible.
    """
    tuned = {}
    for i, value in enumerate(spec.sweep_values):
        for solver in spec.solvers:
            if solver.name.endswith("-tuned"):
                tuned[(i, solver.name)] = tune(spec, solver, value)
    jobs = [(i, v, t) for i, v in enumerate(spec.sweep_values) for t in range(spec.trials)]
    n_threads = resolve_threads(threads)
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(lambda j: _run_trial(spec, tuned, *j, timing), jobs))
    else:
        parts = [_run_trial(spec, tuned, *j, timing) for j in jobs]
    rows = sorted(((i, r) for i, rs in parts for r in rs), key=lambda x: (x[0], x[1].solver, x[1].trial))
    readable = {(spec.sweep_values[i], name): p for (i, name), p in tuned.items()}
    return ExperimentResult([r for _, r in rows], spec, readable)


def _mad(x):
    x = np.asarray(x, dtype=float)
    med = np.median(x)
    if not np.isfinite(med):
        return math.nan
    return float(np.median(np.abs(x - med)))


def aggregate(result: ExperimentResult) -> list:
    """Per (sweep value, solver): median error, MAD, failure percentage, median runtime."""
    if not result.rows:
        raise ValueError("empty result")
    groups = {}
    for r in result.rows:
        groups.setdefault((r.sweep_value, r.solver), []).append(r)
    out = []
    for (value, solver), rows in groups.items():
        errs = [r.f_latent for r in rows]
        times = [r.elapsed_seconds for r in rows if r.elapsed_seconds is not None]
        out.append({
            "sweep_value": list(value) if isinstance(value, tuple) else value,
            "solver": solver,
            "trials": len(rows),
            "median_f_latent": float(np.median(errs)),
            "mad_f_latent": _mad(errs),
            "failure_percent": 100.0 * sum(r.failed for r in rows) / len(rows),
            "median_elapsed_seconds": float(np.median(times)) if times else None,
            "median_k_found": float(np.median([r.k_found for r in rows])),
        })
    return out
