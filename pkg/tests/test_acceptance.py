"""Acceptance criteria, one test (and one PASS/FAIL line) per criterion.

Runs under pytest (lines appear in the terminal summary) or as a script:
``python3 tests/test_acceptance.py``.
"""

import itertools
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from acceptance_log import report  # noqa: E402

from mlrlab import bench, theory  # noqa: E402
from mlrlab.baselines import altmin_step  # noqa: E402
from mlrlab.cli import cli_main  # noqa: E402
from mlrlab.core import Dataset, MixtureSpec, MLRModel, SolverConfig, information_limit  # noqa: E402
from mlrlab.data_io import IngestConfig, ingest_csv, load_registry, validate_against_registry  # noqa: E402
from mlrlab.exceptions import MLRError  # noqa: E402
from mlrlab.metrics import f_latent, f_latent_overparam  # noqa: E402
from mlrlab.mix_irls import phase1_modified, phase2_step  # noqa: E402

pytestmark = pytest.mark.slow

TRIALS = 50
DESK = dict(d=30, sigma=1e-2)
IMBALANCED = (0.7, 0.2, 0.1)
BALANCED = (1 / 3, 1 / 3, 1 / 3)


def _spec(p, sweep, values, solvers, n=None, d=30, sigma=1e-2, K=3):
    return bench.ExperimentSpec(
        sweep_variable=sweep, sweep_values=tuple(values),
        mixture=MixtureSpec(K=K, p=p, d=d, sigma=sigma),
        solvers=tuple(bench.SolverSpec(s) for s in solvers), trials=TRIALS, n=n)


def _by_solver(result):
    out = {}
    for r in result.rows:
        out.setdefault(r.solver, []).append(r)
    return out


def _fail_pct(rows):
    return 100.0 * sum(r.failed for r in rows) / len(rows)


def test_criterion_01_noiseless_recovery():
    n = int(round(5 * information_limit(20, IMBALANCED)))
    start = time.perf_counter()
    res = bench.run_experiment(_spec(IMBALANCED, "n", [n], ["mix-irls"], d=20, sigma=0.0))
    elapsed = time.perf_counter() - start
    ok_runs = sum(r.f_latent <= 1e-8 for r in res.rows)
    ok = ok_runs >= 0.9 * TRIALS and elapsed < 120
    report(1, ok, f"noiseless d=20 K=3 n={n}: F_latent<=1e-8 in {ok_runs}/{TRIALS} seeds "
                  f"(need >=45), {elapsed:.0f}s (limit 120s)")
    assert ok


def test_criterion_02_imbalance_gap():
    n = int(round(1.5 * information_limit(30, IMBALANCED)))
    start = time.perf_counter()
    res = bench.run_experiment(_spec(IMBALANCED, "n", [n], ["mix-irls", "altmin", "em", "gd"]))
    elapsed = time.perf_counter() - start
    pct = {s: _fail_pct(rows) for s, rows in _by_solver(res).items()}
    ok = pct["mix-irls"] <= 20 and all(pct[s] >= 60 for s in ("altmin", "em", "gd")) and elapsed < 600
    report(2, ok, f"imbalanced n={n}: failure % "
                  + ", ".join(f"{s}={v:.0f}" for s, v in sorted(pct.items()))
                  + f" (mix-irls<=20, baselines>=60), {elapsed:.0f}s (limit 600s)")
    assert ok


def test_criterion_03_balanced_parity():
    n = int(round(4 * information_limit(30, BALANCED)))
    res = bench.run_experiment(_spec(BALANCED, "n", [n], ["mix-irls", "altmin", "em", "gd"]))
    pct = {s: _fail_pct(rows) for s, rows in _by_solver(res).items()}
    best = min(pct[s] for s in ("altmin", "em", "gd"))
    ok = abs(pct["mix-irls"] - best) <= 20
    report(3, ok, f"balanced n={n}: failure % "
                  + ", ".join(f"{s}={v:.0f}" for s, v in sorted(pct.items()))
                  + f"; |mix-irls - best baseline| = {abs(pct['mix-irls'] - best):.0f} (<=20)")
    assert ok


def test_criterion_04_overparameterization():
    n = int(round(4 * information_limit(30, IMBALANCED)))
    res = bench.run_experiment(_spec(IMBALANCED, "K_over", [4], ["mix-irls", "altmin", "em", "gd"], n=n))
    groups = _by_solver(res)
    pct = {s: _fail_pct(rows) for s, rows in groups.items()}
    good = [r for r in groups["mix-irls"] if not r.failed]
    k3 = sum(r.k_found == 3 for r in good)
    k_ok = bool(good) and k3 >= 0.8 * len(good)
    ok = pct["mix-irls"] <= 20 and pct["altmin"] >= 60 and pct["gd"] >= 60 and k_ok
    report(4, ok, f"K=K*+4, n={n}: failure % "
                  + ", ".join(f"{s}={v:.0f}" for s, v in sorted(pct.items()))
                  + f"; K_found=3 in {k3}/{len(good)} succeeding mix-irls runs")
    assert ok


def test_criterion_05_outlier_robustness():
    n = 1200
    res = bench.run_experiment(_spec(IMBALANCED, "f", [0.05], ["mix-irls", "altmin", "em", "gd"], n=n))
    med = {s: float(np.median([r.f_latent for r in rows])) for s, rows in _by_solver(res).items()}
    th = 2 * DESK["sigma"]
    ok = med["mix-irls"] <= th and all(med[s] > th for s in ("altmin", "em", "gd"))
    report(5, ok, f"f=0.05 trimmed, n={n}: median F_latent "
                  + ", ".join(f"{s}={v:.3g}" for s, v in sorted(med.items()))
                  + f" (mix-irls<={th:g}<baselines)")
    assert ok


def _bounded_noise_data(seed, rel_noise, n=200_000, d=50, p=(0.85, 0.15)):
    """Two-component data with ||Delta|| = 1 and uniform noise on [-s, s]."""
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((2, d))
    B /= np.linalg.norm(B[0] - B[1])
    X = rng.standard_normal((n, d))
    labels = (rng.random(n) >= p[0]).astype(int)
    s = rel_noise
    y = np.einsum("ij,ij->i", X, B[labels]) + s * rng.uniform(-1.0, 1.0, n)
    return Dataset(X, y, true_labels=labels + 1, truth=MLRModel(B), noise_sigma=s), s


def _thm_trial(seed, rel_noise, position):
    d, p = 50, (0.85, 0.15)
    R = 2.0 * d
    data, s = _bounded_noise_data(seed, rel_noise, d=d, p=p)
    eta = SolverConfig(K=2).eta
    inputs = theory.TheoryInputs(p1=p[0], p2=p[1], sigma_eps=s, delta_norm=1.0, eta=eta, R=R)
    lo, hi = theory.wth_range(inputs)
    w_th = lo + position * (hi - lo)
    bound = theory.recovery_bound(inputs)
    try:
        fit = phase1_modified(data, SolverConfig(K=2, w_th=w_th), R, seed=seed + 7919)
    except MLRError as exc:
        return math.inf, bound, type(exc).__name__, 0
    err = float(np.max(np.linalg.norm(fit.model.betas - data.truth.betas, axis=1)))
    return err, bound, "", fit.S2.size


def test_criterion_06_two_component_bound():
    noisy, noiseless, errors = 0, 0, set()
    bound = None
    for seed in range(TRIALS):
        err, bound, exc, _ = _thm_trial(seed, 0.01, 0.5)
        noisy += err <= 2 * bound
        errors.add(exc)
        err0, _, exc0, _ = _thm_trial(seed, 0.0, 0.5)
        noiseless += err0 <= 1e-6
        errors.add(exc0)
    errors.discard("")
    # not gated: the same check near the top of the admissible range
    diag = [_thm_trial(seed, 0.01, 0.99) for seed in range(5)]
    diag_txt = ", ".join(f"{e:.2g}(|S2|={m})" for e, _, _, m in diag)
    ok = noisy >= 45 and noiseless >= 45
    report(6, ok, f"w_th at midpoint: error<=2*bound({2 * bound:.3g}) in {noisy}/{TRIALS}, "
                  f"noiseless error<=1e-6 in {noiseless}/{TRIALS} (need 45 each)"
                  + (f"; errors: {', '.join(sorted(errors))}" if errors else "")
                  + f" | diagnostic at 99% of range, 5 seeds: {diag_txt}")
    assert ok


def test_criterion_07_threshold_range():
    inputs = theory.TheoryInputs(p1=0.8, p2=0.2, sigma_eps=1e-2, delta_norm=1.0, eta=1.0, R=1e6)
    lo, hi = theory.wth_range(inputs)
    ok = abs(lo - 0.69) <= 0.01 and abs(hi - 0.90) <= 0.01
    report(7, ok, f"wth_range = ({lo:.4f}, {hi:.4f}) vs (0.69, 0.90) +-0.01")
    assert ok


def _exhaustive_overparam(E, T):
    K, Ks = len(E), len(T)
    return min(np.mean([np.linalg.norm(E[m[k]] - T[k]) for k in range(Ks)])
               for m in itertools.permutations(range(K), Ks))


def test_criterion_08_metric_oracles():
    rng = np.random.default_rng(8)
    worst_perm, worst_inj = 0.0, 0.0
    for _ in range(100):
        K = int(rng.integers(1, 7))
        d = int(rng.integers(1, 6))
        T = rng.standard_normal((K, d))
        E = T[rng.permutation(K)] + 0.5 * rng.standard_normal((K, d))
        brute, _ = f_latent(E, T, method="brute")
        assign, _ = f_latent(E, T, method="assignment")
        worst_perm = max(worst_perm, abs(brute - assign))
        Ks = int(rng.integers(1, K + 1))
        T2 = rng.standard_normal((Ks, d))
        got = f_latent_overparam(E, T2, method="assignment")
        worst_inj = max(worst_inj, abs(got - _exhaustive_overparam(E, T2)))
    ok = worst_perm <= 1e-12 and worst_inj <= 1e-12
    report(8, ok, f"100 pairs K<=6: max |assignment - brute| = {worst_perm:.1e}, "
                  f"overparam vs exhaustive = {worst_inj:.1e} (<=1e-12)")
    assert ok


def test_criterion_09_phase2_equals_altmin():
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(20):
        n, d = 200, 5
        X = rng.standard_normal((n, d))
        B = rng.standard_normal((2, d))
        y = np.einsum("ij,ij->i", X, B[rng.integers(0, 2, n)]) + 0.1 * rng.standard_normal(n)
        start = B + 0.3 * rng.standard_normal((2, d))
        R = np.abs(X @ start.T - y[:, None])
        assert np.all(np.abs(R[:, 0] - R[:, 1]) > 1e-9)
        a, _ = phase2_step(X, y, start)
        b = altmin_step(X, y, start)
        worst = max(worst, float(np.max(np.abs(a - b))))
    ok = worst <= 1e-10
    report(9, ok, f"20 tie-free K=2 instances: max |phase2 - altmin| = {worst:.1e} (<=1e-10)")
    assert ok


BENCH_TOML = """
sweep_variable = "n"
sweep_values = [120, 180]
trials = 3
base_seed = 11

[mixture]
K = 3
p = [0.6, 0.3, 0.1]
d = 6
sigma = 0.01

[tuning]
reps = 2
nu = [0.5, 1.0]
w_th = [0.01, 0.1]
step_size = [0.01, 0.1]

[[solvers]]
name = "mix-irls"
[[solvers]]
name = "mix-irls-tuned"
[[solvers]]
name = "altmin"
[[solvers]]
name = "em"
[[solvers]]
name = "gd-tuned"
[[solvers]]
name = "oracle"
"""


def test_criterion_10_determinism(tmp_path=None):
    tmp = Path(tmp_path) if tmp_path else Path(os.environ.get("TMPDIR", "/tmp")) / "mlrlab_c10"
    tmp.mkdir(parents=True, exist_ok=True)
    cfg = tmp / "c10.toml"
    cfg.write_text(BENCH_TOML)
    outputs = []
    for run, threads in (("a", "1"), ("b", "1"), ("c", "3")):
        code = cli_main(["bench", "--config", str(cfg), "--out", str(tmp / run), "--threads", threads])
        assert code == 0
        outputs.append((tmp / run / "results.csv").read_bytes())
    lines = outputs[0].decode().splitlines()
    header = lines[0]
    ok = outputs[0] == outputs[1] == outputs[2] and header == ",".join(bench.CSV_HEADER)
    report(10, ok, f"bench run twice (and with 3 threads): byte-identical={outputs[0] == outputs[1] == outputs[2]}, "
                   f"{len(lines) - 1} rows, header ok={header == ','.join(bench.CSV_HEADER)}")
    assert ok


def test_criterion_11_ingestion(tmp_path=None):
    tmp = Path(tmp_path) if tmp_path else Path(os.environ.get("TMPDIR", "/tmp")) / "mlrlab_c11"
    tmp.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(11)
    n = 40
    df = pd.DataFrame({
        "age": rng.integers(18, 65, n),
        "bmi": rng.normal(28, 4, n).round(2),
        "smoker": rng.choice(["yes", "no"], n),
        "region": rng.choice(["ne", "nw", "se", "sw"], n),
        "note": [f'say "hi", {i}' for i in range(n)],
        "charges": rng.normal(1e4, 3e3, n),
    })
    df.loc[3, "bmi"] = np.nan
    path = tmp / "fixture.csv"
    df.to_csv(path, index=False)
    data = ingest_csv(path, IngestConfig(response_column="charges", drop_columns=("note",)))
    cols = np.column_stack([data.X[:, :-1], data.y])
    worst = max(float(np.max(np.abs(cols.mean(axis=0)))), float(np.max(np.abs(np.linalg.norm(cols, axis=0) - 1))))
    shape_ok = data.n == n - 1 and data.columns == ("age", "bmi", "smoker", "bias")
    fixture_ok = worst <= 1e-10 and shape_ok and np.all(data.X[:, -1] == 1)

    # Table-1 validation on user-supplied files (MLRLAB_DATA_DIR/<name>.csv)
    data_dir = os.environ.get("MLRLAB_DATA_DIR")
    checked, table_ok = [], True
    if data_dir:
        for name, entry in load_registry().items():
            f = Path(data_dir) / f"{name}.csv"
            if f.is_file():
                rep = validate_against_registry(ingest_csv(f, IngestConfig(add_bias=entry.add_bias)), entry)
                checked.append(name)
                table_ok &= rep.ok
    ok = fixture_ok and table_ok
    table_txt = f"registry check on {checked}: {table_ok}" if checked else "real datasets not supplied, registry check skipped"
    report(11, ok, f"fixture round-trip: n={data.n}, columns={data.columns}, max mean/norm deviation {worst:.1e} "
                   f"(<=1e-10); {table_txt}")
    assert ok


if __name__ == "__main__":
    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
