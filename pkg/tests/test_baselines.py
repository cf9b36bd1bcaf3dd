import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp

from mlrlab import baselines
from mlrlab.baselines import BaselineConfig, altmin, altmin_step, em, gd, gd_step, min_residual_objective
from mlrlab.core import MixtureSpec, draw_init, generate_synthetic, ols
from mlrlab.exceptions import DegenerateSystem, Diverged, InsufficientData
from mlrlab.metrics import f_latent


def _data(K, p, d, n, sigma=0.0, seed=0):
    return generate_synthetic(MixtureSpec(K=K, p=p, d=d, sigma=sigma, seed=seed), n)


# -- AltMin -----------------------------------------------------------------

def test_altmin_truth_is_fixed_point():
    data = _data(2, (0.6, 0.4), 4, 300, seed=1)
    one = altmin_step(data.X, data.y, np.array(data.truth.betas))
    assert np.allclose(one, data.truth.betas, atol=1e-10)
    rep = altmin(data, BaselineConfig(K=2), data.truth.betas)
    assert rep.iterations <= 2
    assert np.allclose(rep.model.betas, data.truth.betas, atol=1e-10)


def test_altmin_tie_goes_to_first_component():
    X = np.array([[1.0], [1.0], [1.0], [1.0], [1.0]])
    y = np.array([1.0, 1.0, 3.0, 3.0, 2.0])  # last sample is equidistant
    new = altmin_step(X, y, np.array([[1.0], [3.0]]))
    assert new[0, 0] == pytest.approx(4.0 / 3.0)
    assert new[1, 0] == pytest.approx(3.0)


def test_altmin_empty_component_raises():
    data = _data(1, (1.0,), 3, 50, seed=2)
    far = np.vstack([data.truth.betas[0], data.truth.betas[0] + 100.0])
    with pytest.raises(DegenerateSystem) as info:
        altmin_step(data.X, data.y, far)
    assert info.value.component == 2


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_altmin_objective_never_increases(seed):
    data = _data(3, (0.5, 0.3, 0.2), 4, 300, sigma=0.1, seed=seed)
    try:
        rep = altmin(data, BaselineConfig(K=3, max_iters=50), draw_init(3, 4, seed))
    except DegenerateSystem:
        return
    obj = np.array(rep.diagnostics["objective"])
    assert np.all(np.diff(obj) <= 1e-10 * max(1.0, obj[0]))


def test_trimmed_altmin_uses_ceil_fraction():
    data = _data(1, (1.0,), 2, 10, sigma=0.1, seed=3)
    beta = data.truth.betas
    R = np.abs(data.X @ beta.T - data.y[:, None])[:, 0]
    keep = np.argsort(R, kind="stable")[:9]
    expected = ols(data.X[keep], data.y[keep])
    assert np.allclose(altmin_step(data.X, data.y, beta, trim_fraction=0.1)[0], expected, atol=1e-12)


# -- EM ---------------------------------------------------------------------

def test_em_single_component_is_ols():
    data = _data(1, (1.0,), 4, 200, sigma=0.3, seed=4)
    rep = em(data, BaselineConfig(K=1), draw_init(1, 4, 0))
    assert np.allclose(rep.model.betas[0], ols(data.X, data.y), atol=1e-10)


def test_em_responsibilities_normalized():
    data = _data(3, (0.5, 0.3, 0.2), 3, 100, sigma=0.1, seed=5)
    lj = baselines._log_joint(data.X, data.y, draw_init(3, 3, 1), np.array([1.0, 0.5, 2.0]),
                              np.array([0.2, 0.3, 0.5]))
    resp = np.exp(lj - logsumexp(lj, axis=1, keepdims=True))
    assert np.allclose(resp.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_em_loglik_non_decreasing(seed):
    data = _data(2, (0.6, 0.4), 3, 300, sigma=0.1, seed=seed)
    try:
        rep = em(data, BaselineConfig(K=2, max_iters=100), draw_init(2, 3, seed + 1))
    except Exception:
        return
    ll = np.array(rep.diagnostics["loglik"])
    assert np.all(np.diff(ll) >= -1e-8 * np.maximum(1.0, np.abs(ll[:-1])))


def test_em_recovers_balanced_mixture():
    data = _data(2, (0.5, 0.5), 3, 600, sigma=0.01, seed=8)
    rep = em(data, BaselineConfig(K=2), data.truth.betas + 0.3)
    assert f_latent(rep.model, data.truth)[0] <= 0.02


# -- GD ---------------------------------------------------------------------

def test_gd_single_component_converges_to_ols():
    data = _data(1, (1.0,), 4, 200, sigma=0.3, seed=6)
    rep = gd(data, BaselineConfig(K=1, step_size=0.05), draw_init(1, 4, 2))
    assert np.allclose(rep.model.betas[0], ols(data.X, data.y), atol=1e-4)


@pytest.mark.parametrize("seed", range(20))
def test_gd_descends_with_small_step(seed):
    r = np.random.default_rng(seed)
    K = 1 + seed % 3
    X = r.standard_normal((100, 4))
    y = r.standard_normal(100)
    betas = r.standard_normal((K, 4))
    lam = np.linalg.eigvalsh(X.T @ X).max()
    step = 1.0 / (2.0 * lam / len(y))
    obj = min_residual_objective(X, y, betas)
    for _ in range(30):
        labels = np.argmin(np.abs(X @ betas.T - y[:, None]), axis=1)
        fixed_before = np.sum((np.einsum("ij,ij->i", X, betas[labels]) - y) ** 2)
        betas = gd_step(X, y, betas, step)
        fixed_after = np.sum((np.einsum("ij,ij->i", X, betas[labels]) - y) ** 2)
        assert fixed_after <= fixed_before + 1e-10
        new = min_residual_objective(X, y, betas)
        assert new <= obj + 1e-10
        obj = new


def test_gd_diverges_with_huge_step():
    data = _data(2, (0.5, 0.5), 5, 100, sigma=0.1, seed=7)
    with pytest.raises(Diverged):
        gd(data, BaselineConfig(K=2, step_size=50.0), draw_init(2, 5, 1))


# -- oracle and single OLS -----------------------------------------------------

def test_oracle_noiseless_is_exact():
    data = _data(3, (0.5, 0.3, 0.2), 5, 300, seed=9)
    assert f_latent(baselines.oracle(data), data.truth)[0] <= 1e-12


def test_oracle_error_scale():
    d, sigma = 10, 1e-2
    errs, preds = [], []
    for seed in range(20):
        data = _data(2, (0.5, 0.5), d, 400, sigma=sigma, seed=seed)
        est = baselines.oracle(data).betas
        for k in range(2):
            n_k = int(np.sum(data.true_labels == k + 1))
            errs.append(np.linalg.norm(est[k] - data.truth.betas[k]))
            preds.append(sigma * np.sqrt(d / n_k))
    ratio = np.median(errs) / np.median(preds)
    assert 1 / 3 <= ratio <= 3


def test_oracle_at_information_limit_has_noise_scale_error():
    d, sigma = 10, 1e-2
    errs = []
    for seed in range(30):
        data = _data(1, (1.0,), d, d, sigma=sigma, seed=seed)
        errs.append(np.linalg.norm(baselines.oracle(data).betas[0] - data.truth.betas[0]))
    assert sigma / 10 <= np.median(errs) <= 100 * sigma


def test_oracle_needs_labels_and_samples():
    data = _data(2, (0.95, 0.05), 10, 60, seed=1)
    with pytest.raises(InsufficientData):
        baselines.oracle(data)


def test_single_ols():
    data = _data(1, (1.0,), 3, 50, seed=2)
    assert np.allclose(baselines.single_ols(data), data.truth.betas[0], atol=1e-10)


def test_init_shape_checked():
    data = _data(2, (0.5, 0.5), 3, 50)
    with pytest.raises(ValueError):
        altmin(data, BaselineConfig(K=2), np.zeros((3, 3)))
