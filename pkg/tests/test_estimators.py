import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bvarcast.errors import DataError
from bvarcast.estimators import (
    ETA_GRID,
    MinnesotaHyper,
    ModelSpec,
    bic_lag_scan,
    build_design,
    garch_variance_path,
    minnesota_moments,
    reduced_form_covariance,
    sample_ar,
    sample_bvar_const,
    sample_bvar_garch,
    sample_bvar_sv,
    sample_bvar_svt,
    sample_posterior,
    triangular_factorization,
)
from bvarcast.kernels import make_rng
from bvarcast.market_data import PredictorPanel, ReturnPanel

from conftest import daily

COEFS = [[[0.3, 0.1], [0.0, 0.2]], [[-0.1, 0.0], [0.05, 0.1]]]
SIGMA = np.array([[1.0, 0.3], [0.3, 0.5]])


def small(vol, **kw):
    kw.setdefault("n_iter", 60)
    kw.setdefault("n_burn", 20)
    return ModelSpec(volatility=vol, lags=2, **kw)


# --- ids -------------------------------------------------------------------

@pytest.mark.parametrize("mid", ["BVAR", "BVAR-SV", "BVAR-GARCH", "BVAR-SVt",
                                 "BVARX", "BVARX-SV", "BVARX-GARCH", "BVARX-SVt", "BAR1", "BAR3"])
def test_model_id_round_trip(mid):
    assert ModelSpec.from_id(mid).model_id == mid


def test_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec.from_id("BVECM")
    with pytest.raises(ValueError):
        ModelSpec(family="AR", volatility="SV")
    with pytest.raises(ValueError):
        ModelSpec(n_iter=100, n_burn=100)
    assert ModelSpec().n_keep == 5000


# --- design ----------------------------------------------------------------

def test_design_scalar_example():
    Y, X = build_design(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), 1)
    np.testing.assert_array_equal(Y[:, 0], [2.0, 3.0, 4.0, 5.0])
    np.testing.assert_array_equal(X[:, 0], [1.0, 2.0, 3.0, 4.0])


def test_design_layout_and_predictor_lag(rng):
    y = rng.standard_normal((40, 4))
    w = rng.standard_normal((40, 8))
    Y, X = build_design(y, 3)
    assert X.shape == (37, 12)
    Y, X = build_design(y, 3, w)
    assert X.shape == (37, 20)
    # row for t = 3: [y_2, y_1, y_0, w_2]
    np.testing.assert_array_equal(X[0], np.r_[y[2], y[1], y[0], w[2]])
    np.testing.assert_array_equal(Y[0], y[3])


def test_design_rejects_misaligned_predictors(rng):
    dates = daily(np.datetime64("2020-01-01").astype(object), 30)
    panel = ReturnPanel(dates, ["a"], rng.standard_normal(30))
    preds = PredictorPanel(daily(dates[1], 30), ["w"], rng.standard_normal(30))
    with pytest.raises(DataError, match="dates"):
        build_design(panel, 1, preds)
    with pytest.raises(DataError, match="observations"):
        build_design(rng.standard_normal((5, 2)), 3)


# --- prior -----------------------------------------------------------------

def test_minnesota_own_lag_stds(rng):
    Y, X = build_design(rng.standard_normal((200, 1)), 3)
    mean, var = minnesota_moments(MinnesotaHyper(), Y, X, 3)
    np.testing.assert_allclose(np.sqrt(var), [0.2, 0.05, 0.2 / 9])
    assert np.all(mean == 0)


def test_minnesota_cross_and_predictor_scaling(rng):
    y = rng.standard_normal((300, 2)) * [1.0, 4.0]
    w = rng.standard_normal((300, 1)) * 2.0
    Y, X = build_design(y, 1, w)
    _, var = minnesota_moments(MinnesotaHyper(), Y, X, 1)
    std = np.sqrt(var).reshape(2, 3)
    ratio = std[0, 1] / std[1, 0]  # (s0/s1) / (s1/s0)
    assert ratio == pytest.approx((1 / 4) ** 2, rel=0.15)
    assert std[0, 0] == std[1, 1] == pytest.approx(0.2)
    s_w = X[:, 2].std(ddof=1)
    assert std[1, 2] / std[0, 2] == pytest.approx(4.0, rel=0.15)
    assert std[0, 2] < 0.2 * 0.5 * 1.2 / s_w


def test_tight_prior_shrinks_to_zero(rng, simulate_var):
    y = simulate_var(COEFS, SIGMA, 300, rng)
    Y, X = build_design(y, 2)
    spec = small("CONST", prior=MinnesotaHyper(lambda1=1e-4))
    d = sample_bvar_const(spec, Y, X, make_rng(1))
    assert np.max(np.abs(d.beta.mean(axis=0))) < 1e-3


def test_diffuse_prior_matches_least_squares(rng, simulate_var):
    y = simulate_var(COEFS, SIGMA, 3000, rng)
    Y, X = build_design(y, 2)
    ols = np.linalg.lstsq(X, Y, rcond=None)[0].T.ravel()
    spec = small("CONST", n_iter=400, n_burn=100, prior=MinnesotaHyper(lambda1=1e3))
    post = sample_bvar_const(spec, Y, X, make_rng(2)).beta.mean(axis=0)
    np.testing.assert_allclose(post, ols, atol=0.01)


# --- triangular factorization ----------------------------------------------

@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_triangular_factorization_round_trip(n, seed):
    a = np.random.default_rng(seed).standard_normal((n, n + 3))
    sigma = a @ a.T + 0.1 * np.eye(n)
    A, lam = triangular_factorization(sigma)
    np.testing.assert_allclose(np.diag(A), 1.0)
    assert np.all(np.triu(A, 1) == 0)
    assert np.all(lam > 0)
    np.testing.assert_allclose(reduced_form_covariance(A, lam), sigma, rtol=1e-9, atol=1e-9)


# --- samplers --------------------------------------------------------------

@pytest.fixture
def var_data(rng, simulate_var):
    return build_design(simulate_var(COEFS, SIGMA, 250, rng), 2)


@pytest.mark.parametrize("vol", ["CONST", "SV", "GARCH", "SVT"])
def test_sampler_shapes_and_determinism(vol, var_data):
    Y, X = var_data
    spec = small(vol)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        a = sample_posterior(spec, Y, X, make_rng(5, 1))
        b = sample_posterior(spec, Y, X, make_rng(5, 1))
    assert a.beta.shape == (40, 2 * 4)
    assert a.coefficient_matrices().shape == (40, 2, 4)
    assert a.beta.tobytes() == b.beta.tobytes()
    for key in a.vol:
        assert np.array_equal(a.vol[key], b.vol[key])


def test_sv_draw_structure(var_data):
    Y, X = var_data
    d = sample_bvar_sv(small("SV", keep_paths=True), Y, X, make_rng(6))
    A = d.vol["A"]
    assert np.all(A[:, [0, 1], [0, 1]] == 1.0)
    assert np.all(A[:, 0, 1] == 0.0)
    assert d.vol["log_lambda"].shape == (40, Y.shape[0], 2)
    np.testing.assert_allclose(d.vol["log_lambda"][:, -1], d.vol["log_lambda_last"])
    assert np.all(np.linalg.eigvalsh(d.vol["phi"]) > 0)


def test_svt_scales_and_grid(var_data):
    Y, X = var_data
    d = sample_bvar_svt(small("SVT"), Y, X, make_rng(7))
    assert np.all(np.isin(d.vol["eta"], ETA_GRID))
    assert np.all(d.vol["w_mean"] > 0)


def test_garch_draws_respect_constraint(var_data):
    Y, X = var_data
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        d = sample_bvar_garch(small("GARCH", n_iter=300, n_burn=100), Y, X, make_rng(8))
    b, g, om = d.vol["b"], d.vol["g"], d.vol["omega"]
    assert np.all(b + g < 1) and np.all(b >= 0) and np.all(g >= 0) and np.all(om > 0)
    c = d.vol["corr"]
    assert np.all(c[:, [0, 1], [0, 1]] == 1.0)
    assert np.all(np.abs(c[:, 0, 1]) < 1)
    assert 0.0 < d.diagnostics["beta_acceptance"] <= 1.0


def test_garch_variance_recursion():
    e = np.array([1.0, -2.0, 0.5, 0.0])
    h = garch_variance_path(e, 0.1, 0.2, 0.7, 1.5)
    ref = [1.5]
    for t in range(1, 4):
        ref.append(0.1 + 0.2 * e[t - 1] ** 2 + 0.7 * ref[-1])
    np.testing.assert_allclose(h, ref, rtol=1e-14)


def test_ar_sampler_is_univariate(rng):
    y = np.zeros(400)
    for t in range(1, 400):
        y[t] = 0.5 * y[t - 1] + rng.standard_normal()
    d = sample_ar(y, 1, ModelSpec.from_id("BAR1", n_iter=300, n_burn=100), make_rng(9))
    assert d.beta.shape == (200, 1)
    assert d.beta.mean() == pytest.approx(0.5, abs=0.1)
    assert d.vol["sigma"].mean() == pytest.approx(1.0, abs=0.2)


# --- lag selection ---------------------------------------------------------

def test_bic_picks_true_order(rng, simulate_var):
    y = simulate_var([[[0.5, 0.0], [0.0, 0.4]]], SIGMA, 2000, rng)
    assert int(np.argmin(bic_lag_scan(y, 5))) + 1 == 1
    y2 = simulate_var(COEFS, SIGMA, 4000, rng)
    assert int(np.argmin(bic_lag_scan(y2, 5))) + 1 == 2


def test_bic_white_noise_prefers_short_lags(rng):
    scores = bic_lag_scan(rng.standard_normal((1000, 3)), 4)
    assert np.all(np.diff(scores) > 0)


# --- further oracles -------------------------------------------------------

def test_cross_equals_own_with_unit_lambda2(rng):
    y = rng.standard_normal((500, 2))
    Y, X = build_design(y, 2)
    # identical series give identical AR residual scales
    Y = np.column_stack([Y[:, 0], Y[:, 0]])
    X = np.column_stack([X[:, 0], X[:, 0], X[:, 2], X[:, 2]])
    _, var = minnesota_moments(MinnesotaHyper(lambda2=1.0), Y, X, 2)
    std = np.sqrt(var).reshape(2, 4)
    assert std[0, 1] == pytest.approx(std[0, 0]) and std[0, 3] == pytest.approx(std[0, 2])


def test_univariate_const_matches_ar_sampler(rng):
    y = np.zeros(600)
    for t in range(1, 600):
        y[t] = 0.3 * y[t - 1] + rng.standard_normal()
    spec = ModelSpec(family="AR", lags=1, n_iter=2000, n_burn=500)
    a = sample_ar(y, 1, spec, make_rng(1))
    Y, X = build_design(y, 1)
    b = sample_bvar_const(spec, Y, X, make_rng(2))
    assert a.beta.mean() == pytest.approx(b.beta.mean(), abs=0.01)
    assert a.vol["sigma"].mean() == pytest.approx(b.vol["sigma"].mean(), rel=0.02)


def test_ar_oracles():
    rng = np.random.default_rng(30)
    spec = ModelSpec(family="AR", lags=3, n_iter=800, n_burn=200)
    d = sample_ar(rng.standard_normal(2000), 3, spec, make_rng(3))
    assert np.all(np.abs(d.beta.mean(axis=0)) < 0.05)
    y = np.zeros(2000)
    for t in range(1, 2000):
        y[t] = 0.5 * y[t - 1] + rng.standard_normal()
    d = sample_ar(y, 1, ModelSpec.from_id("BAR1", n_iter=800, n_burn=200), make_rng(4))
    assert d.beta.mean() == pytest.approx(0.5, abs=0.06)


def test_prior_dominance_is_monotone(rng, simulate_var):
    Y, X = build_design(simulate_var(COEFS, SIGMA, 400, rng), 2)
    norms = []
    for lam in (1e-3, 1e-2, 0.1, 1.0):
        d = sample_bvar_const(small("CONST", n_iter=300, n_burn=100, prior=MinnesotaHyper(lambda1=lam)),
                              Y, X, make_rng(5))
        norms.append(np.linalg.norm(d.beta.mean(axis=0)))
    assert norms == sorted(norms)


def test_diffuse_prior_relative_error_at_T2000(rng, simulate_var):
    coefs = [[[0.5, 0.2], [0.1, 0.4]]]
    Y, X = build_design(simulate_var(coefs, SIGMA, 2000, rng), 1)
    ols = np.linalg.lstsq(X, Y, rcond=None)[0].T.ravel()
    spec = ModelSpec(lags=1, n_iter=3000, n_burn=500, prior=MinnesotaHyper(lambda1=1e3))
    post = sample_bvar_const(spec, Y, X, make_rng(6)).beta.mean(axis=0)
    np.testing.assert_allclose(post, ols, rtol=0.02)


def sv_data(rng, log_var, N=2):
    T = log_var.shape[0]
    y = np.zeros((T, N))
    for t in range(1, T):
        y[t] = 0.1 * y[t - 1] + np.exp(log_var[t] / 2) * rng.standard_normal(N)
    return build_design(y, 1)


@pytest.mark.slow
def test_sv_constant_volatility_paths_are_flat(rng):
    Y, X = sv_data(rng, np.zeros((800, 2)))
    d = sample_bvar_sv(ModelSpec(volatility="SV", lags=1, n_iter=1200, n_burn=400), Y, X, make_rng(7))
    assert np.all(d.vol["log_lambda_mean"].std(axis=0) < 0.3)


@pytest.mark.slow
def test_sv_spike_is_detected(rng):
    h = np.zeros((800, 2))
    h[400:460] = 3.0
    Y, X = sv_data(rng, h)
    d = sample_bvar_sv(ModelSpec(volatility="SV", lags=1, n_iter=1200, n_burn=400), Y, X, make_rng(8))
    est = d.vol["log_lambda_mean"]
    for i in range(2):
        assert est[405:455, i].mean() - est[300:390, i].mean() >= 1.5


@pytest.fixture(scope="module")
def garch_null_draws():
    y = np.random.default_rng(31).standard_normal((1200, 2)) * [1.0, 2.0]
    Y, X = build_design(y, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return sample_bvar_garch(ModelSpec(volatility="GARCH", lags=1, n_iter=2000, n_burn=800),
                                 Y, X, make_rng(9))


@pytest.mark.slow
def test_garch_null_case(garch_null_draws):
    d = garch_null_draws
    assert np.all(d.vol["b"].mean(axis=0) < 0.15)
    assert np.all(d.vol["h_mean"].std(axis=0) / d.vol["h_mean"].mean(axis=0) < 0.25)


@pytest.mark.slow
@pytest.mark.xfail(reason="g is not identified once b = 0; under a flat prior it drifts along the ridge",
                   strict=False)
def test_garch_null_case_persistence(garch_null_draws):
    assert np.all(garch_null_draws.vol["g"].mean(axis=0) < 0.15)


def test_bic_recovers_var2_across_replications(simulate_var):
    coefs = [[[0.3, 0.1], [0.0, 0.2]], [[0.2, 0.0], [0.0, 0.2]]]
    hits = 0
    for k in range(50):
        y = simulate_var(coefs, SIGMA, 800, np.random.default_rng([77, k]))
        hits += int(np.argmin(bic_lag_scan(y, 4))) + 1 == 2
    assert hits >= 45


def test_residual_determinant_never_increases(rng):
    y = rng.standard_normal((300, 2))
    t = 300 - 5
    dets = []
    for p in range(1, 6):
        X = np.hstack([y[5 - lag:300 - lag] for lag in range(1, p + 1)])
        r = y[5:] - X @ np.linalg.lstsq(X, y[5:], rcond=None)[0]
        dets.append(np.linalg.det(r.T @ r / t))
    assert np.all(np.diff(dets) <= 1e-12)
    # the scan itself adds N^2 log T per lag on top of the fit term
    s = bic_lag_scan(y, 5)
    np.testing.assert_allclose(np.diff(s) - 4 * np.log(t), t * np.diff(np.log(dets)), rtol=1e-9, atol=1e-9)


def test_sv_reduced_form_identity(var_data):
    Y, X = var_data
    d = sample_bvar_sv(small("SV", keep_paths=True), Y, X, make_rng(10))
    for j in (0, 17, 39):
        for t in (0, 100, Y.shape[0] - 1):
            lam = np.exp(d.vol["log_lambda"][j, t])
            sigma = reduced_form_covariance(d.vol["A"][j], lam)
            np.linalg.cholesky(sigma)
            A2, lam2 = triangular_factorization(sigma)
            np.testing.assert_allclose(A2, d.vol["A"][j], atol=1e-8)
            np.testing.assert_allclose(lam2, lam, rtol=1e-8)


def test_svt_scale_conditional_mean_tends_to_one():
    # Gamma(eta/2, rate eta/2) has mean 1 and vanishing variance as eta grows
    rng = make_rng(11)
    for eta in (40.0, 1e6):
        w = rng.gamma(eta / 2, 2 / eta, 200_000)
        assert np.all(w > 0)
        assert w.mean() == pytest.approx(1.0, abs=0.01)
    assert w.std() < 0.01
