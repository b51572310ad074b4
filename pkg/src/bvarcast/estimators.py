"""Posterior samplers for Bayesian VAR/VARX models and univariate AR models.

Coefficients are stacked equation by equation: with ``K`` regressors per
equation, ``beta[i*K:(i+1)*K]`` holds equation ``i``. Regressor rows are
``[y_{t-1}, ..., y_{t-p}, W_{t-1}]`` (lag blocks, series order inside each
block, predictors last). There is no intercept.

Volatility schemes
------------------
CONST
    ``eps_t ~ N(0, Sigma)``.
SV
    ``eps_t = A^{-1} Lambda_t^{1/2} e_t`` with unit lower-triangular ``A`` and
    random-walk log variances driven by ``N(0, Phi)`` increments.
SVT
    SV with multivariate Student-t ``e_t`` written as a Gamma scale mixture,
    ``e_t | w_t ~ N(0, I / w_t)``, ``w_t ~ Gamma(eta/2, eta/2)``.
GARCH
    Constant conditional correlation: ``H_t = D_t R D_t`` with univariate
    GARCH(1,1) variances on the diagonal of ``D_t**2``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special
from scipy.linalg import solve_triangular
from scipy.signal import lfilter

from .errors import DataError, NotPositiveDefiniteError, SamplerError
from .kernels import (
    OMORI_MIXTURE,
    cholesky_lower,
    ffbs_log_volatility,
    log_squared,
    sample_inverse_wishart,
    sample_mixture_indicators,
    sample_mvn_precision,
)
from .market_data import PredictorPanel, ReturnPanel

FAMILIES = ("VAR", "VARX", "AR")
VOLATILITIES = ("CONST", "SV", "GARCH", "SVT")
ETA_GRID = np.arange(3, 41, dtype=float)

A_PRIOR_VAR = 10.0
PHI_PRIOR_SCALE = 0.01
LOG_VOL_PRIOR_VAR = 4.0


@dataclass(frozen=True)
class MinnesotaHyper:
    """Minnesota prior hyperparameters.

    Prior std of the lag-``l`` coefficient on series ``j`` in equation ``i`` is
    ``lambda1 / l**lambda3``, times ``lambda2 * sigma_i / sigma_j`` when
    ``i != j``. Predictor coefficients get ``lambda1 * lambda4 * sigma_i / sigma_W``.
    """

    lambda1: float = 0.2
    lambda2: float = 0.5
    lambda3: float = 2.0
    lambda4: float = 0.5
    own_mean: float = 0.0

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda4"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda3 < 0:
            raise ValueError("lambda3 must be non-negative")


@dataclass(frozen=True)
class ModelSpec:
    family: str = "VAR"
    volatility: str = "CONST"
    lags: int = 3
    n_iter: int = 6000
    n_burn: int = 1000
    prior: MinnesotaHyper = field(default_factory=MinnesotaHyper)
    seed: int = 0
    keep_paths: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.volatility not in VOLATILITIES:
            raise ValueError(f"unknown volatility scheme {self.volatility!r}")
        if self.family == "AR" and self.volatility != "CONST":
            raise ValueError("AR models support constant volatility only")
        if self.lags < 1:
            raise ValueError("lags must be >= 1")
        if not 0 <= self.n_burn < self.n_iter:
            raise ValueError("need 0 <= n_burn < n_iter")

    @property
    def n_keep(self) -> int:
        return self.n_iter - self.n_burn

    @property
    def model_id(self) -> str:
        if self.family == "AR":
            return f"BAR{self.lags}"
        base = "BVARX" if self.family == "VARX" else "BVAR"
        suffix = {"CONST": "", "SV": "-SV", "GARCH": "-GARCH", "SVT": "-SVt"}[self.volatility]
        return base + suffix

    @classmethod
    def from_id(cls, model_id: str, **kw) -> "ModelSpec":
        """Parse ids such as ``BVAR``, ``BVARX-SVt`` or ``BAR1``."""
        mid = model_id.strip()
        if mid.upper().startswith("BAR"):
            digits = mid[3:].strip("()")
            return cls(family="AR", volatility="CONST", lags=int(digits or 1), **kw)
        head, _, tail = mid.partition("-")
        family = {"BVAR": "VAR", "BVARX": "VARX"}.get(head.upper())
        vol = {"": "CONST", "SV": "SV", "GARCH": "GARCH", "SVT": "SVT"}.get(tail.upper())
        if family is None or vol is None:
            raise ValueError(f"unknown model id {model_id!r}")
        return cls(family=family, volatility=vol, **kw)


@dataclass
class PosteriorDrawSet:
    """Retained MCMC output.

    ``vol`` holds scheme-specific arrays, leading axis = draw unless noted:

    * CONST: ``sigma`` (M, N, N)
    * SV/SVT: ``A`` (M, N, N), ``phi`` (M, N, N), ``log_lambda_last`` (M, N),
      ``log_lambda_mean`` (T, N); SVT adds ``eta`` (M,) and ``w_mean`` (T,)
    * GARCH: ``omega``, ``b``, ``g``, ``h_last``, ``resid_last`` (M, N),
      ``corr`` (M, N, N), ``h_mean`` (T, N)

    With ``keep_paths`` the full ``log_lambda`` or ``h`` paths (M, T, N) are
    kept as well.
    """

    spec: ModelSpec
    n_series: int
    n_regressors: int
    beta: np.ndarray
    vol: dict[str, np.ndarray]
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.beta.shape[0]

    def coefficient_matrices(self) -> np.ndarray:
        """Coefficients as (M, N, K): row ``i`` is equation ``i``."""
        return self.beta.reshape(self.n_draws, self.n_series, self.n_regressors)


# ---------------------------------------------------------------------------
# design and prior

def build_design(panel, p: int, predictors: PredictorPanel | None = None):
    """Response and regressor matrices ``(Y, X)`` for a VAR(p)/VARX(p).

    ``panel`` may be a :class:`ReturnPanel` or a (T, N) array; predictors
    enter at lag one.
    """
    if p < 1:
        raise DataError("lag order must be >= 1")
    if isinstance(panel, ReturnPanel):
        y = panel.values
        if predictors is not None and tuple(predictors.dates) != tuple(panel.dates):
            raise DataError("predictor dates do not match the return panel")
    else:
        y = np.asarray(panel, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
    if predictors is not None:
        w = predictors.values if isinstance(predictors, ReturnPanel) else np.asarray(predictors, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.shape[0] != y.shape[0]:
            raise DataError("predictor rows do not match the return panel")
    t, n = y.shape
    k = n * p + (w.shape[1] if predictors is not None else 0)
    if t <= p + k:
        raise DataError(f"not enough observations: T={t} must exceed p + K = {p + k}")
    blocks = [y[p - lag:t - lag] for lag in range(1, p + 1)]
    if predictors is not None:
        blocks.append(w[p - 1:t - 1])
    return y[p:].copy(), np.hstack(blocks)


def _split_design(Y, X, p):
    n = Y.shape[1]
    n_exog = X.shape[1] - n * p
    if n_exog < 0:
        raise DataError("design has fewer columns than N * p")
    return n, n_exog


def ar_residual_scales(Y, X, p) -> np.ndarray:
    """Residual std of a least-squares AR(p) per series, from own-lag columns."""
    n, _ = _split_design(Y, X, p)
    out = np.empty(n)
    for i in range(n):
        own = X[:, [lag * n + i for lag in range(p)]]
        coef, *_ = np.linalg.lstsq(own, Y[:, i], rcond=None)
        resid = Y[:, i] - own @ coef
        out[i] = math.sqrt(resid @ resid / max(len(resid) - p, 1))
    return out


def minnesota_moments(hyper: MinnesotaHyper, Y, X, p: int):
    """Prior mean and prior variance (diagonal) of the stacked coefficients."""
    n, n_exog = _split_design(Y, X, p)
    sigma = ar_residual_scales(Y, X, p)
    if np.any(~(sigma > 0)):
        raise DataError("zero residual variance in a univariate AR fit")
    if n_exog:
        sigma_w = X[:, n * p:].std(axis=0, ddof=1)
        if np.any(~(sigma_w > 0)):
            raise DataError("a predictor has zero variance in the estimation window")
    k = X.shape[1]
    std = np.empty((n, k))
    for i in range(n):
        for lag in range(1, p + 1):
            for j in range(n):
                s = hyper.lambda1 / lag**hyper.lambda3
                if i != j:
                    s *= hyper.lambda2 * sigma[i] / sigma[j]
                std[i, (lag - 1) * n + j] = s
        if n_exog:
            std[i, n * p:] = hyper.lambda1 * hyper.lambda4 * sigma[i] / sigma_w
    mean = np.zeros((n, k))
    if hyper.own_mean:
        for i in range(n):
            mean[i, i] = hyper.own_mean
    return mean.ravel(), (std**2).ravel()


# ---------------------------------------------------------------------------
# shared conditional for beta

def _gls_moments(Y, X, prec_t, prior_mean, prior_var):
    """Posterior precision and linear term for beta given per-period ``Sigma_t^{-1}``.

    ``prec_t`` is (N, N) for a constant covariance or (T, N, N).
    """
    n, k = Y.shape[1], X.shape[1]
    precision = np.diag(1.0 / prior_var)
    linear = prior_mean / prior_var
    if prec_t.ndim == 2:
        xtx = X.T @ X
        precision += np.kron(prec_t, xtx)
        linear += (X.T @ Y @ prec_t).T.ravel()
    else:
        for i in range(n):
            for j in range(i, n):
                blk = (X * prec_t[:, i, j, None]).T @ X
                precision[i * k:(i + 1) * k, j * k:(j + 1) * k] += blk
                if j != i:
                    precision[j * k:(j + 1) * k, i * k:(i + 1) * k] += blk.T
        sy = np.einsum("tij,tj->ti", prec_t, Y)
        linear += (X.T @ sy).T.ravel()
    return precision, linear


def _draw_beta(rng, Y, X, prec_t, prior_mean, prior_var):
    precision, linear = _gls_moments(Y, X, prec_t, prior_mean, prior_var)
    try:
        beta, _ = sample_mvn_precision(rng, precision, linear)
    except NotPositiveDefiniteError as exc:
        raise SamplerError("posterior precision of beta is singular") from exc
    return beta


def _residuals(Y, X, beta):
    n, k = Y.shape[1], X.shape[1]
    return Y - X @ beta.reshape(n, k).T


def _ols_start(Y, X, prior_var):
    # ridge-regularized least squares, the prior-mean-zero posterior mode under Sigma = I
    k = X.shape[1]
    n = Y.shape[1]
    coef = np.empty((n, k))
    for i in range(n):
        pv = prior_var[i * k:(i + 1) * k]
        coef[i] = np.linalg.solve(X.T @ X + np.diag(1.0 / pv), X.T @ Y[:, i])
    return coef.ravel()


def _check_inputs(Y, X):
    if Y.ndim != 2 or X.ndim != 2 or Y.shape[0] != X.shape[0]:
        raise DataError("Y and X must be 2-D with equal row counts")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
        raise DataError("design contains non-finite values")


# ---------------------------------------------------------------------------
# CONST

def sample_bvar_const(spec: ModelSpec, Y, X, rng) -> PosteriorDrawSet:
    """Gibbs sampler for a homoskedastic BVAR under the Minnesota prior.

    Alternates ``beta | Sigma`` (normal) and ``Sigma | beta`` (inverse-Wishart
    with prior scale ``I_N`` and ``N + 2`` degrees of freedom).
    """
    Y, X = np.asarray(Y, float), np.asarray(X, float)
    _check_inputs(Y, X)
    t, n = Y.shape
    k = X.shape[1]
    b0, v0 = minnesota_moments(spec.prior, Y, X, spec.lags)
    beta = _ols_start(Y, X, v0)
    keep_beta = np.empty((spec.n_keep, n * k))
    keep_sigma = np.empty((spec.n_keep, n, n))
    prior_scale, prior_dof = np.eye(n), n + 2
    for it in range(spec.n_iter):
        e = _residuals(Y, X, beta)
        sigma = sample_inverse_wishart(rng, prior_scale + e.T @ e, prior_dof + t)
        beta = _draw_beta(rng, Y, X, np.linalg.inv(sigma), b0, v0)
        if it >= spec.n_burn:
            keep_beta[it - spec.n_burn] = beta
            keep_sigma[it - spec.n_burn] = sigma
    return PosteriorDrawSet(spec, n, k, keep_beta, {"sigma": keep_sigma})


def sample_ar(series, p: int, spec: ModelSpec, rng) -> PosteriorDrawSet:
    """Bayesian AR(p) on a single series (the N = 1 case of the const sampler)."""
    y = np.asarray(series, dtype=float).ravel()
    if len(y) <= 2 * p + 2:
        raise DataError(f"AR({p}) needs more than {2 * p + 2} observations")
    spec = replace(spec, family="AR", volatility="CONST", lags=p)
    Y, X = build_design(y, p)
    return sample_bvar_const(spec, Y, X, rng)


# ---------------------------------------------------------------------------
# SV / SVT

def triangular_factorization(sigma):
    """Split SPD ``sigma`` into unit lower-triangular ``A`` and variances ``lam``.

    Inverse of :func:`reduced_form_covariance`: ``sigma = A^{-1} diag(lam) A^{-T}``.
    """
    chol = cholesky_lower(sigma)
    d = np.diag(chol)
    a_inv = chol / d
    return solve_triangular(a_inv, np.eye(len(d)), lower=True, unit_diagonal=True), d**2


def reduced_form_covariance(A, lam):
    a_inv = np.linalg.inv(A)
    return a_inv @ np.diag(lam) @ a_inv.T


def _draw_A(rng, eps, var_t):
    """Free below-diagonal elements of ``A`` by weighted regressions.

    Equation ``i``: ``eps_i = -sum_{j<i} a_ij eps_j + sqrt(var_t[:, i]) e``.
    """
    n = eps.shape[1]
    A = np.eye(n)
    for i in range(1, n):
        z = -eps[:, :i]
        wts = 1.0 / var_t[:, i]
        precision = np.eye(i) / A_PRIOR_VAR + (z * wts[:, None]).T @ z
        linear = (z * wts[:, None]).T @ eps[:, i]
        A[i, :i], _ = sample_mvn_precision(rng, precision, linear)
    return A


def _eta_log_weights(w):
    half = ETA_GRID / 2.0
    t = len(w)
    return (t * (half * np.log(half) - special.gammaln(half))
            + (half - 1.0) * np.log(w).sum() - half * w.sum())


def _sample_sv_family(spec: ModelSpec, Y, X, rng, student: bool) -> PosteriorDrawSet:
    Y, X = np.asarray(Y, float), np.asarray(X, float)
    _check_inputs(Y, X)
    t, n = Y.shape
    k = X.shape[1]
    b0, v0 = minnesota_moments(spec.prior, Y, X, spec.lags)
    mix = OMORI_MIXTURE

    beta = _ols_start(Y, X, v0)
    eps = _residuals(Y, X, beta)
    A = np.eye(n)
    prior_mean = np.log(Y.var(axis=0, ddof=1))
    log_lam = np.tile(np.log(eps.var(axis=0, ddof=1)), (t, 1))
    phi = np.eye(n) * 0.01
    w = np.ones(t)
    eta = ETA_GRID[-1]

    m = spec.n_keep
    keep = {
        "A": np.empty((m, n, n)),
        "phi": np.empty((m, n, n)),
        "log_lambda_last": np.empty((m, n)),
        "log_lambda_mean": np.zeros((t, n)),
    }
    if student:
        keep["eta"] = np.empty(m)
        keep["w_mean"] = np.zeros(t)
    if spec.keep_paths:
        keep["log_lambda"] = np.empty((m, t, n))
    keep_beta = np.empty((m, n * k))

    for it in range(spec.n_iter):
        lam = np.exp(log_lam)
        # beta | A, Lambda, w:  Sigma_t^{-1} = w_t A' Lambda_t^{-1} A
        prec_t = np.einsum("ki,tk,kj->tij", A, w[:, None] / lam, A, optimize=True)
        beta = _draw_beta(rng, Y, X, prec_t, b0, v0)
        eps = _residuals(Y, X, beta)

        A = _draw_A(rng, eps, lam / w[:, None])
        ortho = eps @ A.T

        if student:
            shape = (eta + n) / 2.0
            rate = (eta + np.sum(ortho**2 / lam, axis=1)) / 2.0
            w = rng.gamma(shape, 1.0 / rate)
            logp = _eta_log_weights(w)
            prob = np.exp(logp - logp.max())
            eta = ETA_GRID[np.searchsorted(np.cumsum(prob), rng.random() * prob.sum())]

        y_star = log_squared(ortho * np.sqrt(w)[:, None])
        s = sample_mixture_indicators(rng, y_star, log_lam, mix)
        for i in range(n):
            log_lam[:, i] = ffbs_log_volatility(
                rng, y_star[:, i], phi[i, i], mix, (prior_mean[i], LOG_VOL_PRIOR_VAR), s[:, i],
            )
        inc = np.diff(log_lam, axis=0)
        phi = sample_inverse_wishart(rng, PHI_PRIOR_SCALE * np.eye(n) + inc.T @ inc, n + 3 + t - 1)

        if it >= spec.n_burn:
            j = it - spec.n_burn
            keep_beta[j] = beta
            keep["A"][j] = A
            keep["phi"][j] = phi
            keep["log_lambda_last"][j] = log_lam[-1]
            keep["log_lambda_mean"] += log_lam / m
            if student:
                keep["eta"][j] = eta
                keep["w_mean"] += w / m
            if spec.keep_paths:
                keep["log_lambda"][j] = log_lam
    return PosteriorDrawSet(spec, n, k, keep_beta, keep)


def sample_bvar_sv(spec: ModelSpec, Y, X, rng) -> PosteriorDrawSet:
    """Gibbs sampler for the BVAR with random-walk stochastic volatility.

    Each sweep draws beta by GLS given ``Sigma_t``, the free elements of
    ``A`` by weighted regressions, every log-variance path by mixture FFBS
    and ``Phi`` from its inverse-Wishart conditional.
    """
    return _sample_sv_family(spec, Y, X, rng, student=False)


def sample_bvar_svt(spec: ModelSpec, Y, X, rng) -> PosteriorDrawSet:
    """SV sampler with multivariate Student-t observation errors.

    Adds per-period scales ``w_t`` (Gamma conditional) and degrees of
    freedom ``eta`` drawn exactly on the grid 3..40.
    """
    return _sample_sv_family(spec, Y, X, rng, student=True)


# ---------------------------------------------------------------------------
# GARCH

def garch_variance_path(resid, omega, b, g, h1):
    """``h_t = omega + b * resid_{t-1}**2 + g * h_{t-1}`` started at ``h1``."""
    resid = np.asarray(resid, dtype=float)
    x = omega + b * resid[:-1] ** 2
    rest = lfilter([1.0], [1.0, -g], x, zi=[g * h1])[0]
    return np.concatenate([[h1], rest])


def _garch_loglik(sum_log_h, u, r_inv, r_logdet):
    # -0.5 * sum_t [ log det(D_t R D_t) + u_t' R^{-1} u_t ]
    quad = np.einsum("ti,ij,tj->", u, r_inv, u)
    return -0.5 * (sum_log_h + len(u) * r_logdet + quad)


class _GarchState:
    """Residuals, GARCH parameters and the implied variance paths."""

    def __init__(self, eps, omega, b, g):
        self.omega, self.b, self.g = omega.copy(), b.copy(), g.copy()
        self.eps = eps
        self.h1 = eps.var(axis=0, ddof=1)
        self.h = np.column_stack([
            garch_variance_path(eps[:, i], self.omega[i], self.b[i], self.g[i], self.h1[i])
            for i in range(eps.shape[1])
        ])

    def loglik(self, corr_inv, corr_logdet, h=None):
        h = self.h if h is None else h
        u = self.eps / np.sqrt(h)
        return _garch_loglik(np.log(h).sum(), u, corr_inv, corr_logdet)


def _garch_prec(h, corr_inv):
    s = 1.0 / np.sqrt(h)
    return corr_inv[None, :, :] * s[:, :, None] * s[:, None, :]


def _logdet_inv(corr):
    chol = cholesky_lower(corr, check_symmetric=False)
    inv = np.linalg.inv(corr)
    return inv, 2.0 * np.log(np.diag(chol)).sum()


def _in_garch_region(theta):
    omega, b, g = theta
    return omega > 0 and b >= 0 and g >= 0 and b + g < 1


def _adapt(scale, accepted, tried):
    rate = accepted / max(tried, 1)
    if rate < 0.25:
        return scale * 0.8
    if rate > 0.40:
        return scale * 1.25
    return scale


def sample_bvar_garch(spec: ModelSpec, Y, X, rng) -> PosteriorDrawSet:
    """Metropolis-within-Gibbs for the BVAR with CCC-GARCH(1,1) errors.

    Beta is proposed from its GLS conditional at the current variance paths
    and accepted with a Metropolis-Hastings correction, since the paths
    themselves depend on beta through the residuals. ``(omega_i, b_i, g_i)``
    move by random-walk Metropolis restricted to ``b_i + g_i < 1``; the
    correlation matrix moves one off-diagonal element at a time. Proposal
    scales adapt during burn-in toward 25-40% acceptance and are frozen
    afterwards.
    """
    Y, X = np.asarray(Y, float), np.asarray(X, float)
    _check_inputs(Y, X)
    t, n = Y.shape
    k = X.shape[1]
    b0, v0 = minnesota_moments(spec.prior, Y, X, spec.lags)

    beta = _ols_start(Y, X, v0)
    eps = _residuals(Y, X, beta)
    var0 = eps.var(axis=0, ddof=1)
    state = _GarchState(eps, 0.1 * var0, np.full(n, 0.1), np.full(n, 0.8))
    corr = np.eye(n)
    corr_inv, corr_logdet = np.eye(n), 0.0

    theta_scale = np.ones(n) * 0.5
    theta_cov = [np.diag([(0.05 * v) ** 2, 0.02**2, 0.02**2]) for v in var0]
    theta_hist = [[] for _ in range(n)]
    theta_acc = np.zeros(n)
    corr_scale = 0.05
    corr_acc = corr_try = 0
    beta_acc = 0
    window_acc = np.zeros(n)
    window_corr = [0, 0]
    burn_acc = np.zeros(n)

    m = spec.n_keep
    keep = {name: np.empty((m, n)) for name in ("omega", "b", "g", "h_last", "resid_last")}
    keep["corr"] = np.empty((m, n, n))
    keep["h_mean"] = np.zeros((t, n))
    if spec.keep_paths:
        keep["h"] = np.empty((m, t, n))
    keep_beta = np.empty((m, n * k))

    def log_prior_beta(bv):
        return -0.5 * np.sum((bv - b0) ** 2 / v0)

    def proposal_logpdf(bv, precision, linear):
        chol = cholesky_lower(precision, check_symmetric=False)
        mean = np.linalg.solve(precision, linear)
        d = chol.T @ (bv - mean)
        return np.log(np.diag(chol)).sum() - 0.5 * d @ d

    for it in range(spec.n_iter):
        burning = it < spec.n_burn

        # beta: independence proposal from the GLS conditional at current h
        prec, lin = _gls_moments(Y, X, _garch_prec(state.h, corr_inv), b0, v0)
        try:
            prop, _ = sample_mvn_precision(rng, prec, lin)
        except NotPositiveDefiniteError as exc:
            raise SamplerError("posterior precision of beta is singular") from exc
        cur_ll = state.loglik(corr_inv, corr_logdet)
        new_state = _GarchState(_residuals(Y, X, prop), state.omega, state.b, state.g)
        new_ll = new_state.loglik(corr_inv, corr_logdet)
        prec_new, lin_new = _gls_moments(Y, X, _garch_prec(new_state.h, corr_inv), b0, v0)
        log_ratio = (new_ll + log_prior_beta(prop) + proposal_logpdf(beta, prec_new, lin_new)
                     - cur_ll - log_prior_beta(beta) - proposal_logpdf(prop, prec, lin))
        if np.log(rng.random()) < log_ratio:
            beta, state = prop, new_state
            beta_acc += 1

        # GARCH parameters, one series at a time
        ll = state.loglik(corr_inv, corr_logdet)
        for i in range(n):
            theta = np.array([state.omega[i], state.b[i], state.g[i]])
            chol = np.linalg.cholesky(theta_cov[i])
            cand = theta + theta_scale[i] * chol @ rng.standard_normal(3)
            u = rng.random()
            if _in_garch_region(cand):
                h_new = state.h.copy()
                h_new[:, i] = garch_variance_path(state.eps[:, i], *cand, state.h1[i])
                ll_new = state.loglik(corr_inv, corr_logdet, h_new)
                if np.log(u) < ll_new - ll:
                    state.omega[i], state.b[i], state.g[i] = cand
                    state.h = h_new
                    ll = ll_new
                    theta_acc[i] += 1
                    window_acc[i] += 1
                    if burning:
                        burn_acc[i] += 1
            if burning:
                theta_hist[i].append([state.omega[i], state.b[i], state.g[i]])

        # correlation matrix
        if n > 1:
            sd = np.sqrt(state.h)
            u_std = state.eps / sd
            cross = u_std.T @ u_std
            log_h = np.log(state.h).sum()
            for i in range(1, n):
                for j in range(i):
                    cand = corr.copy()
                    cand[i, j] = cand[j, i] = corr[i, j] + corr_scale * rng.standard_normal()
                    corr_try += 1
                    window_corr[1] += 1
                    accept_u = rng.random()
                    if abs(cand[i, j]) >= 1:
                        continue
                    try:
                        cinv, cld = _logdet_inv(cand)
                    except NotPositiveDefiniteError:
                        continue
                    ll_new = -0.5 * (log_h + t * cld + np.sum(cinv * cross))
                    ll_cur = -0.5 * (log_h + t * corr_logdet + np.sum(corr_inv * cross))
                    if np.log(accept_u) < ll_new - ll_cur:
                        corr, corr_inv, corr_logdet = cand, cinv, cld
                        corr_acc += 1
                        window_corr[0] += 1

        if burning and (it + 1) % 50 == 0:
            theta_scale = np.array([_adapt(s, a, 50) for s, a in zip(theta_scale, window_acc)])
            window_acc[:] = 0
            if window_corr[1]:
                corr_scale = _adapt(corr_scale, window_corr[0], window_corr[1])
            window_corr = [0, 0]
            if it + 1 >= 200:
                for i in range(n):
                    hist = np.asarray(theta_hist[i][-500:])
                    cov = np.cov(hist.T) + np.diag([1e-8 * var0[i], 1e-8, 1e-8])
                    if np.all(np.linalg.eigvalsh(cov) > 0) and np.linalg.matrix_rank(cov) == 3:
                        theta_cov[i] = cov * (2.38**2 / 3)
                        theta_scale[i] = 1.0 if (it + 1) == 200 else theta_scale[i]

        if not burning:
            j = it - spec.n_burn
            keep_beta[j] = beta
            keep["omega"][j] = state.omega
            keep["b"][j] = state.b
            keep["g"][j] = state.g
            keep["corr"][j] = corr
            keep["h_last"][j] = state.h[-1]
            keep["resid_last"][j] = state.eps[-1]
            keep["h_mean"] += state.h / m
            if spec.keep_paths:
                keep["h"][j] = state.h

    diagnostics = {
        "beta_acceptance": beta_acc / spec.n_iter,
        "garch_acceptance": (theta_acc / spec.n_iter).tolist(),
        "corr_acceptance": corr_acc / corr_try if corr_try else None,
    }
    if spec.n_burn:
        low = burn_acc / spec.n_burn < 0.01
        if np.any(low):
            msg = f"GARCH acceptance below 1% during burn-in for series {np.flatnonzero(low).tolist()}"
            diagnostics["warning"] = msg
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return PosteriorDrawSet(spec, n, k, keep_beta, keep, diagnostics)


# ---------------------------------------------------------------------------

SAMPLERS = {
    "CONST": sample_bvar_const,
    "SV": sample_bvar_sv,
    "GARCH": sample_bvar_garch,
    "SVT": sample_bvar_svt,
}


def sample_posterior(spec: ModelSpec, Y, X, rng) -> PosteriorDrawSet:
    return SAMPLERS[spec.volatility](spec, Y, X, rng)


def bic_lag_scan(panel, max_p: int) -> np.ndarray:
    """BIC of least-squares VAR(p) fits for p = 1..max_p on a common sample.

    ``BIC = T log det(Sigma_hat) + k log T`` with ``k = N**2 p`` and the ML
    residual covariance; index ``p - 1`` holds lag ``p``.
    """
    y = panel.values if isinstance(panel, ReturnPanel) else np.asarray(panel, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    t_all, n = y.shape
    if max_p < 1:
        raise DataError("max_p must be >= 1")
    if t_all <= max_p * n + max_p:
        raise DataError(f"not enough observations for max_p={max_p}")
    t = t_all - max_p
    scores = np.empty(max_p)
    for p in range(1, max_p + 1):
        X = np.hstack([y[max_p - lag:t_all - lag] for lag in range(1, p + 1)])
        Y = y[max_p:]
        coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
        resid = Y - X @ coef
        _, logdet = np.linalg.slogdet(resid.T @ resid / t)
        scores[p - 1] = t * logdet + n * n * p * math.log(t)
    return scores
