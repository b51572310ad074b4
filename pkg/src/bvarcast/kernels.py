"""Linear algebra and seeded sampling primitives shared by the samplers.

All stochastic functions take a :class:`numpy.random.Generator`; the same
seed and inputs reproduce the same draws bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import stats
from scipy.linalg import lapack, solve_triangular

from .errors import FilterDivergenceError, NotPositiveDefiniteError

LOG_SQ_OFFSET = 1e-6


def make_rng(seed, *stream) -> np.random.Generator:
    """Generator for ``seed``; extra integers select an independent stream."""
    return np.random.default_rng([int(seed), *map(int, stream)] if stream else int(seed))


def cholesky_lower(m: np.ndarray, *, check_symmetric: bool = True) -> np.ndarray:
    """Lower Cholesky factor ``L`` with ``L @ L.T == m``.

    Raises :class:`NotPositiveDefiniteError` carrying the 0-based pivot at
    which the factorization broke down.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    if check_symmetric:
        scale = max(1.0, float(np.max(np.abs(m)))) if m.size else 1.0
        if np.max(np.abs(m - m.T), initial=0.0) > 1e-10 * scale:
            raise ValueError("matrix is not symmetric")
    if not np.all(np.isfinite(m)):
        raise NotPositiveDefiniteError(0)
    c, info = lapack.dpotrf(m, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise ValueError(f"dpotrf argument {-info} invalid")
    return c


def sample_mvn(rng: np.random.Generator, mean, cov) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    chol = cholesky_lower(np.atleast_2d(cov))
    if chol.shape[0] != mean.shape[0]:
        raise ValueError("mean and covariance dimensions differ")
    return mean + chol @ rng.standard_normal(mean.shape[0])


def sample_mvn_precision(rng: np.random.Generator, precision, linear) -> tuple[np.ndarray, np.ndarray]:
    """Draw from ``N(P^{-1} b, P^{-1})`` given precision ``P`` and ``b``.

    Returns ``(draw, mean)``. Works through the Cholesky factor of the
    precision, never forming the covariance.
    """
    chol = cholesky_lower(precision, check_symmetric=False)
    mean = solve_triangular(chol, linear, lower=True)
    mean = solve_triangular(chol.T, mean, lower=False)
    z = rng.standard_normal(mean.shape[0])
    return mean + solve_triangular(chol.T, z, lower=False), mean


def sample_inverse_wishart(rng: np.random.Generator, scale, dof: float) -> np.ndarray:
    """Inverse-Wishart draw with mean ``scale / (dof - dim - 1)``."""
    scale = np.atleast_2d(np.asarray(scale, dtype=float))
    dim = scale.shape[0]
    if not dof > dim - 1:
        raise ValueError(f"inverse-Wishart needs dof > dim - 1 = {dim - 1}, got {dof}")
    cholesky_lower(scale)
    draw = stats.invwishart.rvs(df=dof, scale=scale, random_state=rng)
    return np.atleast_2d(draw)


def sample_gamma(rng: np.random.Generator, shape, rate, size=None):
    """Gamma draw(s) in the shape/rate parameterization (mean ``shape / rate``)."""
    shape = np.asarray(shape, dtype=float)
    rate = np.asarray(rate, dtype=float)
    if np.any(~(shape > 0)) or np.any(~(rate > 0)):
        raise ValueError("gamma shape and rate must be positive")
    return rng.gamma(shape, 1.0 / rate, size=size)


# ---------------------------------------------------------------------------
# log-volatility state sampler

@dataclass(frozen=True)
class MixtureTable:
    """Normal mixture approximating the distribution of ``log(chi2_1)``."""

    probs: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        for name in ("probs", "means", "variances"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if not (self.probs.shape == self.means.shape == self.variances.shape):
            raise ValueError("mixture arrays must have equal length")
        if abs(self.probs.sum() - 1.0) > 1e-12 or np.any(self.probs < 0):
            raise ValueError("mixture probabilities must sum to 1")
        if np.any(self.variances <= 0):
            raise ValueError("mixture variances must be positive")

    @property
    def mean(self) -> float:
        return float(self.probs @ self.means)

    @property
    def variance(self) -> float:
        return float(self.probs @ (self.variances + self.means**2) - self.mean**2)


# Omori, Chib, Shephard and Nakajima (2007) ten-component approximation.
OMORI_MIXTURE = MixtureTable(
    probs=[0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115],
    means=[1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65000],
    variances=[0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342],
)


def log_squared(resid, offset: float = LOG_SQ_OFFSET) -> np.ndarray:
    return np.log(np.square(resid) + offset)


def sample_mixture_indicators(rng: np.random.Generator, y_star, log_var,
                              mixture: MixtureTable = OMORI_MIXTURE) -> np.ndarray:
    """Component index per observation given the current log-variance path."""
    resid = (np.asarray(y_star) - np.asarray(log_var))[..., None]
    logw = (np.log(mixture.probs) - 0.5 * np.log(mixture.variances)
            - 0.5 * (resid - mixture.means) ** 2 / mixture.variances)
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    cdf = np.cumsum(w, axis=-1)
    u = rng.random(resid.shape[:-1] + (1,)) * cdf[..., -1:]
    return np.minimum((cdf < u).sum(axis=-1), len(mixture.probs) - 1)


@numba.njit(cache=True)
def _ffbs_random_walk(obs, obs_var, state_var, m0, p0, z):
    n = obs.shape[0]
    m = np.empty(n)
    p = np.empty(n)
    out = np.empty(n)
    for t in range(n):
        if t == 0:
            mp, pp = m0, p0
        else:
            mp, pp = m[t - 1], p[t - 1] + state_var
        if np.isinf(pp):
            m[t] = obs[t]
            p[t] = obs_var[t]
        else:
            f = pp + obs_var[t]
            k = pp / f
            m[t] = mp + k * (obs[t] - mp)
            p[t] = pp * obs_var[t] / f
        if not (np.isfinite(m[t]) and p[t] > 0.0 and np.isfinite(p[t])):
            return out, t
    out[n - 1] = m[n - 1] + np.sqrt(p[n - 1]) * z[n - 1]
    for t in range(n - 2, -1, -1):
        if state_var == 0.0:
            out[t] = out[t + 1]
        else:
            g = p[t] / (p[t] + state_var)
            mean = m[t] + g * (out[t + 1] - m[t])
            var = p[t] * state_var / (p[t] + state_var)
            out[t] = mean + np.sqrt(var) * z[t]
    return out, -1


def ffbs_random_walk(rng: np.random.Generator, obs, obs_var, state_var: float,
                     prior_mean: float, prior_var: float) -> np.ndarray:
    """Joint draw of a scalar random-walk state observed with Gaussian noise.

    ``x_1 ~ N(prior_mean, prior_var)``, ``x_t = x_{t-1} + N(0, state_var)``,
    ``obs_t = x_t + N(0, obs_var_t)``. ``prior_var`` may be ``inf``.
    """
    obs = np.ascontiguousarray(obs, dtype=float)
    obs_var = np.ascontiguousarray(np.broadcast_to(obs_var, obs.shape), dtype=float)
    if state_var < 0 or not np.isfinite(state_var):
        raise FilterDivergenceError(f"invalid state variance {state_var!r}")
    if not np.all(np.isfinite(obs)):
        raise FilterDivergenceError("non-finite observation")
    z = rng.standard_normal(obs.shape[0])
    path, bad = _ffbs_random_walk(obs, obs_var, float(state_var), float(prior_mean), float(prior_var), z)
    if bad >= 0:
        raise FilterDivergenceError(f"filter variance became non-finite at t={bad}")
    return path


def ffbs_log_volatility(rng: np.random.Generator, log_squared_residuals, innovation_variance: float,
                        mixture: MixtureTable, initial_state_prior: tuple[float, float],
                        indicators) -> np.ndarray:
    """Draw a log-variance path given mixture indicators.

    ``log_squared_residuals`` is ``log(e_t**2 + offset)`` for orthogonalized
    residuals ``e_t``; the observation equation is
    ``y*_t = log(lambda_t) + m_{s_t} + N(0, v_{s_t})``.
    """
    y = np.asarray(log_squared_residuals, dtype=float)
    s = np.asarray(indicators)
    return ffbs_random_walk(rng, y - mixture.means[s], mixture.variances[s],
                            innovation_variance, *initial_state_prior)
