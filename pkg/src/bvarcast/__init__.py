"""Bayesian VAR forecasting of daily cryptocurrency returns.

Constant-volatility, stochastic-volatility (Gaussian and Student-t) and
CCC-GARCH vector autoregressions estimated by MCMC, evaluated out of sample
on a rolling window with RMSE, log score, CRPS, Diebold-Mariano tests and
the model confidence set.
"""

__version__ = "0.1.0"
