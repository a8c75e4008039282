"""Multivariate exchange-rate forecasting: econometric tests, VAR, SVR and LSTM."""

__version__ = "0.1.0"
