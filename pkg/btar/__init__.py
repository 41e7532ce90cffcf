"""Bayesian tensor autoregression toolkit."""
