"""Forecasting model implementations."""
