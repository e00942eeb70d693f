"""Demand forecasting engine: ingestion, features, models, backtests, inventory."""

__version__ = "0.1.0"
