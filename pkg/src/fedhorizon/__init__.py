"""Federated early-sepsis-prediction simulator with variable horizons."""

__version__ = "0.1.0"
