"""Zero-shot probabilistic load forecasting with a small token model and classical baselines."""

__version__ = "0.1.0"
