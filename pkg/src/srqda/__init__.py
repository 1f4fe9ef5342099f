"""Spectrally-corrected and regularized QDA for spiked covariance models."""

__version__ = "0.1.0"
