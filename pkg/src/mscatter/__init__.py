"""Penalized and structured M-estimators of multivariate scatter."""
__version__ = "0.1.0"
