"""Stationary pinned string sampler and fBm range experiments."""
from .analytic import DomainError, ModelParams, hurst_from_alpha, normalization_constant
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "DomainError", "ModelParams", "hurst_from_alpha", "normalization_constant", "__version__"]
