"""Skew-stickiness ratio engine for affine forward variance models."""
from .errors import (
    BracketError,
    ConfigError,
    DegenerateSkewError,
    DomainError,
    QuadratureError,
    RiccatiDivergenceError,
    SSRError,
    UnsupportedConfigurationError,
)
from .model import ForwardVarianceCurve, Kernel, ModelParams
from .numerics import QuadratureSpec
from .ssr import SsrPoint, TermStructure, ssr_afv, ssr_general, ssr_heston

__version__ = "0.1.0"

__all__ = [
    "BracketError", "ConfigError", "DegenerateSkewError", "DomainError", "QuadratureError",
    "RiccatiDivergenceError", "SSRError", "UnsupportedConfigurationError",
    "ForwardVarianceCurve", "Kernel", "ModelParams", "QuadratureSpec",
    "SsrPoint", "TermStructure", "ssr_afv", "ssr_general", "ssr_heston",
]
