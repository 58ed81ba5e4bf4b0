"""Compile counting languages to exact average hard attention transformers."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    AffineMap,
    AhaLayer,
    AhatError,
    AhatModel,
    EvalTrace,
    FeedForwardNet,
    Rational,
    accepts,
    eval_aha_layer,
    eval_ffn,
    is_uniform,
    rat,
    run_ahat,
    tie_report,
)

__all__ = [
    "AffineMap",
    "AhaLayer",
    "AhatError",
    "AhatModel",
    "EvalTrace",
    "FeedForwardNet",
    "Rational",
    "accepts",
    "eval_aha_layer",
    "eval_ffn",
    "is_uniform",
    "rat",
    "run_ahat",
    "tie_report",
]
