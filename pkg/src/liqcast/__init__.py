"""Liquidity-conditioned long-horizon forecasting toolkit."""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, finite_difference_check  # noqa: F401
