"""Cost-function market makers built from convex conjugates over feasible price regions."""

from .engine import (
    Market,
    band_market,
    lmsr_market,
    pairbet_market,
    sphere_market,
    trimmed_simplex_market,
    txncost_market,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Market",
    "band_market",
    "lmsr_market",
    "pairbet_market",
    "sphere_market",
    "trimmed_simplex_market",
    "txncost_market",
]
