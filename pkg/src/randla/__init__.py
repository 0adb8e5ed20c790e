"""Randomized linear algebra toolkit: reproducible sketching operators and
the least-squares, low-rank, full-rank QR, trace, leverage-score, and
bootstrap drivers built on them."""

from . import (bench, detkernels, errorest, fullrank, leastsq, leverage,
               lowrank, rng, sketching, trace)
from .rng import RngKey

__all__ = [
    "RngKey",
    "bench",
    "detkernels",
    "errorest",
    "fullrank",
    "leastsq",
    "leverage",
    "lowrank",
    "rng",
    "sketching",
    "trace",
]

__version__ = "0.1.0"
