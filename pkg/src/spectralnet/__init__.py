"""Spectral clustering with a stochastically trained embedding network."""

from ._kernels import BACKEND  # noqa: F401  ("compiled" or "python")

__version__ = "0.1.0"
