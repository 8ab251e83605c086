"""Ensembles of small GANs on synthetic data, evaluated by nearest-neighbour retrieval."""
__version__ = "0.1.0"

from ._native import BACKEND  # noqa: E402
