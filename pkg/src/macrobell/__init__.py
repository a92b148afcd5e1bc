"""Noisy photon-number-difference Bell tests on a pair-coherent state."""

__version__ = "0.1.0"

from .bell import BellResult, BellSettings, bell_ratio, joint_plus, marginal_plus, max_sigma, scan_alpha
from .fockspace import MeasurementConfig, PairCoherentState, SignPovm, pair_coherent, sign_povm
from .homodyne import QuadratureGrid, QuadratureModel, bell_ratio_homodyne, sigma0_cutoff
from .specfun import GaussianNoise

__all__ = [
    "BellResult",
    "BellSettings",
    "GaussianNoise",
    "MeasurementConfig",
    "PairCoherentState",
    "QuadratureGrid",
    "QuadratureModel",
    "SignPovm",
    "bell_ratio",
    "bell_ratio_homodyne",
    "joint_plus",
    "marginal_plus",
    "max_sigma",
    "pair_coherent",
    "scan_alpha",
    "sigma0_cutoff",
    "sign_povm",
]
