"""Conditional-simulation ensembles of high-frequency pressure fields.

Fits a spline-parameterized space-time spectral Gaussian process to
multi-station monitoring data and generates calibrated ensembles of the
field at unmonitored sites.
"""

from .spectrum import KnotSet, SpectralModel, SpectralParams, matern32

__all__ = ["KnotSet", "SpectralModel", "SpectralParams", "matern32"]
__version__ = "0.1.0"
