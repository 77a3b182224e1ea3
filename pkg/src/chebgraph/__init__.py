"""Localized spectral graph filtering with Chebyshev polynomials."""

__version__ = "0.1.0"
