"""Sampled vectorial gerbes, Clifford bundles, discrete Dirac operators and index experiments."""

__version__ = "0.1.0"
