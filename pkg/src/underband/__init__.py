"""Informative frequency band selection by spectrogram underapproximation."""

__version__ = "0.1.0"
