"""Noisy-device-enhanced classical simulation toolkit."""

__version__ = "0.1.0"
