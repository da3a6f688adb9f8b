"""Differentiable forest radiative-transfer inversion with learned bias correction."""

__version__ = "0.1.0"
