"""Mixture of additive spline models gated by random Fourier feature clusters."""

__version__ = "0.1.0"
