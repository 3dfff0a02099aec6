"""Degradation-aware molecular communication via diffusion (absorbing spherical receiver)."""

__version__ = "0.3.0"
