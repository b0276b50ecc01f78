"""Differentiable semantic Gaussian splatting with 2D-supervised scene flow."""

__version__ = "0.1.0"
