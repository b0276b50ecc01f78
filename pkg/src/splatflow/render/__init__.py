from .config import SMOOTH, RenderConfig
from .rasterizer import GaussianGradients, render, render_backward, render_bruteforce

__all__ = ["RenderConfig", "SMOOTH", "GaussianGradients", "render", "render_backward", "render_bruteforce"]
