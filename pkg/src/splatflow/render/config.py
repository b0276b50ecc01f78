from dataclasses import dataclass

from ..scene import InvalidParameterError


@dataclass(frozen=True)
class RenderConfig:
    """Cutoffs for splat compositing.

    alpha_cutoff: contributions with effective alpha below this are skipped.
    transmittance_floor: a pixel stops compositing once its remaining
        transmittance falls below this value.
    radius_sigma: footprint radius in standard deviations; pixels outside
        the ellipse ``d^T cov^-1 d <= radius_sigma**2`` receive nothing.
    opacity_viz_threshold: visualization mode only splats Gaussians whose
        opacity exceeds this.
    mask_threshold: rendered mask is ``weight > mask_threshold``.
    """

    alpha_cutoff: float = 1.0 / 255.0
    transmittance_floor: float = 1e-4
    radius_sigma: float = 3.0
    opacity_viz_threshold: float = 0.2
    mask_threshold: float = 0.0
    tile_size: int = 16
    max_alpha: float = 0.99

    def __post_init__(self):
        for name in ("alpha_cutoff", "transmittance_floor", "opacity_viz_threshold", "mask_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise InvalidParameterError(f"{name} must lie in [0, 1), got {v}")
        if not self.radius_sigma > 0:
            raise InvalidParameterError("radius_sigma must be positive")
        if self.tile_size < 1:
            raise InvalidParameterError("tile_size must be >= 1")
        if not 0.0 < self.max_alpha < 1.0:
            raise InvalidParameterError("max_alpha must lie in (0, 1)")


# Cutoffs pushed out of the way so the composite is smooth in every
# parameter; used by finite-difference gradient checks.
SMOOTH = RenderConfig(alpha_cutoff=1e-300, transmittance_floor=0.0, radius_sigma=40.0)
