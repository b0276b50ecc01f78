"""Static/dynamic decomposition, flow advection and online 2D label generation."""

from dataclasses import dataclass

import numpy as np

from .render import RenderConfig, render
from .sampler import DEFAULT_DT, one_hot_logits
from .scene import FREE, IDENTITY_QUAT, GaussianSet

LABEL_OPACITY = 0.99
LABEL_SCALE = 0.5  # times voxel_size
NO_LABEL = -1
# label pixels must be mostly covered; the faint footprint fringe has depth ~ weight * z
LABEL_MIN_WEIGHT = 0.5

# nuScenes-style 16-class vocabulary used by the synthetic scenes
CLASS_NAMES = (
    "barrier", "bicycle", "bus", "car", "construction_vehicle", "motorcycle", "pedestrian",
    "traffic_cone", "trailer", "truck", "driveable_surface", "other_flat", "sidewalk",
    "terrain", "manmade", "vegetation",
)
DEFAULT_DYNAMIC_CLASSES = (1, 2, 3, 4, 5, 6, 8, 9)


def _center_classes(gaussians, gt_grid, centers=None):
    pts = gaussians.mu if centers is None else centers
    idx = gt_grid.index_of(pts)
    if idx.size and not np.all(gt_grid.in_bounds(idx)):
        raise ValueError("Gaussian center lies outside the ground-truth grid")
    return gt_grid.semantics[idx[:, 0], idx[:, 1], idx[:, 2]]


def dynamic_mask(gaussians, gt_grid, dynamic_classes):
    """True for Gaussians whose center falls in a ground-truth voxel of a dynamic class."""
    cls = _center_classes(gaussians, gt_grid)
    return np.isin(cls, np.asarray(sorted(dynamic_classes), dtype=np.int64)) & (cls != FREE)


def decompose(gaussians, gt_grid, dynamic_classes):
    """Split into ``(static, dynamic)`` by the ground-truth class at each center."""
    dyn = dynamic_mask(gaussians, gt_grid, dynamic_classes)
    return gaussians.subset(~dyn), gaussians.subset(dyn)


def advect(gaussians):
    """Copy of ``gaussians`` with centers moved by their displacement and marked advected."""
    return gaussians.with_(mu=gaussians.mu + gaussians.delta_x, advected=np.ones(len(gaussians), dtype=bool))


def voxel_gaussians(grid, mask, dt=DEFAULT_DT, shifted=False):
    """Near-opaque isotropic label Gaussians at the centers of voxels in ``mask``."""
    idx = np.argwhere(mask)
    n = idx.shape[0]
    mu = grid.centers(idx)
    dx = np.zeros((n, 3))
    dx[:, :2] = grid.flow[idx[:, 0], idx[:, 1], idx[:, 2]] * dt
    if shifted:
        mu = mu + dx
    return GaussianSet(
        mu, dx, one_hot_logits(grid.semantics[idx[:, 0], idx[:, 1], idx[:, 2]], grid.num_classes),
        np.full(n, LABEL_OPACITY), np.tile(IDENTITY_QUAT, (n, 1)),
        np.full((n, 3), LABEL_SCALE * grid.voxel_size), advected=np.full(n, shifted),
        source=np.ravel_multi_index(idx.T, grid.dims) if n else None,
    )


@dataclass(frozen=True, eq=False)
class LabelMap:
    classes: np.ndarray  # (H, W) class id, NO_LABEL outside mask
    depth: np.ndarray  # (H, W)
    mask: np.ndarray  # (H, W) bool

    @classmethod
    def from_render(cls, maps, min_weight=LABEL_MIN_WEIGHT):
        mask = maps.mask & (maps.weight >= min_weight)
        classes = np.where(mask, np.argmax(maps.sem, axis=2), NO_LABEL)
        return cls(classes, maps.depth, mask)

    def union_with(self, other):
        return LabelMap(np.where(self.mask, self.classes, other.classes), np.where(self.mask, self.depth, other.depth),
                        self.mask | other.mask)


@dataclass(frozen=True, eq=False)
class FrameLabels:
    static: LabelMap
    dynamic: LabelMap
    full: LabelMap


def generate_labels(gt_grid, cam, dynamic_classes, dt=DEFAULT_DT, cfg=RenderConfig(), visible_only=False):
    """Render 2D semantic/depth labels of ground-truth voxels for one camera.

    Static voxels are rendered once; dynamic voxels are rendered at rest
    together with a copy moved by ``flow * dt``. ``full`` renders every
    occupied voxel at rest and serves supervision without decomposition.
    With ``visible_only`` only camera-visible voxels are splatted, the same
    set the sampler draws from.
    """
    occ = gt_grid.occupied
    if visible_only:
        occ = occ & gt_grid.visible
    dyn = occ & np.isin(gt_grid.semantics, np.asarray(sorted(dynamic_classes), dtype=np.int64))
    static = LabelMap.from_render(render(voxel_gaussians(gt_grid, occ & ~dyn, dt), cam, cfg))
    moving = GaussianSet.concat(voxel_gaussians(gt_grid, dyn, dt), voxel_gaussians(gt_grid, dyn, dt, shifted=True))
    dynamic = LabelMap.from_render(render(moving, cam, cfg))
    full = LabelMap.from_render(render(voxel_gaussians(gt_grid, occ, dt), cam, cfg))
    return FrameLabels(static, dynamic, full)


def select_virtual_views(cams_t, cams_adjacent, m):
    """Current-frame cameras followed by adjacent-frame cameras, ``m`` in total."""
    cams_t, cams_adjacent = list(cams_t), list(cams_adjacent)
    if m > len(cams_t) + len(cams_adjacent):
        raise ValueError(f"requested {m} views but only {len(cams_t) + len(cams_adjacent)} are available")
    return (cams_t + cams_adjacent)[:m]
