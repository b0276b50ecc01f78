"""Occupancy and flow metrics: mAVE, simplified RayIoU and mIoU.

RayIoU here casts one fixed ray set through both grids and scores first-hit
class and depth agreement; it is meant for relative comparisons only.
"""

import numpy as np

from .projection import pixel_rays
from .raycast import cast_rays
from .scene import FREE

MATCH_THRESHOLD = 2.0
RAY_THRESHOLDS = (1.0, 2.0, 4.0)


def _check_aligned(a, b):
    if a.dims != b.dims or a.voxel_size != b.voxel_size or not np.allclose(a.origin, b.origin):
        raise ValueError("grids must share dims, origin and voxel size")


def mave(pred_grid, gt_grid, dynamic_classes, match_threshold=MATCH_THRESHOLD, chunk=2048):
    """Mean absolute velocity error over true-positive dynamic voxels.

    A predicted voxel of class c is a true positive when the nearest
    ground-truth voxel of class c (ties: smallest flat index) lies within
    ``match_threshold`` meters; its error is the L2 norm of the velocity
    difference to that voxel. Returns ``(per_class, mean)`` where the mean
    is over classes with at least one true positive (0.0 if there are none).
    """
    _check_aligned(pred_grid, gt_grid)
    per_class = {}
    for c in sorted(dynamic_classes):
        p_idx = np.argwhere(pred_grid.semantics == c)
        g_idx = np.argwhere(gt_grid.semantics == c)
        if len(p_idx) == 0 or len(g_idx) == 0:
            continue
        p_xyz = pred_grid.centers(p_idx)
        g_xyz = gt_grid.centers(g_idx)
        errors = []
        for s in range(0, len(p_idx), chunk):
            d2 = ((p_xyz[s:s + chunk, None, :] - g_xyz[None, :, :]) ** 2).sum(-1)
            nn = np.argmin(d2, axis=1)  # argwhere is row-major, so first minimum = smallest index
            hit = d2[np.arange(len(nn)), nn] <= match_threshold ** 2
            pi = p_idx[s:s + chunk][hit]
            gi = g_idx[nn[hit]]
            v_pred = pred_grid.flow[pi[:, 0], pi[:, 1], pi[:, 2]]
            v_gt = gt_grid.flow[gi[:, 0], gi[:, 1], gi[:, 2]]
            errors.append(np.linalg.norm(v_pred - v_gt, axis=1))
        errors = np.concatenate(errors)
        if errors.size:
            per_class[int(c)] = float(errors.mean())
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return per_class, mean


def camera_ray_set(cameras, stride=4):
    """Origins and directions of per-pixel rays from a list of cameras."""
    origins, dirs = [], []
    for cam in cameras:
        d = pixel_rays(cam, stride)
        dirs.append(d)
        origins.append(np.broadcast_to(cam.center, d.shape))
    return np.concatenate(origins), np.concatenate(dirs)


def ray_iou(pred_grid, gt_grid, ray_origins, ray_dirs, thresholds=RAY_THRESHOLDS):
    """First-hit ray IoU at each depth threshold.

    A ray is a true positive at threshold tau if both grids are hit with the
    same class and depths within tau; the union counts every ray that hits
    either grid. Returns ``(per_threshold, mean)``; 1.0 when no ray hits.
    """
    _check_aligned(pred_grid, gt_grid)
    o = np.asarray(ray_origins, dtype=np.float64).reshape(-1, 3)
    d = np.asarray(ray_dirs, dtype=np.float64).reshape(-1, 3)
    if d.shape[0] == 0:
        raise ValueError("empty ray set")
    if o.shape[0] == 1:
        o = np.broadcast_to(o, d.shape)
    results = []
    for grid in (pred_grid, gt_grid):
        hit, depth = cast_rays(grid.semantics != FREE, grid.origin, grid.voxel_size, o, d)
        cls = np.where(depth >= 0, grid.semantics[hit[:, 0], hit[:, 1], hit[:, 2]], FREE)
        results.append((cls, depth))
    (pc, pd), (gc, gd) = results
    union = (pd >= 0) | (gd >= 0)
    both = (pd >= 0) & (gd >= 0) & (pc == gc)
    n_union = int(union.sum())
    per = {}
    for tau in thresholds:
        tp = int((both & (np.abs(pd - gd) <= tau)).sum())
        per[float(tau)] = 1.0 if n_union == 0 else tp / n_union
    return per, float(np.mean(list(per.values())))


def miou(pred_grid, gt_grid):
    """Voxelwise IoU per class present in the ground truth, and their mean."""
    _check_aligned(pred_grid, gt_grid)
    per = {}
    for c in np.unique(gt_grid.semantics):
        if c == FREE:
            continue
        p = pred_grid.semantics == c
        g = gt_grid.semantics == c
        per[int(c)] = float((p & g).sum() / (p | g).sum())
    mean = float(np.mean(list(per.values()))) if per else 1.0
    return per, mean
