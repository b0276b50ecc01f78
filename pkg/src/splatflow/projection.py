"""Pinhole projection of points and Gaussians, and voxel visibility masks."""

from dataclasses import dataclass

import numpy as np

from .raycast import cast_rays
from .scene import FREE

NEAR = 0.1
DILATION = 0.3
# the Jacobian is evaluated no further off-axis than this multiple of the half field of view
FRUSTUM_GUARD = 1.3


@dataclass(frozen=True, eq=False)
class ProjectedGaussian:
    pixel: np.ndarray
    depth: float
    cov2d: np.ndarray
    valid: bool


def project_point(mu, cam, near=NEAR):
    """Project a world point. Returns ``(pixel, depth, valid)``; points behind ``near`` are flagged."""
    x, y, z = cam.rotation @ np.asarray(mu, dtype=np.float64) + cam.translation
    valid = bool(z > near)
    if z == 0:
        return np.array([np.nan, np.nan]), float(z), False
    return np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy]), float(z), valid


def unproject_point(pixel, depth, cam):
    """Inverse of :func:`project_point` for a view-space depth."""
    u, v = pixel
    p_cam = np.array([(u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth])
    return cam.rotation.T @ (p_cam - cam.translation)


def perspective_jacobian(view_point, fx, fy):
    x, y, z = view_point
    return np.array([[fx / z, 0.0, -fx * x / (z * z)], [0.0, fy / z, -fy * y / (z * z)]])


def project_covariance(cov3d, view_rotation, view_point, intrinsics, dilation=DILATION):
    """First-order EWA screen covariance ``J W cov W^T J^T + dilation * I``.

    ``view_point`` is the Gaussian center already in camera coordinates.
    """
    fx, fy = intrinsics[0], intrinsics[1]
    T = perspective_jacobian(view_point, fx, fy) @ np.asarray(view_rotation)
    cov = T @ np.asarray(cov3d) @ T.T
    cov = 0.5 * (cov + cov.T)
    return cov + dilation * np.eye(2)


def frustum_limits(cam, guard=FRUSTUM_GUARD):
    """Bounds on ``x/z`` and ``y/z`` used when evaluating the Jacobian."""
    return guard * (cam.cx + 0.5) / cam.fx, guard * (cam.cy + 0.5) / cam.fy


def project_gaussians(mu, cov3d, cam, near=NEAR, dilation=DILATION, guard=FRUSTUM_GUARD):
    """Vectorized projection of N Gaussians.

    Returns ``(means2d, depth, cov2d, valid, view_points, T)`` where ``T``
    is the (N, 2, 3) product of the perspective Jacobian and view rotation.
    Centers far outside the frustum get their Jacobian evaluated at the
    clamped direction ``x/z`` (``y/z``), so near-camera Gaussians off to the
    side do not blow up into image-filling footprints.
    """
    mu = np.asarray(mu, dtype=np.float64).reshape(-1, 3)
    pv = mu @ cam.rotation.T + cam.translation
    x, y, z = pv[:, 0], pv[:, 1], pv[:, 2]
    valid = z > near
    zs = np.where(valid, z, 1.0)
    n = mu.shape[0]
    limx, limy = frustum_limits(cam, guard)
    ux = np.clip(x / zs, -limx, limx)
    uy = np.clip(y / zs, -limy, limy)
    J = np.zeros((n, 2, 3))
    J[:, 0, 0] = cam.fx / zs
    J[:, 0, 2] = -cam.fx * ux / zs
    J[:, 1, 1] = cam.fy / zs
    J[:, 1, 2] = -cam.fy * uy / zs
    T = J @ cam.rotation
    cov = T @ cov3d @ np.transpose(T, (0, 2, 1))
    cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))
    cov[:, 0, 0] += dilation
    cov[:, 1, 1] += dilation
    means = np.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], axis=1)
    return means, z, cov, valid, pv, T


def pixel_rays(cam, stride=1):
    """World-space ray directions through every ``stride``-th pixel center."""
    us = np.arange(0, cam.width, stride, dtype=np.float64)
    vs = np.arange(0, cam.height, stride, dtype=np.float64)
    uu, vv = np.meshgrid(us, vs)
    d_cam = np.stack([(uu - cam.cx) / cam.fx, (vv - cam.cy) / cam.fy, np.ones_like(uu)], axis=-1).reshape(-1, 3)
    d = d_cam @ cam.rotation
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def compute_visibility_mask(grid, cameras, stride=4):
    """Mark occupied voxels that are the first hit of some camera pixel ray.

    FREE voxels never block and are never marked.
    """
    occ = grid.semantics != FREE
    visible = np.zeros(grid.dims, dtype=bool)
    if not occ.any():
        return visible
    for cam in cameras:
        hit, depth = cast_rays(occ, grid.origin, grid.voxel_size, cam.center[None], pixel_rays(cam, stride))
        h = hit[depth >= 0]
        visible[h[:, 0], h[:, 1], h[:, 2]] = True
    return visible
