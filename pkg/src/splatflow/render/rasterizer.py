"""Semantic/depth splat rendering with an analytic reverse pass.

Per pixel, Gaussians are composited front to back in order of their
view-space center depth (ties by input index)::

    sem   = sum_i logits_i * a_i * prod_{j<i} (1 - a_j)
    depth = sum_i z_i      * a_i * prod_{j<i} (1 - a_j)

with effective alpha ``a_i = min(opacity_i * exp(-q/2), max_alpha)`` and
``q`` the Mahalanobis distance of the pixel to the projected center under
the screen covariance.
"""

from dataclasses import dataclass

import numpy as np

from ..projection import DILATION, NEAR, frustum_limits, project_gaussians
from ..scene import GaussianSet, RenderedMaps, quat_to_rotmat_batch
from .config import RenderConfig
from .kernels import backward_tiles, forward_tiles


@dataclass(frozen=True, eq=False)
class GaussianGradients:
    mu: np.ndarray
    delta_x: np.ndarray
    logits: np.ndarray
    opacity: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray

    @classmethod
    def zeros(cls, n, num_classes):
        z = lambda *s: np.zeros(s)  # noqa: E731
        return cls(z(n, 3), z(n, 3), z(n, num_classes), z(n), z(n, 4), z(n, 3))

    def __add__(self, other):
        return GaussianGradients(*(getattr(self, f) + getattr(other, f) for f in _GRAD_FIELDS))

    def as_dict(self):
        return {f: getattr(self, f) for f in _GRAD_FIELDS}


_GRAD_FIELDS = ("mu", "delta_x", "logits", "opacity", "rotation", "scale")


@dataclass(frozen=True, eq=False)
class _Prepared:
    means: np.ndarray
    depth: np.ndarray
    cov2d: np.ndarray
    conics: np.ndarray
    valid: np.ndarray
    order: np.ndarray
    view_points: np.ndarray
    T: np.ndarray
    R: np.ndarray
    qnorm: np.ndarray
    cov3d: np.ndarray
    feats: np.ndarray


def _prepare(gs: GaussianSet, cam, cfg: RenderConfig, near=NEAR):
    q = gs.rotation
    qnorm = np.linalg.norm(q, axis=1)
    qn = q / np.where(qnorm > 0, qnorm, 1.0)[:, None]
    R = quat_to_rotmat_batch(qn)
    M = R * gs.scale[:, None, :]
    cov3d = M @ np.transpose(M, (0, 2, 1))
    means, z, cov2d, valid, pv, T = project_gaussians(gs.mu, cov3d, cam, near, DILATION)
    det = cov2d[:, 0, 0] * cov2d[:, 1, 1] - cov2d[:, 0, 1] * cov2d[:, 0, 1]
    assert np.all(det[valid] > 0), "singular screen covariance after dilation"
    det = np.where(valid, det, 1.0)
    conics = np.stack([cov2d[:, 1, 1] / det, -cov2d[:, 0, 1] / det, cov2d[:, 0, 0] / det], axis=1)
    # exact bounding box of the footprint ellipse, padded one pixel
    ex = cfg.radius_sigma * np.sqrt(np.abs(cov2d[:, 0, 0])) + 1.0
    ey = cfg.radius_sigma * np.sqrt(np.abs(cov2d[:, 1, 1])) + 1.0
    on_image = ((means[:, 0] + ex >= 0) & (means[:, 0] - ex <= cam.width - 1)
                & (means[:, 1] + ey >= 0) & (means[:, 1] - ey <= cam.height - 1))
    valid = valid & on_image & np.all(np.isfinite(means), axis=1)
    idx = np.flatnonzero(valid)
    order = idx[np.argsort(z[idx], kind="stable")]
    feats = np.concatenate([gs.logits, z[:, None]], axis=1)
    return _Prepared(means, z, cov2d, conics, valid, order, pv, T, R, qnorm, cov3d,
                     np.ascontiguousarray(feats))


def _tile_lists(prep, cam, cfg):
    tile = cfg.tile_size
    n_tx = (cam.width + tile - 1) // tile
    n_ty = (cam.height + tile - 1) // tile
    order = prep.order
    if order.size == 0:
        return np.zeros(n_tx * n_ty + 1, np.int64), np.zeros(0, np.int64)
    m = prep.means[order]
    ex = cfg.radius_sigma * np.sqrt(prep.cov2d[order, 0, 0]) + 1.0
    ey = cfg.radius_sigma * np.sqrt(prep.cov2d[order, 1, 1]) + 1.0
    x0 = np.clip(np.floor(m[:, 0] - ex), 0, cam.width - 1).astype(np.int64) // tile
    x1 = np.clip(np.ceil(m[:, 0] + ex), 0, cam.width - 1).astype(np.int64) // tile
    y0 = np.clip(np.floor(m[:, 1] - ey), 0, cam.height - 1).astype(np.int64) // tile
    y1 = np.clip(np.ceil(m[:, 1] + ey), 0, cam.height - 1).astype(np.int64) // tile
    nx = x1 - x0 + 1
    ny = y1 - y0 + 1
    counts = nx * ny
    rank = np.repeat(np.arange(order.size), counts)
    local = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    tx = x0[rank] + local % nx[rank]
    ty = y0[rank] + local // nx[rank]
    tile_id = ty * n_tx + tx
    # stable sort by tile keeps depth rank order within each tile
    perm = np.argsort(tile_id, kind="stable")
    tile_ids = order[rank[perm]]
    tile_ptr = np.zeros(n_tx * n_ty + 1, np.int64)
    np.cumsum(np.bincount(tile_id, minlength=n_tx * n_ty), out=tile_ptr[1:])
    return tile_ptr, np.ascontiguousarray(tile_ids)


def _maps(out, weight, num_classes, cfg):
    return RenderedMaps(out[:, :, :num_classes], out[:, :, num_classes], weight, weight > cfg.mask_threshold)


def _viz_filter(gs, cfg, visualize):
    if not visualize:
        return gs
    return gs.subset(gs.opacity > cfg.opacity_viz_threshold)


def render(gaussians: GaussianSet, cam, cfg: RenderConfig = RenderConfig(), visualize=False) -> RenderedMaps:
    """Splat-render accumulated semantic logits and depth for one camera.

    With ``visualize`` only Gaussians with opacity above
    ``cfg.opacity_viz_threshold`` are splatted.
    """
    gs = _viz_filter(gaussians, cfg, visualize)
    P = gs.num_classes
    if len(gs) == 0:
        return RenderedMaps.empty(cam.height, cam.width, P)
    prep = _prepare(gs, cam, cfg)
    tile_ptr, tile_ids = _tile_lists(prep, cam, cfg)
    out, weight = forward_tiles(
        np.ascontiguousarray(prep.means), np.ascontiguousarray(prep.conics), gs.opacity, prep.feats,
        tile_ptr, tile_ids, cam.width, cam.height, cfg.tile_size,
        cfg.radius_sigma ** 2, cfg.alpha_cutoff, cfg.transmittance_floor, cfg.max_alpha,
    )
    return _maps(out, weight, P, cfg)


def render_bruteforce(gaussians: GaussianSet, cam, cfg: RenderConfig = RenderConfig(), visualize=False) -> RenderedMaps:
    """Reference renderer: every pixel visits every Gaussian in depth order.

    No tiling and no screen-space culling; the per-pixel arithmetic and
    cutoff rules are the same as :func:`render`.
    """
    gs = _viz_filter(gaussians, cfg, visualize)
    P = gs.num_classes
    H, W = cam.height, cam.width
    if len(gs) == 0:
        return RenderedMaps.empty(H, W, P)
    prep = _prepare(gs, cam, cfg)
    front = np.flatnonzero(prep.depth > NEAR)
    order = front[np.argsort(prep.depth[front], kind="stable")]
    py, px = np.mgrid[0:H, 0:W].astype(np.float64)
    rs2 = cfg.radius_sigma ** 2
    out = np.zeros((H, W, P + 1))
    weight = np.zeros((H, W))
    T = np.ones((H, W))
    active = np.ones((H, W), dtype=bool)
    for g in order:
        c0, c1, c2 = prep.conics[g]
        dx = px - prep.means[g, 0]
        dy = py - prep.means[g, 1]
        q = c0 * dx * dx + 2.0 * c1 * dx * dy + c2 * dy * dy
        a = np.minimum(gs.opacity[g] * np.exp(-0.5 * q), cfg.max_alpha)
        use = active & (q <= rs2) & (a >= cfg.alpha_cutoff)
        w = a * T
        out[use] += prep.feats[g][None, :] * w[use][:, None]
        weight[use] += w[use]
        T = np.where(use, T * (1.0 - a), T)
        active &= ~(use & (T < cfg.transmittance_floor))
    return _maps(out, weight, P, cfg)


def render_backward(gaussians: GaussianSet, cam, cfg: RenderConfig, grad_sem, grad_depth) -> GaussianGradients:
    """Gradients of a scalar loss w.r.t. every Gaussian parameter.

    ``grad_sem`` (H, W, P) and ``grad_depth`` (H, W) are the loss gradients
    w.r.t. the rendered maps. The depth ordering is held fixed. The rotation
    gradient is taken w.r.t. the raw quaternion through its normalization.
    """
    gs = gaussians
    P = gs.num_classes
    H, W = cam.height, cam.width
    grad_sem = np.asarray(grad_sem, dtype=np.float64)
    grad_depth = np.asarray(grad_depth, dtype=np.float64)
    if grad_sem.shape != (H, W, P) or grad_depth.shape != (H, W):
        raise ValueError(f"upstream shapes {grad_sem.shape}, {grad_depth.shape} do not match image ({H}, {W}) "
                         f"with {P} classes")
    n = len(gs)
    if n == 0:
        return GaussianGradients.zeros(0, P)
    prep = _prepare(gs, cam, cfg)
    tile_ptr, tile_ids = _tile_lists(prep, cam, cfg)
    upstream = np.ascontiguousarray(np.concatenate([grad_sem, grad_depth[:, :, None]], axis=2))
    g_means, g_conics, g_opac, g_feats = backward_tiles(
        np.ascontiguousarray(prep.means), np.ascontiguousarray(prep.conics), gs.opacity, prep.feats,
        tile_ptr, tile_ids, W, H, cfg.tile_size,
        cfg.radius_sigma ** 2, cfg.alpha_cutoff, cfg.transmittance_floor, cfg.max_alpha, upstream,
    )
    return _chain_to_params(gs, cam, prep, g_means, g_conics, g_opac, g_feats)


def _chain_to_params(gs, cam, prep, g_means, g_conics, g_opac, g_feats):
    n = len(gs)
    P = gs.num_classes
    valid = prep.valid
    fx, fy = cam.fx, cam.fy
    x, y = prep.view_points[:, 0], prep.view_points[:, 1]
    z = np.where(valid, prep.view_points[:, 2], 1.0)

    # conic -> screen covariance: dA = -A dA_full A
    A = np.empty((n, 2, 2))
    A[:, 0, 0] = prep.conics[:, 0]
    A[:, 0, 1] = A[:, 1, 0] = prep.conics[:, 1]
    A[:, 1, 1] = prep.conics[:, 2]
    gA = np.empty((n, 2, 2))
    gA[:, 0, 0] = g_conics[:, 0]
    gA[:, 0, 1] = gA[:, 1, 0] = 0.5 * g_conics[:, 1]
    gA[:, 1, 1] = g_conics[:, 2]
    g_cov2 = -A @ gA @ A

    T = prep.T
    Tt = np.transpose(T, (0, 2, 1))
    g_T = 2.0 * g_cov2 @ T @ prep.cov3d
    g_cov3 = Tt @ g_cov2 @ T
    g_J = g_T @ cam.rotation.T

    # J[0,2] = -fx*ux/z with ux = clip(x/z); clamped directions carry no x (y) dependence
    limx, limy = frustum_limits(cam)
    ux, uy = x / z, y / z
    inx = np.abs(ux) <= limx
    iny = np.abs(uy) <= limy
    ux, uy = np.clip(ux, -limx, limx), np.clip(uy, -limy, limy)
    z2 = z * z
    g_pv = np.zeros((n, 3))
    g_pv[:, 0] = np.where(inx, g_J[:, 0, 2] * (-fx / z2), 0.0) + g_means[:, 0] * fx / z
    g_pv[:, 1] = np.where(iny, g_J[:, 1, 2] * (-fy / z2), 0.0) + g_means[:, 1] * fy / z
    g_pv[:, 2] = (g_J[:, 0, 0] * (-fx / z2) + g_J[:, 0, 2] * fx * ux / z2 * np.where(inx, 2.0, 1.0)
                  + g_J[:, 1, 1] * (-fy / z2) + g_J[:, 1, 2] * fy * uy / z2 * np.where(iny, 2.0, 1.0)
                  - g_means[:, 0] * fx * x / z2 - g_means[:, 1] * fy * y / z2
                  + g_feats[:, P])
    g_mu = g_pv @ cam.rotation

    R = prep.R
    s = gs.scale
    Mm = R * s[:, None, :]
    g_M = 2.0 * g_cov3 @ Mm
    g_scale = np.einsum("nij,nij->nj", R, g_M)
    g_R = g_M * s[:, None, :]
    qn = gs.rotation / prep.qnorm[:, None]
    g_qn = quat_rotmat_vjp(qn, g_R)
    g_rot = (g_qn - qn * np.sum(qn * g_qn, axis=1, keepdims=True)) / prep.qnorm[:, None]

    zero = ~valid
    for arr in (g_mu, g_scale, g_rot):
        arr[zero] = 0.0
    g_logits = g_feats[:, :P].copy()
    g_logits[zero] = 0.0
    g_op = np.where(zero, 0.0, g_opac)
    g_dx = np.where(gs.advected[:, None], g_mu, 0.0)
    return GaussianGradients(g_mu, g_dx, g_logits, g_op, g_rot, g_scale)


def quat_rotmat_vjp(q, G):
    """Vector-Jacobian product of the quaternion-to-rotation map for (N, 4) quaternions."""
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    G00, G01, G02 = G[:, 0, 0], G[:, 0, 1], G[:, 0, 2]
    G10, G11, G12 = G[:, 1, 0], G[:, 1, 1], G[:, 1, 2]
    G20, G21, G22 = G[:, 2, 0], G[:, 2, 1], G[:, 2, 2]
    gw = 2 * (-z * G01 + y * G02 + z * G10 - x * G12 - y * G20 + x * G21)
    gx = 2 * (y * G01 + z * G02 + y * G10 - 2 * x * G11 - w * G12 + z * G20 + w * G21 - 2 * x * G22)
    gy = 2 * (-2 * y * G00 + x * G01 + w * G02 + x * G10 + z * G12 - w * G20 + z * G21 - 2 * y * G22)
    gz = 2 * (-2 * z * G00 - w * G01 + x * G02 + w * G10 - 2 * z * G11 + y * G12 + x * G20 + y * G21)
    return np.stack([gw, gx, gy, gz], axis=1)
