"""First-hit voxel traversal (Amanatides-Woo DDA) shared by visibility and RayIoU."""

import numba
import numpy as np


@numba.njit(cache=True)
def _cast_one(o, d, occ, origin, vs, out_idx):
    H, W, D = occ.shape
    dims = (H, W, D)
    t_enter = 0.0
    t_exit = np.inf
    for a in range(3):
        lo = origin[a]
        hi = origin[a] + dims[a] * vs
        if d[a] == 0.0:
            if o[a] < lo or o[a] >= hi:
                return -1.0
        else:
            t0 = (lo - o[a]) / d[a]
            t1 = (hi - o[a]) / d[a]
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > t_enter:
                t_enter = t0
            if t1 < t_exit:
                t_exit = t1
    if t_enter >= t_exit:
        return -1.0
    idx = np.empty(3, np.int64)
    step = np.empty(3, np.int64)
    t_max = np.empty(3)
    t_delta = np.empty(3)
    for a in range(3):
        p = o[a] + t_enter * d[a]
        i = int(np.floor((p - origin[a]) / vs))
        if i < 0:
            i = 0
        if i >= dims[a]:
            i = dims[a] - 1
        idx[a] = i
        if d[a] > 0.0:
            step[a] = 1
            t_max[a] = (origin[a] + (i + 1) * vs - o[a]) / d[a]
            t_delta[a] = vs / d[a]
        elif d[a] < 0.0:
            step[a] = -1
            t_max[a] = (origin[a] + i * vs - o[a]) / d[a]
            t_delta[a] = -vs / d[a]
        else:
            step[a] = 0
            t_max[a] = np.inf
            t_delta[a] = np.inf
    t = t_enter
    while True:
        if occ[idx[0], idx[1], idx[2]]:
            out_idx[0] = idx[0]
            out_idx[1] = idx[1]
            out_idx[2] = idx[2]
            return t
        a = 0
        if t_max[1] < t_max[a]:
            a = 1
        if t_max[2] < t_max[a]:
            a = 2
        t = t_max[a]
        idx[a] += step[a]
        if idx[a] < 0 or idx[a] >= dims[a]:
            return -1.0
        t_max[a] += t_delta[a]


@numba.njit(cache=True)
def _cast_all(origins, dirs, occ, origin, vs):
    n = origins.shape[0]
    hit = np.full((n, 3), -1, np.int64)
    depth = np.full(n, -1.0)
    buf = np.empty(3, np.int64)
    for r in range(n):
        t = _cast_one(origins[r], dirs[r], occ, origin, vs, buf)
        if t >= 0.0:
            hit[r] = buf
            depth[r] = t
    return hit, depth


def cast_rays(occupied, origin, voxel_size, ray_origins, ray_dirs):
    """Trace rays through a boolean occupancy volume.

    Every voxel a ray crosses is visited, so no voxel is skipped regardless
    of how thin the crossing is. Directions are normalized here. Returns
    ``(hit, depth)``: the (R, 3) first occupied voxel index (-1 for misses)
    and the (R,) distance to that voxel's entry point (-1 for misses).
    """
    o = np.ascontiguousarray(np.asarray(ray_origins, dtype=np.float64).reshape(-1, 3))
    d = np.asarray(ray_dirs, dtype=np.float64).reshape(-1, 3)
    d = np.ascontiguousarray(d / np.linalg.norm(d, axis=1, keepdims=True))
    if o.shape[0] == 1 and d.shape[0] > 1:
        o = np.ascontiguousarray(np.broadcast_to(o, d.shape))
    occ = np.ascontiguousarray(np.asarray(occupied, dtype=np.uint8))
    return _cast_all(o, d, occ, np.asarray(origin, dtype=np.float64), float(voxel_size))
