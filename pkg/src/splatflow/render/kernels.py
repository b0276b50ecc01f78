"""Numba tile kernels for forward compositing and its reverse pass.

Both kernels walk tiles in row-major order and pixels within a tile in
row-major order, so results are reproducible run to run. Per-pixel
arithmetic is written in the same order as the brute-force oracle.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def forward_tiles(means, conics, opac, feats, tile_ptr, tile_ids, width, height, tile,
                  rs2, cutoff, floor, max_alpha):
    n_tx = (width + tile - 1) // tile
    nf = feats.shape[1]
    out = np.zeros((height, width, nf))
    weight = np.zeros((height, width))
    for t in range(tile_ptr.shape[0] - 1):
        start = tile_ptr[t]
        end = tile_ptr[t + 1]
        if start == end:
            continue
        ty = t // n_tx
        tx = t - ty * n_tx
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                T = 1.0
                for e in range(start, end):
                    g = tile_ids[e]
                    dx = px - means[g, 0]
                    dy = py - means[g, 1]
                    q = conics[g, 0] * dx * dx + 2.0 * conics[g, 1] * dx * dy + conics[g, 2] * dy * dy
                    if q > rs2:
                        continue
                    a = opac[g] * np.exp(-0.5 * q)
                    if a > max_alpha:
                        a = max_alpha
                    if a < cutoff:
                        continue
                    w = a * T
                    for k in range(nf):
                        out[py, px, k] += feats[g, k] * w
                    weight[py, px] += w
                    T = T * (1.0 - a)
                    if T < floor:
                        break
    return out, weight


@numba.njit(cache=True)
def backward_tiles(means, conics, opac, feats, tile_ptr, tile_ids, width, height, tile,
                   rs2, cutoff, floor, max_alpha, upstream):
    """Accumulate dL/d(means, conics, opacity, feats) given dL/d(feature image)."""
    n = means.shape[0]
    nf = feats.shape[1]
    n_tx = (width + tile - 1) // tile
    g_means = np.zeros((n, 2))
    g_conics = np.zeros((n, 3))
    g_opac = np.zeros(n)
    g_feats = np.zeros((n, nf))
    for t in range(tile_ptr.shape[0] - 1):
        start = tile_ptr[t]
        end = tile_ptr[t + 1]
        if start == end:
            continue
        ty = t // n_tx
        tx = t - ty * n_tx
        m = end - start
        c_ids = np.empty(m, np.int64)
        c_a = np.empty(m)
        c_T = np.empty(m)
        c_q = np.empty(m)
        c_clamped = np.empty(m, np.bool_)
        for py in range(ty * tile, min((ty + 1) * tile, height)):
            for px in range(tx * tile, min((tx + 1) * tile, width)):
                up = upstream[py, px]
                T = 1.0
                nc = 0
                for e in range(start, end):
                    g = tile_ids[e]
                    dx = px - means[g, 0]
                    dy = py - means[g, 1]
                    q = conics[g, 0] * dx * dx + 2.0 * conics[g, 1] * dx * dy + conics[g, 2] * dy * dy
                    if q > rs2:
                        continue
                    a = opac[g] * np.exp(-0.5 * q)
                    clamped = False
                    if a > max_alpha:
                        a = max_alpha
                        clamped = True
                    if a < cutoff:
                        continue
                    c_ids[nc] = g
                    c_a[nc] = a
                    c_T[nc] = T
                    c_q[nc] = q
                    c_clamped[nc] = clamped
                    nc += 1
                    T = T * (1.0 - a)
                    if T < floor:
                        break
                # suffix of sum_j>i (up . c_j) w_j
                after = 0.0
                for r in range(nc - 1, -1, -1):
                    g = c_ids[r]
                    a = c_a[r]
                    Ti = c_T[r]
                    w = a * Ti
                    dot = 0.0
                    for k in range(nf):
                        g_feats[g, k] += up[k] * w
                        dot += up[k] * feats[g, k]
                    dL_da = Ti * dot - after / (1.0 - a)
                    after += dot * w
                    if c_clamped[r]:
                        continue
                    gexp = np.exp(-0.5 * c_q[r])
                    g_opac[g] += dL_da * gexp
                    dL_dq = dL_da * opac[g] * gexp * -0.5
                    dx = px - means[g, 0]
                    dy = py - means[g, 1]
                    g_conics[g, 0] += dL_dq * dx * dx
                    g_conics[g, 1] += dL_dq * 2.0 * dx * dy
                    g_conics[g, 2] += dL_dq * dy * dy
                    g_means[g, 0] -= dL_dq * (2.0 * conics[g, 0] * dx + 2.0 * conics[g, 1] * dy)
                    g_means[g, 1] -= dL_dq * (2.0 * conics[g, 1] * dx + 2.0 * conics[g, 2] * dy)
    return g_means, g_conics, g_opac, g_feats
