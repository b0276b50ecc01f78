import numpy as np
import pytest

from conftest import axis_camera, gaussian_set
from splatflow.dynamics import (LABEL_MIN_WEIGHT, NO_LABEL, advect, decompose, generate_labels,
                                select_virtual_views, voxel_gaussians)
from splatflow.render import render
from splatflow.sampler import gather
from splatflow.scene import FREE, Camera, VoxelGrid

DYN = (1, 2)


def scene_grid(cells, flow=None, dims=(8, 8, 4), origin=(-4.0, -4.0, 6.0)):
    sem = np.full(dims, FREE)
    fl = np.zeros(dims + (2,))
    for idx, c in cells.items():
        sem[idx] = c
        if flow and idx in flow:
            fl[idx] = flow[idx]
    return VoxelGrid(np.asarray(origin), 1.0, sem, 4, flow=fl, visible=sem != FREE)


def test_decompose_partition(rng):
    g = scene_grid({(1, 1, 1): 0, (2, 2, 1): 1, (3, 3, 1): 2, (4, 4, 2): 3})
    occ = np.argwhere(g.occupied)
    idx = occ[rng.integers(0, len(occ), 50)]
    gs = voxel_gaussians(g, g.occupied)
    gs = gaussian_set(g.centers(idx), np.eye(4)[g.semantics[tuple(idx.T)]], 0.5)
    s, d = decompose(gs, g, DYN)
    assert len(s) + len(d) == 50
    n_dyn = int(np.isin(g.semantics[tuple(idx.T)], DYN).sum())
    assert len(d) == n_dyn
    assert len(decompose(gs, g, (0, 1, 2, 3))[0]) == 0
    static_only = gs.subset(~np.isin(g.semantics[tuple(idx.T)], DYN))
    assert len(decompose(static_only, g, DYN)[1]) == 0


def test_decompose_rejects_outside_center():
    g = scene_grid({(1, 1, 1): 0})
    with pytest.raises(ValueError):
        decompose(gaussian_set([100.0, 0, 0], [0, 0, 0, 1.0], 0.5), g, DYN)


def test_advect_shifts_centers_only(rng):
    gs = gaussian_set(rng.normal(size=(5, 3)) + [0, 0, 8], rng.normal(size=(5, 3)), 0.4,
                      delta_x=np.tile([1.0, 0, 0], (5, 1)))
    out = advect(gs)
    np.testing.assert_array_equal(out.mu, gs.mu + [1.0, 0, 0])
    for name in ("logits", "opacity", "rotation", "scale", "delta_x"):
        np.testing.assert_array_equal(getattr(out, name), getattr(gs, name))
    assert out.advected.all() and len(out) == len(gs)
    still = gs.with_(delta_x=np.zeros((5, 3)))
    np.testing.assert_array_equal(advect(still).mu, still.mu)


def test_advect_matches_counter_moving_camera(rng):
    dx = np.array([0.3, -0.2, 0.0])
    gs = gaussian_set(rng.uniform([-1, -1, 6], [1, 1, 9], (5, 3)), rng.normal(size=(5, 2)), 0.6, scale=0.3,
                      delta_x=np.tile(dx, (5, 1)))
    cam = Camera.look_at([0, 0, 0], [0, 0, 1], 60.0, 48, 48, up=(0, -1, 0))
    a = render(advect(gs), cam)
    b = render(gs, cam.translated(-dx))
    np.testing.assert_allclose(a.sem, b.sem, atol=1e-12)
    np.testing.assert_allclose(a.depth, b.depth, atol=1e-12)


def test_gather_then_advect_uses_flow_times_dt():
    g = scene_grid({(4, 4, 0): 1}, flow={(4, 4, 0): (2.0, 0.0)})
    out = gather(g, [[4, 4, 0]], dt=0.5)
    np.testing.assert_array_equal(out.delta_x, [[1.0, 0.0, 0.0]])


def _labels(g, cam):
    return generate_labels(g, cam, DYN, dt=0.5)


def test_single_static_voxel_label():
    cam = axis_camera(f=40.0, c=20.0, size=41)
    g = scene_grid({(4, 4, 1): 0})  # center (0.5, 0.5, 7.5)
    lab = _labels(g, cam)
    assert not lab.dynamic.mask.any()
    m = lab.static.mask
    assert m.any() and np.all(lab.static.classes[m] == 0) and np.all(lab.static.classes[~m] == NO_LABEL)
    u, v = 40.0 * 0.5 / 7.5 + 20, 40.0 * 0.5 / 7.5 + 20
    r, c = int(round(v)), int(round(u))
    assert m[r, c]
    # depth is composited without normalization: near-opaque at the center, z * weight at the fringe
    assert abs(lab.static.depth[r, c] - 7.5) <= 0.5
    maps = render(voxel_gaussians(g, g.occupied), cam)
    np.testing.assert_allclose(lab.static.depth[m] / maps.weight[m], 7.5, rtol=1e-12)


def test_dynamic_voxel_duplicated_footprint():
    cam = axis_camera(f=40.0, c=20.0, size=41)
    g = scene_grid({(4, 4, 1): 1}, flow={(4, 4, 1): (4.0, 0.0)})  # moves 2 m in +x
    lab = _labels(g, cam)
    assert not lab.static.mask.any()
    m = lab.dynamic.mask
    row = int(round(40.0 * 0.5 / 7.5 + 20))
    u0, u1 = 40.0 * 0.5 / 7.5 + 20, 40.0 * 2.5 / 7.5 + 20
    assert m[row, int(round(u0))] and m[row, int(round(u1))]
    assert not m[row, int(round((u0 + u1) / 2))]


def test_label_masks_inside_rendered_support():
    cam = axis_camera(f=40.0, c=20.0, size=41)
    g = scene_grid({(4, 4, 1): 0, (3, 4, 1): 0, (5, 5, 2): 1}, flow={(5, 5, 2): (1.0, 1.0)})
    lab = _labels(g, cam)
    full = render(voxel_gaussians(g, g.occupied, 0.5), cam)
    assert np.all(full.weight[lab.full.mask] >= LABEL_MIN_WEIGHT)
    assert not np.any(lab.full.mask & ~full.mask)


def test_zero_flow_dynamic_labels_repeat_for_static_camera():
    cam = axis_camera(f=40.0, c=20.0, size=41)
    g = scene_grid({(4, 4, 1): 1, (3, 4, 1): 2})
    a = _labels(g, cam).dynamic
    b = _labels(g, Camera(cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height, cam.rotation,
                           cam.translation, timestamp=0.5)).dynamic
    np.testing.assert_array_equal(a.classes, b.classes)
    np.testing.assert_array_equal(a.depth, b.depth)


def test_visible_only_labels_drop_hidden_voxels():
    cam = axis_camera(f=40.0, c=20.0, size=41)
    g = scene_grid({(4, 4, 1): 0})
    g = g.with_(visible=np.zeros(g.dims, dtype=bool))
    assert not generate_labels(g, cam, DYN, visible_only=True).full.mask.any()


def test_select_virtual_views():
    a = [axis_camera() for _ in range(3)]
    b = [axis_camera() for _ in range(2)]
    assert select_virtual_views(a, b, 3) == a
    assert select_virtual_views(a, b, 5) == a + b
    assert select_virtual_views(a, b, 4) == a + b[:1]
    with pytest.raises(ValueError):
        select_virtual_views(a, b, 6)
