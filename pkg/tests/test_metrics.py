import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatflow.metrics import camera_ray_set, mave, miou, ray_iou
from splatflow.scene import FREE, Camera, VoxelGrid


def grid(sem, flow=None, vs=1.0):
    sem = np.asarray(sem)
    return VoxelGrid(np.zeros(3), vs, sem, 4, flow=flow)


def with_flow(sem, entries):
    sem = np.asarray(sem)
    f = np.zeros(sem.shape + (2,))
    for idx, v in entries.items():
        f[idx] = v
    return grid(sem, f)


def random_grid(rng, dims=(6, 6, 3)):
    sem = np.where(rng.random(dims) < 0.3, rng.integers(0, 4, dims), FREE)
    f = np.where((sem != FREE)[..., None], rng.normal(size=dims + (2,)), 0.0)
    return grid(sem, f)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_identity_scores(seed):
    g = random_grid(np.random.default_rng(seed))
    assert mave(g, g, (1, 2))[1] == 0.0
    o = np.array([[-2.0, 3.0, 1.5]])
    d = np.random.default_rng(seed).normal(size=(200, 3)) + [1.0, 0, 0]
    per, mean = ray_iou(g, g, o, d)
    assert per == {1.0: 1.0, 2.0: 1.0, 4.0: 1.0} and mean == 1.0
    assert miou(g, g)[1] == 1.0


def test_mave_single_tp():
    sem = np.full((3, 1, 1), FREE)
    sem[0] = 1
    gt = with_flow(sem, {})
    pred = with_flow(sem, {(0, 0, 0): (1.0, 0.0)})
    per, mean = mave(pred, gt, (1,))
    assert per == {1: 1.0} and mean == 1.0


def test_mave_excludes_miss():
    # three voxels along x at 0.5 m: gt at x=0, predictions at x=0 (TP, error 3) and x=8 (miss)
    sem_gt = np.full((10, 1, 1), FREE)
    sem_gt[0] = 1
    gt = with_flow(sem_gt, {(0, 0, 0): (1.0, 0.0)})
    sem_p = sem_gt.copy()
    sem_p[8] = 1
    pred = with_flow(sem_p, {(0, 0, 0): (4.0, 0.0), (8, 0, 0): (50.0, 0.0)})
    per, mean = mave(pred, gt, (1,))
    assert per == {1: 3.0} and mean == 3.0


def test_mave_nearest_match_and_tie():
    sem = np.full((5, 1, 1), FREE)
    sem[[1, 3]] = 2
    gt = with_flow(sem, {(1, 0, 0): (1.0, 0.0), (3, 0, 0): (3.0, 0.0)})
    sem_p = np.full((5, 1, 1), FREE)
    sem_p[2] = 2  # equidistant: the smaller index (1) wins
    pred = with_flow(sem_p, {(2, 0, 0): (0.0, 0.0)})
    assert mave(pred, gt, (2,))[0] == {2: 1.0}


def test_mave_macro_average_and_empty():
    sem = np.full((4, 1, 1), FREE)
    sem[0], sem[3] = 1, 2
    gt = with_flow(sem, {})
    pred = with_flow(sem, {(0, 0, 0): (1.0, 0.0), (3, 0, 0): (0.0, 3.0)})
    assert mave(pred, gt, (1, 2, 3)) == ({1: 1.0, 2: 3.0}, 2.0)
    assert mave(grid(np.full((4, 1, 1), FREE)), gt, (1,)) == ({}, 0.0)


def _wall(x):
    sem = np.full((12, 3, 3), FREE)
    sem[x] = 0
    return grid(sem)


def test_ray_iou_examples():
    o = np.array([[-0.5, 1.5, 1.5]])
    d = np.array([[1.0, 0.0, 0.0]])
    gt = _wall(2)
    assert ray_iou(grid(np.full((12, 3, 3), FREE)), gt, o, d)[1] == 0.0
    per, mean = ray_iou(_wall(5), gt, o, d)
    assert per == {1.0: 0.0, 2.0: 0.0, 4.0: 1.0}
    np.testing.assert_allclose(mean, 1 / 3)
    with pytest.raises(ValueError):
        ray_iou(gt, gt, o, np.zeros((0, 3)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_ray_iou_monotone_in_threshold(seed):
    rng = np.random.default_rng(seed)
    a, b = random_grid(rng), random_grid(rng)
    o = np.array([[-2.0, 3.0, 1.5]])
    d = rng.normal(size=(300, 3)) + [2.0, 0, 0]
    per, _ = ray_iou(a, b, o, d, thresholds=(0.5, 1.0, 2.0, 4.0))
    vals = [per[t] for t in (0.5, 1.0, 2.0, 4.0)]
    assert all(0 <= v <= 1 for v in vals) and vals == sorted(vals)


def test_miou_examples():
    a = np.full((3, 1, 1), FREE)
    b = a.copy()
    a[0], b[1] = 0, 0
    assert miou(grid(a), grid(b))[1] == 0.0
    a2 = np.full((3, 1, 1), FREE)
    a2[[0, 1]] = 0
    b2 = np.full((3, 1, 1), FREE)
    b2[[1, 2]] = 0
    np.testing.assert_allclose(miou(grid(a2), grid(b2))[1], 1 / 3)


def test_misaligned_grids_rejected():
    with pytest.raises(ValueError):
        miou(grid(np.full((2, 1, 1), FREE)), grid(np.full((2, 1, 1), FREE), vs=0.5))


def test_camera_ray_set_shapes():
    cam = Camera.look_at([0, 0, 0], [1, 0, 0], 60, 16, 12)
    o, d = camera_ray_set([cam, cam], stride=4)
    assert o.shape == d.shape == (2 * 4 * 3, 3)
    np.testing.assert_allclose(np.linalg.norm(d, axis=1), 1.0)
