import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatflow.scene import (FREE, Camera, Gaussian, GaussianSet, InvalidParameterError, VoxelGrid,
                             axis_angle_quat, build_covariance, voxel_center)

unit_quats = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.asarray(v) / np.linalg.norm(v))
scales = st.lists(st.floats(0.01, 5.0), min_size=3, max_size=3).map(np.asarray)


def test_covariance_identity_rotation():
    np.testing.assert_allclose(build_covariance([1, 0, 0, 0], [1, 2, 3]), np.diag([1.0, 4.0, 9.0]), atol=1e-15)


def test_covariance_quarter_turn_about_z_swaps_axes():
    q = axis_angle_quat([0, 0, 1], np.pi / 2)
    np.testing.assert_allclose(build_covariance(q, [1, 2, 1]), np.diag([4.0, 1.0, 1.0]), atol=1e-12)


@given(unit_quats)
def test_isotropic_scale_is_rotation_invariant(q):
    np.testing.assert_allclose(build_covariance(q, [0.5, 0.5, 0.5]), 0.25 * np.eye(3), atol=1e-12)


@given(unit_quats, scales)
def test_covariance_spd_and_double_cover(q, s):
    cov = build_covariance(q, s)
    np.testing.assert_array_equal(cov, cov.T)
    np.linalg.cholesky(cov)
    np.testing.assert_allclose(np.linalg.eigvalsh(cov), np.sort(s ** 2), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(build_covariance(-q, s), cov, atol=1e-15)


def test_covariance_rejects_non_unit_quaternion():
    with pytest.raises(InvalidParameterError):
        build_covariance([1.0, 0.1, 0, 0], [1, 1, 1])
    with pytest.raises(InvalidParameterError):
        build_covariance([1.0, 0, 0, 0], [1, 0, 1])


def test_voxel_center_examples():
    g = VoxelGrid(np.zeros(3), 0.4, np.full((2, 2, 2), FREE), 2)
    np.testing.assert_allclose(voxel_center(g, (0, 0, 0)), [0.2, 0.2, 0.2])
    g = VoxelGrid(np.array([-40.0, -40.0, -1.0]), 0.4, np.full((200, 200, 16), FREE, dtype=np.int8), 2)
    np.testing.assert_allclose(voxel_center(g, (100, 100, 0)), [0.2, 0.2, -0.8], atol=1e-12)
    with pytest.raises(IndexError):
        voxel_center(g, g.dims)
    with pytest.raises(IndexError):
        voxel_center(g, (-1, 0, 0))


def test_voxel_center_injective():
    g = VoxelGrid(np.array([1.0, -2.0, 0.5]), 0.3, np.full((5, 4, 3), FREE), 2)
    idx = np.argwhere(np.ones(g.dims, dtype=bool))
    c = g.centers(idx)
    assert len(np.unique(np.round(c, 9), axis=0)) == len(idx)


def test_voxel_grid_invariants():
    sem = np.full((2, 2, 1), FREE)
    sem[0, 0, 0] = 1
    flow = np.zeros((2, 2, 1, 2))
    flow[0, 0, 0] = (1.0, 0.0)
    g = VoxelGrid(np.zeros(3), 1.0, sem, 2, flow=flow)
    assert g.occupied.sum() == 1 and g.visible.shape == sem.shape
    bad = flow.copy()
    bad[1, 1, 0] = (0.5, 0)
    with pytest.raises(InvalidParameterError):
        VoxelGrid(np.zeros(3), 1.0, sem, 2, flow=bad)
    with pytest.raises(InvalidParameterError):
        VoxelGrid(np.zeros(3), 0.0, sem, 2)
    with pytest.raises(InvalidParameterError):
        VoxelGrid(np.zeros(3), 1.0, sem, 1)  # class 1 out of range
    with pytest.raises(InvalidParameterError):
        VoxelGrid(np.zeros(3), 1.0, sem, 2, flow=np.full((2, 2, 1, 2), np.nan))
    with pytest.raises(InvalidParameterError):
        VoxelGrid(np.zeros(3), 1.0, sem, 2, visible=np.zeros((2, 2), dtype=bool))


def test_gaussian_invariants():
    Gaussian(np.zeros(3), np.zeros(3), np.zeros(2), 0.5, [1, 0, 0, 0], [1, 1, 1])
    for op, q, s in ((1.0, [1, 0, 0, 0], [1, 1, 1]), (0.5, [2, 0, 0, 0], [1, 1, 1]), (0.5, [1, 0, 0, 0], [1, -1, 1])):
        with pytest.raises(InvalidParameterError):
            Gaussian(np.zeros(3), np.zeros(3), np.zeros(2), op, q, s)


def test_gaussian_set_roundtrip_and_concat():
    g = Gaussian([0, 0, 5.0], [0.1, 0, 0], [1.0, 2.0], 0.3, [1, 0, 0, 0], [0.1, 0.2, 0.3])
    gs = GaussianSet.from_gaussians([g, g])
    assert len(gs) == 2 and gs.num_classes == 2
    np.testing.assert_array_equal(gs[1].scale, g.scale)
    both = GaussianSet.concat(gs, GaussianSet.empty(2))
    assert len(both) == 2
    np.testing.assert_allclose(gs.covariances()[0], g.covariance)


def test_camera_validation_and_center():
    cam = Camera.look_at([1.0, 2.0, 3.0], [1.0, 12.0, 3.0], 90.0, 64, 48)
    np.testing.assert_allclose(cam.center, [1, 2, 3], atol=1e-12)
    np.testing.assert_allclose(cam.fx, 32.0)
    with pytest.raises(InvalidParameterError):
        Camera(1, 1, 0, 0, 4, 4, np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(InvalidParameterError):
        Camera(-1, 1, 0, 0, 4, 4, np.eye(3), np.zeros(3))
    with pytest.raises(InvalidParameterError):
        Camera(1, 1, 0, 0, 0, 4, np.eye(3), np.zeros(3))
    moved = cam.translated([0.5, 0, 0], timestamp=0.5)
    np.testing.assert_allclose(moved.center, [1.5, 2, 3], atol=1e-12)
    assert moved.timestamp == 0.5


@settings(max_examples=50)
@given(st.floats(-np.pi, np.pi), st.floats(-1.0, 1.0))
def test_look_at_rotation_is_proper(yaw, pitch):
    fwd = np.array([np.cos(yaw) * np.cos(pitch), np.sin(yaw) * np.cos(pitch), np.sin(pitch)])
    cam = Camera.look_at([0, 0, 0], fwd, 60.0, 32, 32)
    R = cam.rotation
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(R) - 1) < 1e-12
