import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import axis_camera
from splatflow.projection import (DILATION, compute_visibility_mask, frustum_limits, perspective_jacobian,
                                  project_covariance, project_gaussians, project_point, unproject_point)
from splatflow.scene import FREE, Camera, VoxelGrid


def test_project_point_examples(cam):
    pix, depth, valid = project_point([0, 0, 10], cam)
    np.testing.assert_allclose(pix, [50, 50])
    assert depth == 10 and valid
    pix, _, _ = project_point([1, 0, 10], cam)
    assert pix[0] == 60
    assert not project_point([0, 0, -1], cam)[2]
    assert not project_point([0, 0, 0.05], cam)[2]


@given(st.floats(-np.pi, np.pi), st.floats(-0.5, 0.5),
       st.lists(st.floats(-20, 20), min_size=3, max_size=3))
def test_unproject_inverts_project(yaw, pitch, p):
    fwd = [np.cos(yaw) * np.cos(pitch), np.sin(yaw) * np.cos(pitch), np.sin(pitch)]
    cam = Camera.look_at([1.0, -2.0, 1.5], np.add([1.0, -2.0, 1.5], fwd), 70.0, 64, 48)
    p = np.asarray(p)
    pix, depth, valid = project_point(p, cam)
    if abs(depth) < 1e-3:
        return
    np.testing.assert_allclose(unproject_point(pix, depth, cam), p, atol=1e-9)


def test_isotropic_axis_covariance():
    sigma, f, z = 0.3, 100.0, 10.0
    cov = project_covariance(sigma ** 2 * np.eye(3), np.eye(3), [0, 0, z], (f, f, 50, 50))
    np.testing.assert_allclose(cov, ((f * sigma / z) ** 2 + DILATION) * np.eye(2), rtol=1e-14)
    cov2 = project_covariance(sigma ** 2 * np.eye(3), np.eye(3), [0, 0, 2 * z], (f, f, 50, 50))
    np.testing.assert_allclose(cov2 - DILATION * np.eye(2), (cov - DILATION * np.eye(2)) / 4, rtol=1e-14)
    np.testing.assert_array_equal(project_covariance(np.zeros((3, 3)), np.eye(3), [1, 2, 5], (f, f, 0, 0)),
                                  DILATION * np.eye(2))


@settings(max_examples=50)
@given(st.integers(0, 2 ** 31))
def test_projected_covariance_symmetric_pd(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 3))
    cov3 = A @ A.T
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    cov = project_covariance(cov3, q, [rng.normal(), rng.normal(), rng.uniform(0.5, 20)], (80, 90, 0, 0))
    np.testing.assert_array_equal(cov, cov.T)
    assert np.all(np.linalg.eigvalsh(cov) >= DILATION * (1 - 1e-12))


def test_jacobian_matches_finite_differences():
    p = np.array([0.4, -0.3, 3.0])
    J = perspective_jacobian(p, 70.0, 90.0)
    f = lambda q: np.array([70.0 * q[0] / q[2], 90.0 * q[1] / q[2]])  # noqa: E731
    h = 1e-6
    num = np.stack([(f(p + h * e) - f(p - h * e)) / (2 * h) for e in np.eye(3)], axis=1)
    np.testing.assert_allclose(J, num, rtol=1e-7)


def test_batch_projection_matches_single_inside_frustum(cam, rng):
    mu = np.column_stack([rng.uniform(-2, 2, 20), rng.uniform(-2, 2, 20), rng.uniform(4, 10, 20)])
    A = rng.normal(size=(20, 3, 3)) * 0.2
    cov3 = A @ np.transpose(A, (0, 2, 1))
    means, depth, cov, valid, _, _ = project_gaussians(mu, cov3, cam)
    assert valid.all()
    for i in range(20):
        pix, d, _ = project_point(mu[i], cam)
        np.testing.assert_allclose(means[i], pix, rtol=1e-13)
        np.testing.assert_allclose(cov[i], project_covariance(cov3[i], cam.rotation, mu[i], cam.intrinsics), rtol=1e-12)


def test_frustum_guard_bounds_off_axis_footprint(cam):
    # a Gaussian far to the side at small depth: the Jacobian is taken at the clamped direction
    limx, _ = frustum_limits(cam)
    mu = np.array([[5.0, 0.0, 0.5], [limx * 0.5, 0.0, 0.5]])
    cov3 = np.tile(0.01 * np.eye(3), (2, 1, 1))
    _, _, cov, _, _, _ = project_gaussians(mu, cov3, cam)
    clamped = project_covariance(cov3[0], np.eye(3), [limx * 0.5, 0.0, 0.5], cam.intrinsics)
    np.testing.assert_allclose(cov[0], clamped, rtol=1e-12)
    np.testing.assert_allclose(cov[1], project_covariance(cov3[1], np.eye(3), mu[1], cam.intrinsics), rtol=1e-12)


def _grid_with(cells, dims=(6, 3, 3)):
    sem = np.full(dims, FREE)
    for c in cells:
        sem[c] = 0
    return VoxelGrid(np.array([0.0, -1.5, -1.5]), 1.0, sem, 1)


def _cam_down_x():
    # at x = -2 looking along +x
    return Camera.look_at([-2.0, 0.0, 0.0], [1.0, 0.0, 0.0], 40.0, 32, 32)


def test_visibility_empty_grid():
    assert not compute_visibility_mask(_grid_with([]), [_cam_down_x()]).any()


def test_visibility_single_voxel_and_occlusion():
    vis = compute_visibility_mask(_grid_with([(2, 1, 1)]), [_cam_down_x()], stride=1)
    assert vis[2, 1, 1] and vis.sum() == 1
    vis = compute_visibility_mask(_grid_with([(1, 1, 1), (4, 1, 1)]), [_cam_down_x()], stride=1)
    assert vis[1, 1, 1] and not vis[4, 1, 1]


def test_visibility_monotone_in_cameras():
    g = _grid_with([(1, 1, 1), (4, 1, 1), (3, 0, 2)])
    a = compute_visibility_mask(g, [_cam_down_x()], stride=1)
    back = Camera.look_at([8.0, 0.0, 0.0], [0.0, 0.0, 0.0], 40.0, 32, 32)
    b = compute_visibility_mask(g, [_cam_down_x(), back], stride=1)
    assert np.all(b[a]) and b[4, 1, 1]


def test_axis_camera_helper_is_centered():
    c = axis_camera(f=10.0, c=5.0, size=11)
    np.testing.assert_allclose(project_point([0, 0, 1], c)[0], [5, 5])
