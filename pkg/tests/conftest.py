import numpy as np
import pytest

from splatflow.scene import Camera, GaussianSet, VoxelGrid


def axis_camera(f=100.0, c=50.0, size=101):
    """Camera at the origin looking down +z, x right, y down."""
    return Camera(f, f, c, c, size, size, np.eye(3), np.zeros(3))


def gaussian_set(mu, logits, opacity, scale=0.2, rotation=None, delta_x=None):
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    n = mu.shape[0]
    rot = np.tile([1.0, 0, 0, 0], (n, 1)) if rotation is None else rotation
    sc = np.broadcast_to(np.asarray(scale, dtype=np.float64), (n, 3)).copy()
    dx = np.zeros((n, 3)) if delta_x is None else delta_x
    return GaussianSet(mu, dx, np.atleast_2d(logits), np.broadcast_to(opacity, (n,)).copy(), rot, sc)


def small_grid(dims=(4, 4, 2), num_classes=3, voxel_size=1.0, origin=(0.0, 0.0, 0.0)):
    return VoxelGrid(np.asarray(origin, dtype=np.float64), voxel_size, np.full(dims, -1), num_classes)


@pytest.fixture
def cam():
    return axis_camera()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
