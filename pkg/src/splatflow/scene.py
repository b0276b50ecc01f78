"""Core domain types: voxel grids, semantic Gaussians, cameras and rendered maps."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

FREE = -1
"""Semantic id of an unoccupied voxel."""

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])

QUAT_TOL = 1e-9
ROT_TOL = 1e-9


class InvalidParameterError(ValueError):
    """Raised when a domain object is constructed with out-of-domain values."""


def quat_to_rotmat(q):
    """Rotation matrix of a unit quaternion ``(w, x, y, z)``."""
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_to_rotmat_batch(q):
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((q.shape[0], 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def axis_angle_quat(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def build_covariance(rotation, scale):
    """World-space covariance ``R diag(s) diag(s)^T R^T`` of one Gaussian.

    Raises InvalidParameterError if ``rotation`` is not a unit quaternion.
    """
    q = np.asarray(rotation, dtype=np.float64)
    s = np.asarray(scale, dtype=np.float64)
    if q.shape != (4,) or s.shape != (3,):
        raise InvalidParameterError("rotation must be a 4-vector and scale a 3-vector")
    if abs(np.linalg.norm(q) - 1.0) > QUAT_TOL:
        raise InvalidParameterError(f"rotation quaternion has norm {np.linalg.norm(q)!r}")
    if np.any(s <= 0):
        raise InvalidParameterError("scale components must be positive")
    M = quat_to_rotmat(q) * s[None, :]
    cov = M @ M.T
    return 0.5 * (cov + cov.T)


def build_covariance_batch(rotation, scale):
    """Vectorized covariance for (N, 4) quaternions and (N, 3) scales, no validation."""
    M = quat_to_rotmat_batch(rotation) * np.asarray(scale)[:, None, :]
    return M @ np.transpose(M, (0, 2, 1))


@dataclass(frozen=True, eq=False)
class Camera:
    """Pinhole camera with a rigid world-to-camera transform.

    The camera frame is x right, y down, z forward. ``rotation`` and
    ``translation`` map world points as ``p_cam = rotation @ p_world + translation``.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if R.shape != (3, 3) or t.shape != (3,):
            raise InvalidParameterError("camera rotation must be 3x3 and translation a 3-vector")
        if np.abs(R @ R.T - np.eye(3)).max() > ROT_TOL or abs(np.linalg.det(R) - 1.0) > ROT_TOL:
            raise InvalidParameterError("camera rotation is not a proper rotation")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidParameterError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError("image size must be positive")

    @property
    def intrinsics(self):
        return (self.fx, self.fy, self.cx, self.cy)

    @property
    def image_size(self):
        return (self.width, self.height)

    @property
    def center(self):
        """Camera origin in world coordinates."""
        return -self.rotation.T @ self.translation

    @classmethod
    def look_at(cls, eye, target, fov_deg, width, height, up=(0.0, 0.0, 1.0), timestamp=0.0):
        """Camera at ``eye`` looking toward ``target`` with horizontal field of view ``fov_deg``."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(fwd, right)
        R = np.stack([right, down, fwd])
        f = 0.5 * width / np.tan(np.deg2rad(fov_deg) / 2)
        return cls(f, f, (width - 1) / 2, (height - 1) / 2, width, height, R, -R @ eye, timestamp)

    def translated(self, offset, timestamp=None):
        """Same orientation with the camera origin moved by ``offset`` (world frame)."""
        t = self.translation - self.rotation @ np.asarray(offset, dtype=np.float64)
        return replace(self, translation=t, timestamp=self.timestamp if timestamp is None else timestamp)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Semantic occupancy field with per-voxel x-y scene flow.

    ``semantics`` has shape (H, W, D) holding class ids or FREE. ``flow`` is
    (H, W, D, 2) in m/s, ``embeddings`` is (H, W, D, C) and ``visible`` is a
    boolean camera-visibility mask shaped like ``semantics``.
    """

    origin: np.ndarray
    voxel_size: float
    semantics: np.ndarray
    num_classes: int
    flow: np.ndarray = None
    embeddings: np.ndarray = None
    visible: np.ndarray = None

    def __post_init__(self):
        sem = np.asarray(self.semantics, dtype=np.int64)
        if sem.ndim != 3 or min(sem.shape) <= 0:
            raise InvalidParameterError("semantics must be a non-empty (H, W, D) array")
        origin = np.asarray(self.origin, dtype=np.float64)
        if origin.shape != (3,):
            raise InvalidParameterError("origin must be a 3-vector")
        if not self.voxel_size > 0:
            raise InvalidParameterError("voxel_size must be positive")
        if self.num_classes <= 0:
            raise InvalidParameterError("num_classes must be positive")
        if sem.min() < FREE or sem.max() >= self.num_classes:
            raise InvalidParameterError("semantic ids must be FREE or in [0, num_classes)")
        flow = np.zeros(sem.shape + (2,)) if self.flow is None else np.asarray(self.flow, dtype=np.float64)
        if flow.shape != sem.shape + (2,):
            raise InvalidParameterError(f"flow shape {flow.shape} does not match {sem.shape + (2,)}")
        if not np.all(np.isfinite(flow)):
            raise InvalidParameterError("flow must be finite")
        if np.any(flow[sem == FREE] != 0):
            raise InvalidParameterError("FREE voxels must have zero flow")
        emb = np.zeros(sem.shape + (0,)) if self.embeddings is None else np.asarray(self.embeddings, dtype=np.float64)
        if emb.shape[:3] != sem.shape or emb.ndim != 4:
            raise InvalidParameterError("embeddings must be (H, W, D, C)")
        if not np.all(np.isfinite(emb)):
            raise InvalidParameterError("embeddings must be finite")
        vis = np.zeros(sem.shape, dtype=bool) if self.visible is None else np.asarray(self.visible, dtype=bool)
        if vis.shape != sem.shape:
            raise InvalidParameterError("visible mask must match semantics shape")
        for name, value in (("semantics", sem), ("origin", origin), ("flow", flow), ("embeddings", emb), ("visible", vis)):
            object.__setattr__(self, name, value)
        object.__setattr__(self, "voxel_size", float(self.voxel_size))

    @property
    def dims(self):
        return self.semantics.shape

    @property
    def occupied(self):
        return self.semantics != FREE

    def with_(self, **changes):
        return replace(self, **changes)

    def centers(self, indices):
        """Centers of an (N, 3) integer index array, no bounds check."""
        return self.origin + (np.asarray(indices, dtype=np.float64) + 0.5) * self.voxel_size

    def index_of(self, points):
        """Integer voxel indices containing (N, 3) world points (may be out of bounds)."""
        return np.floor((np.asarray(points, dtype=np.float64) - self.origin) / self.voxel_size).astype(np.int64)

    def in_bounds(self, indices):
        idx = np.asarray(indices)
        return np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=-1)


def voxel_center(grid, index):
    """World-space center of voxel ``index`` = origin + (index + 0.5) * voxel_size."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.shape != (3,) or not grid.in_bounds(idx):
        raise IndexError(f"voxel index {tuple(idx)} outside grid of dims {grid.dims}")
    return grid.centers(idx)


@dataclass(frozen=True, eq=False)
class Gaussian:
    """A single semantic Gaussian; validated on construction."""

    mu: np.ndarray
    delta_x: np.ndarray
    logits: np.ndarray
    opacity: float
    rotation: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        for name in ("mu", "delta_x", "logits", "rotation", "scale"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        _check_gaussian_arrays(self.mu[None], self.delta_x[None], self.logits[None],
                               np.array([self.opacity]), self.rotation[None], self.scale[None])

    @property
    def covariance(self):
        return build_covariance(self.rotation, self.scale)


def _check_gaussian_arrays(mu, delta_x, logits, opacity, rotation, scale):
    n = mu.shape[0]
    shapes = {"mu": (mu, 3), "delta_x": (delta_x, 3), "rotation": (rotation, 4), "scale": (scale, 3)}
    for name, (arr, width) in shapes.items():
        if arr.shape != (n, width):
            raise InvalidParameterError(f"{name} must have shape ({n}, {width}), got {arr.shape}")
    if logits.ndim != 2 or logits.shape[0] != n:
        raise InvalidParameterError("logits must have shape (N, P)")
    if opacity.shape != (n,):
        raise InvalidParameterError("opacity must have shape (N,)")
    for arr in (mu, delta_x, logits, opacity, rotation, scale):
        if not np.all(np.isfinite(arr)):
            raise InvalidParameterError("Gaussian parameters must be finite")
    if np.any((opacity <= 0) | (opacity >= 1)):
        raise InvalidParameterError("opacity must lie in (0, 1)")
    if n and np.abs(np.linalg.norm(rotation, axis=1) - 1).max() > QUAT_TOL:
        raise InvalidParameterError("rotation quaternions must have unit norm")
    if np.any(scale <= 0):
        raise InvalidParameterError("scale components must be positive")


@dataclass(frozen=True, eq=False)
class GaussianSet:
    """Structure-of-arrays collection of N semantic Gaussians.

    ``advected`` marks Gaussians whose center already includes their
    displacement (``mu = mu_source + delta_x``); for those the renderer
    reports the center gradient as the displacement gradient as well.
    ``source`` holds the flat index of the voxel each Gaussian was decoded
    from, or -1.
    """

    mu: np.ndarray
    delta_x: np.ndarray
    logits: np.ndarray
    opacity: np.ndarray
    rotation: np.ndarray
    scale: np.ndarray
    advected: np.ndarray = None
    source: np.ndarray = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        f = lambda a: np.asarray(a, dtype=np.float64)  # noqa: E731
        mu, dx, lg = f(self.mu).reshape(-1, 3), f(self.delta_x).reshape(-1, 3), f(self.logits)
        op, rot, sc = f(self.opacity).reshape(-1), f(self.rotation).reshape(-1, 4), f(self.scale).reshape(-1, 3)
        if lg.ndim == 1:
            lg = lg.reshape(mu.shape[0], -1)
        n = mu.shape[0]
        adv = np.zeros(n, dtype=bool) if self.advected is None else np.asarray(self.advected, dtype=bool)
        src = np.full(n, -1, dtype=np.int64) if self.source is None else np.asarray(self.source, dtype=np.int64)
        if adv.shape != (n,) or src.shape != (n,):
            raise InvalidParameterError("advected and source must have shape (N,)")
        if self.validate:
            _check_gaussian_arrays(mu, dx, lg, op, rot, sc)
        for name, value in (("mu", mu), ("delta_x", dx), ("logits", lg), ("opacity", op),
                            ("rotation", rot), ("scale", sc), ("advected", adv), ("source", src)):
            object.__setattr__(self, name, value)

    def __len__(self):
        return self.mu.shape[0]

    @property
    def num_classes(self):
        return self.logits.shape[1]

    @classmethod
    def empty(cls, num_classes):
        z = lambda w: np.zeros((0, w))  # noqa: E731
        return cls(z(3), z(3), z(num_classes), np.zeros(0), z(4), z(3))

    @classmethod
    def from_gaussians(cls, gaussians, num_classes=None):
        gs = list(gaussians)
        if not gs:
            return cls.empty(num_classes or 1)
        return cls(
            np.stack([g.mu for g in gs]), np.stack([g.delta_x for g in gs]), np.stack([g.logits for g in gs]),
            np.array([g.opacity for g in gs]), np.stack([g.rotation for g in gs]), np.stack([g.scale for g in gs]),
        )

    def __getitem__(self, i):
        return Gaussian(self.mu[i], self.delta_x[i], self.logits[i], float(self.opacity[i]),
                        self.rotation[i], self.scale[i])

    def subset(self, mask_or_index):
        sel = np.asarray(mask_or_index)
        return GaussianSet(self.mu[sel], self.delta_x[sel], self.logits[sel], self.opacity[sel],
                           self.rotation[sel], self.scale[sel], self.advected[sel], self.source[sel],
                           validate=False)

    def with_(self, **changes):
        return replace(self, validate=False, **changes)

    @staticmethod
    def concat(*sets):
        sets = [s for s in sets if s is not None]
        cat = lambda name: np.concatenate([getattr(s, name) for s in sets])  # noqa: E731
        return GaussianSet(cat("mu"), cat("delta_x"), cat("logits"), cat("opacity"), cat("rotation"),
                           cat("scale"), cat("advected"), cat("source"), validate=False)

    def covariances(self):
        return build_covariance_batch(self.rotation, self.scale)


@dataclass(frozen=True, eq=False)
class RenderedMaps:
    """Per-view splatting output.

    ``sem`` is (H, W, P) accumulated logits, ``depth`` and ``weight`` are
    (H, W) and ``mask`` marks pixels where ``weight`` exceeds the render
    threshold (zero by default).
    """

    sem: np.ndarray
    depth: np.ndarray
    weight: np.ndarray
    mask: np.ndarray

    @property
    def shape(self):
        return self.depth.shape

    @classmethod
    def empty(cls, height, width, num_classes):
        return cls(np.zeros((height, width, num_classes)), np.zeros((height, width)),
                   np.zeros((height, width)), np.zeros((height, width), dtype=bool))


@dataclass(frozen=True, eq=False)
class SpeedClassPartition:
    """Occupied visible voxels bucketed by (semantic class, speed bin).

    ``indices`` is (M, 3) voxel indices; ``assignment`` is (M, 2) holding
    (class, bin) per voxel; ``counts`` is (P, Q).
    """

    num_classes: int
    num_bins: int
    bin_edges: np.ndarray
    indices: np.ndarray
    assignment: np.ndarray
    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())

    def members(self, p, q):
        sel = (self.assignment[:, 0] == p) & (self.assignment[:, 1] == q)
        return self.indices[sel]
