"""Two-layer MLP mapping voxel embeddings to Gaussian shape attributes.

Output layout of the last layer (8 values): opacity pre-activation,
quaternion (4, before normalization), scale pre-activation (3).
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

SCALE_EPS = 1e-4
# keeps sigmoid strictly inside (0, 1) in float64
OPACITY_LOGIT_CLIP = 30.0
QUAT_FALLBACK = 1e-8


@dataclass(eq=False)
class DecoderParams:
    W1: np.ndarray  # (C, Hd)
    b1: np.ndarray  # (Hd,)
    W2: np.ndarray  # (Hd, 8)
    b2: np.ndarray  # (8,)
    pe: np.ndarray  # (num_voxels, C), indexed by flat voxel index

    def __post_init__(self):
        C, Hd = np.shape(self.W1)
        if Hd < 1:
            raise ValueError("hidden width must be >= 1")
        if np.shape(self.b1) != (Hd,) or np.shape(self.W2) != (Hd, 8) or np.shape(self.b2) != (8,):
            raise ValueError("decoder parameter shapes are inconsistent")
        if np.ndim(self.pe) != 2 or np.shape(self.pe)[1] != C:
            raise ValueError("positional embeddings must be (num_voxels, C)")

    @property
    def embed_dim(self):
        return self.W1.shape[0]

    @property
    def hidden(self):
        return self.W1.shape[1]

    @classmethod
    def init(cls, embed_dim, num_voxels, hidden=64, seed=0, init_range=1e-2):
        rng = np.random.default_rng(seed)
        return cls(
            rng.uniform(-init_range, init_range, (embed_dim, hidden)),
            np.zeros(hidden),
            rng.uniform(-init_range, init_range, (hidden, 8)),
            np.zeros(8),
            np.zeros((num_voxels, embed_dim)),
        )

    @classmethod
    def zeros(cls, embed_dim, num_voxels, hidden=64):
        return cls(np.zeros((embed_dim, hidden)), np.zeros(hidden), np.zeros((hidden, 8)), np.zeros(8),
                   np.zeros((num_voxels, embed_dim)))

    def arrays(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2, "pe": self.pe}


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _forward(v, pe, params):
    x = v + pe
    pre = x @ params.W1 + params.b1
    hidden = np.maximum(pre, 0.0)
    raw = hidden @ params.W2 + params.b2
    return x, pre, hidden, raw


def decode(v, pe, params, voxel_size):
    """Decode embeddings ``v`` plus positional embeddings ``pe``.

    Accepts a single C-vector or an (N, C) batch. Returns
    ``(opacity, rotation, scale)`` where rotation is a unit quaternion
    (identity when the raw quaternion norm is below 1e-8) and
    ``scale = voxel_size * softplus(raw) + 1e-4``.
    """
    v = np.asarray(v, dtype=np.float64)
    pe = np.asarray(pe, dtype=np.float64)
    single = v.ndim == 1
    v2, pe2 = np.atleast_2d(v), np.atleast_2d(pe)
    if v2.shape != pe2.shape or v2.shape[1] != params.embed_dim:
        raise ValueError(f"embedding shapes {v.shape}, {pe.shape} do not match decoder width {params.embed_dim}")
    _, _, _, raw = _forward(v2, pe2, params)
    opacity = _sigmoid(np.clip(raw[:, 0], -OPACITY_LOGIT_CLIP, OPACITY_LOGIT_CLIP))
    quat = raw[:, 1:5]
    norm = np.linalg.norm(quat, axis=1)
    small = norm < QUAT_FALLBACK
    rotation = quat / np.where(small, 1.0, norm)[:, None]
    rotation[small] = (1.0, 0.0, 0.0, 0.0)
    scale = voxel_size * _softplus(raw[:, 5:8]) + SCALE_EPS
    if single:
        return opacity[0], rotation[0], scale[0]
    return opacity, rotation, scale


def decode_backward(v, pe, params, voxel_size, g_opacity, g_rotation, g_scale):
    """Gradients of a scalar loss w.r.t. ``v``, ``pe`` and the network weights.

    Upstream gradients have the shapes of :func:`decode`'s outputs. Returns
    ``(g_v, g_pe, grads)`` where ``grads`` maps W1/b1/W2/b2 to arrays. Under
    the identity-quaternion fallback the rotation gradient is zero.
    """
    v = np.asarray(v, dtype=np.float64)
    single = v.ndim == 1
    v2 = np.atleast_2d(v)
    pe2 = np.atleast_2d(np.asarray(pe, dtype=np.float64))
    go = np.atleast_1d(np.asarray(g_opacity, dtype=np.float64))
    gr = np.atleast_2d(np.asarray(g_rotation, dtype=np.float64))
    gs = np.atleast_2d(np.asarray(g_scale, dtype=np.float64))
    n = v2.shape[0]
    if pe2.shape != v2.shape or v2.shape[1] != params.embed_dim:
        raise ValueError("embedding shapes do not match decoder width")
    if go.shape != (n,) or gr.shape != (n, 4) or gs.shape != (n, 3):
        raise ValueError("upstream gradient shapes do not match decode outputs")
    _, pre, hidden, raw = _forward(v2, pe2, params)

    g_raw = np.zeros((n, 8))
    sig = _sigmoid(raw[:, 0])
    g_raw[:, 0] = np.where(np.abs(raw[:, 0]) < OPACITY_LOGIT_CLIP, go * sig * (1.0 - sig), 0.0)
    quat = raw[:, 1:5]
    norm = np.linalg.norm(quat, axis=1)
    ok = norm >= QUAT_FALLBACK
    safe = np.where(ok, norm, 1.0)
    u = quat / safe[:, None]
    # d(x/|x|) = (I - u u^T) / |x|
    g_quat = (gr - u * np.sum(u * gr, axis=1, keepdims=True)) / safe[:, None]
    g_raw[:, 1:5] = np.where(ok[:, None], g_quat, 0.0)
    g_raw[:, 5:8] = gs * voxel_size * _sigmoid(raw[:, 5:8])

    g_W2 = hidden.T @ g_raw
    g_b2 = g_raw.sum(axis=0)
    g_hidden = g_raw @ params.W2.T
    g_pre = g_hidden * (pre > 0)
    g_W1 = (v2 + pe2).T @ g_pre
    g_b1 = g_pre.sum(axis=0)
    g_x = g_pre @ params.W1.T
    grads = {"W1": g_W1, "b1": g_b1, "W2": g_W2, "b2": g_b2}
    if single:
        return g_x[0], g_x[0].copy(), grads
    return g_x, g_x.copy(), grads


def save_checkpoint(path, params, seed=0):
    """Write a length-prefixed JSON header followed by flat little-endian f32 data."""
    arrays = params.arrays()
    header = {"format": "splatflow-decoder/1", "seed": int(seed), "dtype": "<f4",
              "order": list(arrays), "shapes": {k: list(a.shape) for k, a in arrays.items()}}
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for k in header["order"]:
            f.write(np.ascontiguousarray(arrays[k], dtype="<f4").tobytes())


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(params, header)``."""
    with open(path, "rb") as f:
        (n,) = struct.unpack("<I", f.read(4))
        header = json.loads(f.read(n))
        data = np.frombuffer(f.read(), dtype="<f4")
    out, off = {}, 0
    for k in header["order"]:
        shape = tuple(header["shapes"][k])
        size = int(np.prod(shape))
        out[k] = data[off:off + size].astype(np.float64).reshape(shape)
        off += size
    if off != data.size:
        raise ValueError("checkpoint payload size does not match header")
    return DecoderParams(**out), header
