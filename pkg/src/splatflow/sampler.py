"""Class- and speed-balanced sampling of Gaussian centers from occupied voxels."""

from dataclasses import dataclass

import numpy as np

from .scene import FREE, SpeedClassPartition

DEFAULT_BIN_EDGES = (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, np.inf)
DEFAULT_DT = 0.5
ONE_HOT_LOGIT = 10.0


def partition(grid, bin_edges=DEFAULT_BIN_EDGES, visible_only=True):
    """Bucket occupied (and by default camera-visible) voxels by class and speed.

    Bins are left-closed, right-open: a speed equal to an edge falls in the
    bin that starts at that edge.
    """
    edges = np.asarray(bin_edges, dtype=np.float64)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly ascending")
    if edges[0] != 0.0 or edges[-1] != np.inf:
        raise ValueError("bin edges must start at 0 and end at +inf")
    sel = grid.occupied & grid.visible if visible_only else grid.occupied
    indices = np.argwhere(sel)
    cls = grid.semantics[sel]
    speed = np.linalg.norm(grid.flow[sel], axis=1)
    Q = edges.size - 1
    q = np.searchsorted(edges, speed, side="right") - 1
    assignment = np.stack([cls, q], axis=1).astype(np.int64)
    counts = np.zeros((grid.num_classes, Q), dtype=np.int64)
    np.add.at(counts, (assignment[:, 0], assignment[:, 1]), 1)
    return SpeedClassPartition(grid.num_classes, Q, edges, indices, assignment, counts)


def class_probabilities(part, t=0.5):
    """Per-(class, bin) sampling probability ``P(N) / sum P(N)`` with ``P(x) = 1 / (x**t + 1)``.

    Empty buckets get probability zero and are left out of the normalization.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    counts = part.counts.astype(np.float64)
    nonempty = counts > 0
    if not nonempty.any():
        raise ValueError("partition has no occupied voxels")
    weight = np.zeros_like(counts)
    weight[nonempty] = 1.0 / (counts[nonempty] ** t + 1.0)
    return weight / weight.sum()


@dataclass(frozen=True, eq=False)
class Samples:
    indices: np.ndarray  # (N, 3) voxel indices
    centers: np.ndarray  # (N, 3) world coordinates

    def __len__(self):
        return self.indices.shape[0]


def make_rng(seed):
    """Counter-based generator so draws are reproducible from the seed alone."""
    return np.random.Generator(np.random.Philox(seed))


def sample_points(grid, part, probs, n, seed):
    """Draw ``n`` voxel centers with replacement.

    Each draw picks a (class, bin) bucket by ``probs`` and then a voxel
    uniformly inside that bucket.
    """
    if n < 0:
        raise ValueError("sample count must be non-negative")
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != part.counts.shape or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be a distribution over the partition buckets")
    if np.any((probs > 0) & (part.counts == 0)):
        raise ValueError("probability mass on an empty bucket")
    if n == 0:
        return Samples(np.zeros((0, 3), np.int64), np.zeros((0, 3)))
    rng = make_rng(seed)
    Q = part.num_bins
    flat_key = part.assignment[:, 0] * Q + part.assignment[:, 1]
    member_order = np.argsort(flat_key, kind="stable")
    counts = part.counts.reshape(-1)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    buckets = rng.choice(counts.size, size=n, p=probs.reshape(-1))
    within = np.floor(rng.random(n) * counts[buckets]).astype(np.int64)
    within = np.minimum(within, counts[buckets] - 1)
    idx = part.indices[member_order[offsets[buckets] + within]]
    return Samples(idx, grid.centers(idx))


@dataclass(frozen=True, eq=False)
class Gathered:
    mu: np.ndarray  # (N, 3)
    embeddings: np.ndarray  # (N, C)
    delta_x: np.ndarray  # (N, 3)
    logits: np.ndarray  # (N, P)
    flat_index: np.ndarray  # (N,)


def one_hot_logits(semantics, num_classes, magnitude=ONE_HOT_LOGIT):
    sem = np.asarray(semantics)
    out = np.zeros(sem.shape + (num_classes,))
    occ = sem != FREE
    out[occ, sem[occ]] = magnitude
    return out


def gather(grid, indices, dt=DEFAULT_DT, logits=None, flow=None):
    """Look up per-voxel quantities at sampled voxel centers.

    ``logits`` is an optional (H, W, D, P) volume of predicted logits (one-hot
    of the semantics otherwise) and ``flow`` an optional (H, W, D, 2) flow
    field overriding ``grid.flow``. Displacement is ``(v_x, v_y, 0) * dt``.
    """
    idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
    if idx.size and not np.all(grid.in_bounds(idx)):
        raise IndexError("sampled voxel index out of bounds")
    i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
    if np.any(grid.semantics[i, j, k] == FREE):
        raise ValueError("cannot gather from FREE voxels")
    f = grid.flow if flow is None else flow
    dx = np.zeros((idx.shape[0], 3))
    dx[:, :2] = f[i, j, k] * dt
    if logits is None:
        lg = one_hot_logits(grid.semantics[i, j, k], grid.num_classes)
    else:
        lg = np.asarray(logits)[i, j, k]
    flat = np.ravel_multi_index((i, j, k), grid.dims) if idx.size else np.zeros(0, np.int64)
    return Gathered(grid.centers(idx), grid.embeddings[i, j, k], dx, lg, flat)
