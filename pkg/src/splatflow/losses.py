"""Rendering, flow and occupancy losses with their gradients."""

import logging
import math

import numpy as np

from .scene import FREE

log = logging.getLogger(__name__)


def _log_softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    z = x - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def loss_2d(rendered, labels):
    """Masked cross-entropy on accumulated logits plus L1 on depth.

    ``labels`` is any object with ``classes``, ``depth`` and ``mask`` (H, W)
    arrays. Both terms are averaged over pixels where the rendered mask and
    the label mask are both set. Returns ``(loss, grad_sem, grad_depth)``.
    """
    classes, depth, lmask = labels.classes, labels.depth, labels.mask
    H, W, P = rendered.sem.shape
    if classes.shape != (H, W) or depth.shape != (H, W) or lmask.shape != (H, W):
        raise ValueError("label maps do not match rendered image shape")
    mask = rendered.mask & lmask
    g_sem = np.zeros((H, W, P))
    g_depth = np.zeros((H, W))
    n = int(mask.sum())
    if n == 0:
        log.warning("2D loss has an empty mask intersection")
        return 0.0, g_sem, g_depth
    logits = rendered.sem[mask]
    target = classes[mask]
    logp = _log_softmax(logits)
    ce = -logp[np.arange(n), target].sum() / n
    prob = np.exp(logp)
    prob[np.arange(n), target] -= 1.0
    g_sem[mask] = prob / n
    diff = rendered.depth[mask] - depth[mask]
    l1 = np.abs(diff).sum() / n
    g_depth[mask] = np.sign(diff) / n
    return float(ce + l1), g_sem, g_depth


def flow_weight(gt_speed):
    """Per-voxel flow loss weight ``1 + |v_gt|``."""
    return 1.0 + gt_speed


def loss_flow(pred_flow, gt_flow, gt_semantics, dynamic_classes):
    """Speed-weighted L1 flow error averaged over occupied dynamic-class voxels.

    Returns ``(loss, grad_pred_flow)``.
    """
    pred = np.asarray(pred_flow, dtype=np.float64)
    gt = np.asarray(gt_flow, dtype=np.float64)
    sem = np.asarray(gt_semantics)
    if pred.shape != gt.shape or pred.shape[:-1] != sem.shape:
        raise ValueError("flow fields and semantics must share spatial shape")
    sel = (sem != FREE) & np.isin(sem, np.asarray(sorted(dynamic_classes), dtype=np.int64))
    grad = np.zeros_like(pred)
    n = int(sel.sum())
    if n == 0:
        return 0.0, grad
    w = flow_weight(np.linalg.norm(gt[sel], axis=-1))
    diff = pred[sel] - gt[sel]
    loss = float(np.sum(w * np.abs(diff).sum(axis=-1)) / n)
    grad[sel] = w[:, None] * np.sign(diff) / n
    return loss, grad


def loss_occ(pred_logits, gt_semantics):
    """Mean voxelwise softmax cross-entropy; channel ``P`` (last) stands for FREE.

    Returns ``(loss, grad_logits)``.
    """
    logits = np.asarray(pred_logits, dtype=np.float64)
    sem = np.asarray(gt_semantics)
    if logits.shape[:-1] != sem.shape:
        raise ValueError("logit volume and semantics must share spatial shape")
    K = logits.shape[-1]
    target = np.where(sem == FREE, K - 1, sem).reshape(-1)
    if target.max(initial=0) >= K:
        raise ValueError("semantic id exceeds logit channels")
    flat = logits.reshape(-1, K)
    n = flat.shape[0]
    logp = _log_softmax(flat)
    loss = -logp[np.arange(n), target].sum() / n
    grad = np.exp(logp)
    grad[np.arange(n), target] -= 1.0
    return float(loss), (grad / n).reshape(logits.shape)


DEFAULT_WEIGHTS = {"occ": 1.0, "flow": 1.0, "2d": 1.0}


def loss_total(l_occ, l_flow, l_2d, weights=None):
    """Weighted sum ``w_occ L_occ + w_flow L_flow + w_2d L_2d``; NaN inputs raise."""
    w = dict(DEFAULT_WEIGHTS, **(weights or {}))
    terms = {"occ": l_occ, "flow": l_flow, "2d": l_2d}
    for name, value in terms.items():
        if not math.isfinite(value):
            raise FloatingPointError(f"loss term {name} is {value}")
    return sum(w[k] * terms[k] for k in ("occ", "flow", "2d"))
