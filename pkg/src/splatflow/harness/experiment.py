"""End-to-end optimization of a per-voxel flow field from rendering supervision."""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..decoder import DecoderParams, decode, decode_backward
from ..dynamics import advect, dynamic_mask, generate_labels, select_virtual_views
from ..losses import loss_2d, loss_flow, loss_occ, loss_total
from ..metrics import mave
from ..render import RenderConfig, render, render_backward
from ..sampler import class_probabilities, gather, one_hot_logits, partition, sample_points
from ..scene import FREE, GaussianSet
from .synthetic import make_synthetic_scene

log = logging.getLogger(__name__)

OCC_LOGIT = 4.0


class DivergenceError(FloatingPointError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class View:
    camera: object
    frame: int  # 0 = current, 1 = adjacent
    labels: object


@dataclass
class FlowRecoveryResult:
    flow: np.ndarray  # (H, W, D, 2) recovered flow
    report: dict
    trace: list = field(default_factory=list)
    scene: object = None
    decoder: object = None

    def trace_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.trace)


def _views(scene, cfg, render_cfg):
    dyn = cfg.dynamic_classes
    cams_t, cams_t1 = scene.cameras_t, scene.cameras_t1
    m = len(cams_t) + (len(cams_t1) if cfg.ablation.use_multiframe else 0)
    views = []
    for i, cam in enumerate(select_virtual_views(cams_t, cams_t1, m)):
        frame = 0 if i < len(cams_t) else 1
        labels = generate_labels(scene.grid_t, cam, dyn, cfg.dt, render_cfg, visible_only=True)
        if not cfg.ablation.use_decompose and frame == 1:
            # without decomposition the adjacent frame is supervised by its own ground truth
            labels = generate_labels(scene.grid_t1, cam, dyn, cfg.dt, render_cfg, visible_only=True)
        views.append(View(cam, frame, labels))
    return views


def distinct_voxels(indices, dims):
    """Distinct sampled voxels in flat-index order; repeated draws would stack identical splats."""
    if len(indices) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    flat = np.unique(np.ravel_multi_index(np.asarray(indices).T, dims))
    return np.stack(np.unravel_index(flat, dims), axis=1)


def class_regions(semantics):
    """Label 6-connected regions of equal class; FREE voxels get -1."""
    occ = semantics != FREE
    lab = np.where(occ, np.arange(semantics.size).reshape(semantics.shape), -1)
    big = semantics.size
    while True:
        prev = lab
        cur = np.where(occ, lab, big)
        for axis in range(3):
            n = semantics.shape[axis]
            a = [slice(None)] * 3
            b = [slice(None)] * 3
            a[axis], b[axis] = slice(0, n - 1), slice(1, n)
            a, b = tuple(a), tuple(b)
            same = occ[a] & occ[b] & (semantics[a] == semantics[b])
            m = np.minimum(cur[a], cur[b])
            cur[a] = np.where(same, m, cur[a])
            cur[b] = np.where(same, m, cur[b])
        lab = np.where(occ, cur, -1)
        if np.array_equal(lab, prev):
            break
    _, dense = np.unique(lab, return_inverse=True)
    return np.where(occ, dense.reshape(semantics.shape) - (0 if occ.all() else 1), -1)


def couple_gradient(grad, regions, beta):
    """Blend each voxel's flow gradient with the mean over its class region.

    Silhouette labels leave interior voxels of a moving body unconstrained
    (their displaced splats stay inside the label either way); mixing in the
    region mean acts as a preconditioner toward spatially coherent flow.
    """
    if beta <= 0:
        return grad
    occ = regions >= 0
    r = regions[occ]
    k = int(r.max()) + 1 if r.size else 0
    sums = np.zeros((k, grad.shape[-1]))
    np.add.at(sums, r, grad[occ])
    mean = sums / np.bincount(r, minlength=k)[:, None]
    out = np.zeros_like(grad)
    out[occ] = (1.0 - beta) * grad[occ] + beta * mean[r]
    return out


def _render_pass(gs, view, target, render_cfg):
    maps = render(gs, view.camera, render_cfg)
    if not (maps.mask & target.mask).any():
        return 0.0, None  # nothing of this pass is seen by the view
    loss, g_sem, g_depth = loss_2d(maps, target)
    if loss == 0.0:
        return 0.0, None
    return loss, render_backward(gs, view.camera, render_cfg, g_sem, g_depth)


def _scatter(dst, rows, grads):
    np.add.at(dst, rows, grads)


def evaluate_flow(scene, flow, dynamic_classes):
    """Score a recovered flow field on camera-visible ground-truth voxels."""
    gt = scene.grid_t
    vis = gt.visible & gt.occupied
    pred = gt.with_(semantics=np.where(vis, gt.semantics, FREE), flow=np.where(vis[..., None], flow, 0.0))
    per_class, mean = mave(pred, gt, dynamic_classes)
    objects = []
    for i, ob in enumerate(scene.objects):
        sel = (scene.instances_t == i) & vis
        rec = flow[sel].mean(axis=0) if sel.any() else np.zeros(2)
        true = np.asarray(ob.velocity, dtype=np.float64)
        speed = float(np.linalg.norm(true))
        entry = {"id": i, "cls": ob.cls, "true_velocity": true.tolist(), "recovered_velocity": rec.tolist(),
                 "visible_voxels": int(sel.sum())}
        if speed > 0 and np.linalg.norm(rec) > 0:
            cosang = np.clip(rec @ true / (np.linalg.norm(rec) * speed), -1, 1)
            entry["speed_rel_error"] = float(abs(np.linalg.norm(rec) - speed) / speed)
            entry["angle_error_deg"] = float(np.degrees(np.arccos(cosang)))
        objects.append(entry)
    dyn_vis = vis & np.isin(gt.semantics, dynamic_classes)
    static_vis = vis & ~dyn_vis
    return {
        "mave": mean,
        "ave_per_class": {str(k): v for k, v in per_class.items()},
        "objects": objects,
        "max_static_flow": float(np.linalg.norm(flow[static_vis], axis=-1).max(initial=0.0)),
        "max_flow": float(np.linalg.norm(flow[gt.occupied], axis=-1).max(initial=0.0)),
    }


def run_flow_recovery(cfg, scene=None, render_cfg=RenderConfig(), progress=None):
    """Recover scene flow by gradient descent on the configured losses.

    Each iteration samples Gaussian centers, decodes their shapes, renders
    the selected views and back-propagates the 2D (and optional 3D) losses
    to the per-voxel flow and, optionally, the decoder.
    """
    cfg.validate()
    scene = scene or make_synthetic_scene(cfg)
    gt = scene.grid_t
    dyn = cfg.dynamic_classes
    H, W, D = gt.dims
    P = gt.num_classes
    vs, dt = gt.voxel_size, cfg.dt
    opt, abl = cfg.optimizer, cfg.ablation
    weights = dict(cfg.loss_weights)
    if not abl.use_2d_loss:
        weights["2d"] = 0.0

    flow = np.zeros((H, W, D, 2))
    occ_logits = np.concatenate([one_hot_logits(gt.semantics, P, OCC_LOGIT), np.where(gt.occupied, 0.0, OCC_LOGIT)[..., None]], axis=-1)
    params = DecoderParams.init(gt.embeddings.shape[-1], H * W * D, hidden=opt.hidden, seed=opt.seed)

    part = partition(gt, cfg.sampler.bin_edges)
    t = cfg.sampler.t if abl.use_weighted_sampling else 0.0
    probs = class_probabilities(part, t)
    views = _views(scene, cfg, render_cfg) if weights["2d"] > 0 else []
    emb_flat = gt.embeddings.reshape(H * W * D, -1)
    regions = class_regions(gt.semantics) if opt.flow_coupling > 0 else None

    trace = []
    for it in range(opt.iterations):
        g_flow = np.zeros_like(flow)
        g_occ = np.zeros_like(occ_logits)
        l_2d = 0.0
        g_dec = None
        if views:
            samples = sample_points(gt, part, probs, cfg.sampler.n, seed=(opt.seed, it))
            gat = gather(gt, distinct_voxels(samples.indices, gt.dims), dt, logits=occ_logits[..., :P], flow=flow)
            emb, pe = emb_flat[gat.flat_index], params.pe[gat.flat_index]
            opacity, rot, scale = decode(emb, pe, params, vs)
            G = GaussianSet(gat.mu, gat.delta_x, gat.logits, opacity, rot, scale, source=gat.flat_index, validate=False)
            n = len(G)
            g_op, g_rot, g_sc = np.zeros(n), np.zeros((n, 4)), np.zeros((n, 3))
            g_lg, g_dx = np.zeros((n, P)), np.zeros((n, 3))

            if abl.use_decompose:
                dmask = dynamic_mask(G, gt, dyn)
                s_rows, d_rows = np.flatnonzero(~dmask), np.flatnonzero(dmask)
                G_s, G_d = G.subset(s_rows), G.subset(d_rows)
                pair = GaussianSet.concat(G_d, advect(G_d))
                passes = [(G_s, s_rows, "static", None), (pair, np.concatenate([d_rows, d_rows]), "dynamic", None)]
            else:
                rows = np.arange(n)
                passes = [(G, rows, "full", 0), (advect(G), rows, "full", 1)]

            for view in views:
                for gs, rows, kind, frame in passes:
                    if frame is not None and frame != view.frame:
                        continue
                    if len(gs) == 0:
                        continue
                    loss, grads = _render_pass(gs, view, getattr(view.labels, kind), render_cfg)
                    l_2d += loss
                    if grads is None:
                        continue
                    w2 = weights["2d"]
                    if kind != "dynamic" or opt.decoder_from_dynamic:
                        _scatter(g_op, rows, w2 * grads.opacity)
                        _scatter(g_rot, rows, w2 * grads.rotation)
                        _scatter(g_sc, rows, w2 * grads.scale)
                    _scatter(g_lg, rows, w2 * grads.logits)
                    _scatter(g_dx, rows, w2 * grads.delta_x)

            # displacement = (flow_x, flow_y, 0) * dt
            _scatter(g_flow.reshape(-1, 2), gat.flat_index, g_dx[:, :2] * dt)
            _scatter(g_occ.reshape(-1, P + 1)[:, :P], gat.flat_index, g_lg)
            if opt.learn_decoder and opt.lr_decoder > 0:
                _, g_pe, g_dec = decode_backward(emb, pe, params, vs, g_op, g_rot, g_sc)
                g_dec["pe_rows"] = (gat.flat_index, g_pe)

        l_flow = 0.0
        if weights["flow"] > 0 and it >= opt.flow_warmup:
            l_flow, gf = loss_flow(flow, gt.flow, gt.semantics, dyn)
            g_flow += weights["flow"] * gf
        l_occ = 0.0
        if weights["occ"] > 0:
            l_occ, go = loss_occ(occ_logits, gt.semantics)
            g_occ += weights["occ"] * go
        try:
            total = loss_total(l_occ, l_flow, l_2d, weights)
        except FloatingPointError as e:
            raise DivergenceError(f"iteration {it}: {e}", trace) from e
        trace.append({"iteration": it, "l_occ": l_occ, "l_flow": l_flow, "l_2d": l_2d, "total": total})

        g_flow = couple_gradient(g_flow, regions, opt.flow_coupling)
        decay = opt.lr_final_ratio ** (it / max(opt.iterations - 1, 1))
        lr_flow = 0.0 if it < opt.shape_warmup else decay * opt.lr_flow
        flow -= lr_flow * np.where(gt.occupied[..., None], g_flow, 0.0)
        if opt.lr_logits > 0:
            occ_logits -= opt.lr_logits * g_occ
        if g_dec is not None:
            lr = decay * opt.lr_decoder
            params.W1 -= lr * g_dec["W1"]
            params.b1 -= lr * g_dec["b1"]
            params.W2 -= lr * g_dec["W2"]
            params.b2 -= lr * g_dec["b2"]
            rows, g_pe = g_dec["pe_rows"]
            np.add.at(params.pe, rows, -lr * g_pe)
        if not np.all(np.isfinite(flow)):
            raise DivergenceError(f"iteration {it}: flow diverged", trace)
        if progress is not None:
            progress(it, trace[-1])

    report = evaluate_flow(scene, flow, dyn)
    report["iterations"] = opt.iterations
    report["final_loss"] = trace[-1] if trace else None
    return FlowRecoveryResult(flow, report, trace, scene, params)
