"""Central finite-difference checks of every hand-written backward pass.

Each suite perturbs every input coordinate by +/-h and compares the slope of
a random linear functional of the outputs with the analytic gradient.
Rendering uses the SMOOTH config (no alpha cutoff, no early termination,
wide footprint) so the forward map is differentiable.
"""

from dataclasses import dataclass, field

import numpy as np

from ..decoder import DecoderParams, decode, decode_backward
from ..dynamics import LabelMap
from ..losses import loss_2d, loss_flow, loss_occ
from ..render import SMOOTH, render, render_backward
from ..scene import FREE, Camera, GaussianSet, RenderedMaps

REL_TOL = 1e-4
ABS_TOL = 1e-7
STEP = 1e-5


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    checked: int = 0
    max_rel_error: float = 0.0
    failures: list = field(default_factory=list)

    def record(self, analytic, numeric, where):
        diff = abs(analytic - numeric)
        rel = diff / max(abs(analytic), abs(numeric), 1e-300)
        self.checked += 1
        if diff < ABS_TOL:
            return
        self.max_rel_error = max(self.max_rel_error, rel)
        if rel >= REL_TOL and len(self.failures) < 20:
            self.failures.append({"where": where, "analytic": analytic, "numeric": numeric})

    @property
    def passed(self):
        return self.max_rel_error < REL_TOL

    def as_dict(self):
        return {"name": self.name, "cases": self.cases, "checked": self.checked,
                "max_rel_error": self.max_rel_error, "passed": self.passed, "failures": self.failures}


def _fd(f, x, idx, h=STEP):
    xp = x.copy()
    xm = x.copy()
    xp[idx] += h
    xm[idx] -= h
    return (f(xp) - f(xm)) / (2.0 * h)


def random_scene(rng, n, num_classes=3, size=32):
    """Random Gaussians in front of a 60-degree camera, some advected."""
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    gs = GaussianSet(rng.uniform([-2.5, -2.5, 3.0], [2.5, 2.5, 8.0], (n, 3)), rng.normal(size=(n, 3)) * 0.1,
                     rng.normal(size=(n, num_classes)), rng.uniform(0.05, 0.9, n), q,
                     rng.uniform(0.1, 0.6, (n, 3)), advected=rng.random(n) < 0.5)
    cam = Camera.look_at([0, 0, 0], [0, 0, 1], 60.0, size, size, up=(0, -1, 0))
    return gs, cam


def check_render(rng, result, n_max=20, size=32):
    n = int(rng.integers(1, n_max + 1))
    gs, cam = random_scene(rng, n, size=size)
    P = gs.num_classes
    g_sem = rng.normal(size=(size, size, P))
    g_depth = rng.normal(size=(size, size))

    def objective(g):
        m = render(g, cam, SMOOTH)
        return float((m.sem * g_sem).sum() + (m.depth * g_depth).sum())

    grads = render_backward(gs, cam, SMOOTH, g_sem, g_depth)
    for name in ("mu", "logits", "opacity", "rotation", "scale"):
        base = getattr(gs, name)
        analytic = getattr(grads, name)
        for idx in np.ndindex(base.shape):
            num = _fd(lambda x: objective(gs.with_(**{name: x})), base, idx)
            result.record(float(analytic[idx]), num, f"render.{name}{list(idx)}")
    # an advected center is mu + delta_x, so both move together
    for i in np.flatnonzero(gs.advected):
        for k in range(3):
            def shifted(d, i=i, k=k):
                mu = gs.mu.copy()
                mu[i, k] += d
                return objective(gs.with_(mu=mu))
            num = (shifted(STEP) - shifted(-STEP)) / (2 * STEP)
            result.record(float(grads.delta_x[i, k]), num, f"render.delta_x[{i}, {k}]")
    result.cases += 1


def check_decoder(rng, result, embed_dim=6, hidden=5, n=4, voxel_size=0.5):
    params = DecoderParams.init(embed_dim, n, hidden=hidden, seed=int(rng.integers(1 << 31)), init_range=0.8)
    params.b2[:] = rng.normal(size=8)
    params.b1[:] = rng.normal(size=hidden) * 0.3
    v = rng.normal(size=(n, embed_dim))
    pe = rng.normal(size=(n, embed_dim)) * 0.3
    go, gr, gsc = rng.normal(size=n), rng.normal(size=(n, 4)), rng.normal(size=(n, 3))

    def objective(v_, pe_, p):
        o, r, s = decode(v_, pe_, p, voxel_size)
        return float((o * go).sum() + (r * gr).sum() + (s * gsc).sum())

    g_v, g_pe, g_w = decode_backward(v, pe, params, voxel_size, go, gr, gsc)
    for idx in np.ndindex(v.shape):
        result.record(float(g_v[idx]), _fd(lambda x: objective(x, pe, params), v, idx), f"decode.v{list(idx)}")
        result.record(float(g_pe[idx]), _fd(lambda x: objective(v, x, params), pe, idx), f"decode.pe{list(idx)}")
    for name in ("W1", "b1", "W2", "b2"):
        base = getattr(params, name)
        for idx in np.ndindex(base.shape):
            def f(x, name=name):
                p = DecoderParams(**{**params.arrays(), name: x})
                return objective(v, pe, p)
            result.record(float(g_w[name][idx]), _fd(f, base, idx), f"decode.{name}{list(idx)}")
    result.cases += 1


class _Labels:
    def __init__(self, classes, depth, mask):
        self.classes, self.depth, self.mask = classes, depth, mask


def check_loss_2d(rng, result, size=6, P=4):
    sem = rng.normal(size=(size, size, P))
    depth = rng.uniform(1, 10, (size, size))
    mask = rng.random((size, size)) < 0.8
    lmask = rng.random((size, size)) < 0.8
    labels = LabelMap(rng.integers(0, P, (size, size)), depth + rng.normal(size=(size, size)), lmask)

    def objective(s, d):
        return loss_2d(RenderedMaps(s, d, np.ones((size, size)), mask), labels)[0]

    _, g_sem, g_depth = loss_2d(RenderedMaps(sem, depth, np.ones((size, size)), mask), labels)
    for idx in np.ndindex(sem.shape):
        result.record(float(g_sem[idx]), _fd(lambda x: objective(x, depth), sem, idx), f"loss_2d.sem{list(idx)}")
    for idx in np.ndindex(depth.shape):
        result.record(float(g_depth[idx]), _fd(lambda x: objective(sem, x), depth, idx), f"loss_2d.depth{list(idx)}")
    result.cases += 1


def check_loss_flow(rng, result, dims=(3, 3, 2), P=6):
    sem = rng.integers(-1, P, dims)
    gt = np.where((sem != FREE)[..., None], rng.normal(size=dims + (2,)), 0.0)
    pred = gt + rng.normal(size=dims + (2,))
    dyn = (1, 2, 3)
    _, grad = loss_flow(pred, gt, sem, dyn)
    for idx in np.ndindex(pred.shape):
        num = _fd(lambda x: loss_flow(x, gt, sem, dyn)[0], pred, idx)
        result.record(float(grad[idx]), num, f"loss_flow{list(idx)}")
    result.cases += 1


def check_loss_occ(rng, result, dims=(3, 2, 2), P=5):
    sem = rng.integers(-1, P, dims)
    logits = rng.normal(size=dims + (P + 1,))
    _, grad = loss_occ(logits, sem)
    for idx in np.ndindex(logits.shape):
        result.record(float(grad[idx]), _fd(lambda x: loss_occ(x, sem)[0], logits, idx), f"loss_occ{list(idx)}")
    result.cases += 1


def run_gradcheck(seed=0, render_scenes=100, other_cases=20):
    """Run all suites; returns ``(max_rel_error, [SuiteResult, ...])``."""
    rng = np.random.default_rng(seed)
    suites = []
    for name, fn, count in (("render_backward", check_render, render_scenes),
                            ("decode_backward", check_decoder, other_cases),
                            ("loss_2d", check_loss_2d, other_cases),
                            ("loss_flow", check_loss_flow, other_cases),
                            ("loss_occ", check_loss_occ, other_cases)):
        res = SuiteResult(name)
        for _ in range(count):
            fn(rng, res)
        suites.append(res)
    return max(s.max_rel_error for s in suites), suites
