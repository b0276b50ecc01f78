"""Command-line entry point.

Exit codes: 0 success, 1 usage or validation error, 2 numerical failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from .. import sceneio
from ..dynamics import generate_labels, voxel_gaussians
from ..metrics import camera_ray_set, mave, miou, ray_iou
from ..render import RenderConfig, render
from ..render.io import dump_labels, dump_maps
from ..sampler import class_probabilities, partition, sample_points
from ..scene import GaussianSet
from .config import ExperimentConfig
from .presets import PRESETS, preset

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("splatflow")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--seed", type=int, default=None, help="random seed (default: from config or 0)")
    p.add_argument("--out", default=None, help="output directory")


def _out_dir(args, default="out"):
    d = args.out or default
    os.makedirs(d, exist_ok=True)
    return d


def _write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _frame(scene, frame):
    if frame == 0:
        return scene.grid, scene.cameras
    if scene.grid_next is None or not scene.cameras_next:
        raise ValueError("scene has no adjacent frame")
    return scene.grid_next, scene.cameras_next


def _camera(cams, i):
    if not 0 <= i < len(cams):
        raise ValueError(f"camera {i} out of range; scene has {len(cams)}")
    return cams[i]


def _load_config(args):
    if args.config and args.preset:
        raise ValueError("give either --config or --preset, not both")
    if args.config:
        return ExperimentConfig.load(args.config)
    return preset(args.preset or "single-box")


def cmd_make_scene(args, stdout):
    from .synthetic import make_synthetic_scene

    cfg = _load_config(args)
    if args.seed is not None:
        cfg.scene_seed = args.seed
    synth = make_synthetic_scene(cfg)
    out = _out_dir(args)
    path = os.path.join(out, "scene.json")
    sceneio.save_scene(path, sceneio.from_synthetic(synth, cfg), embeddings=args.embeddings)
    cfg.dump(os.path.join(out, "config.json"))
    stdout.write(path + "\n")
    return EXIT_OK


def cmd_render(args, stdout):
    scene = sceneio.load_scene(args.scene)
    grid, cams = _frame(scene, args.frame)
    cam = _camera(cams, args.camera)
    occ = grid.occupied
    gs = voxel_gaussians(grid, occ, scene.dt)
    if args.advect:
        gs = GaussianSet.concat(voxel_gaussians(grid, occ & ~np.isin(grid.semantics, scene.dynamic_classes), scene.dt),
                                voxel_gaussians(grid, occ & np.isin(grid.semantics, scene.dynamic_classes),
                                                scene.dt, shifted=True))
    maps = render(gs, cam, RenderConfig())
    paths = dump_maps(_out_dir(args), maps)
    _write_json(os.path.join(_out_dir(args), "render.json"),
                {"camera": args.camera, "frame": args.frame, "gaussians": len(gs),
                 "covered_pixels": int(maps.mask.sum()), "files": paths})
    stdout.write(json.dumps(paths, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_labels(args, stdout):
    scene = sceneio.load_scene(args.scene)
    grid, cams = _frame(scene, args.frame)
    cam = _camera(cams, args.camera)
    labels = generate_labels(grid, cam, scene.dynamic_classes, scene.dt, visible_only=args.visible_only)
    out = _out_dir(args)
    written = {kind: dump_labels(out, getattr(labels, kind), prefix=f"{kind}_") for kind in ("static", "dynamic", "full")}
    stdout.write(json.dumps(written, sort_keys=True) + "\n")
    return EXIT_OK


def sample_stats(grid, t, n=0, seed=0, bin_edges=None):
    """Sampling distributions at t=0 and at ``t``, plus empirical frequencies of ``n`` draws."""
    part = partition(grid) if bin_edges is None else partition(grid, bin_edges)
    before = class_probabilities(part, 0.0)
    after = class_probabilities(part, t)
    buckets = []
    emp = None
    if n > 0:
        s = sample_points(grid, part, after, n, seed)
        key = {tuple(map(int, ix)): k for k, ix in enumerate(part.indices)}
        rows = np.array([key[tuple(map(int, ix))] for ix in s.indices])
        a = part.assignment[rows]
        emp = np.zeros_like(part.counts)
        np.add.at(emp, (a[:, 0], a[:, 1]), 1)
    for c, q in np.argwhere(part.counts > 0):
        b = {"class": int(c), "speed_bin": int(q), "voxels": int(part.counts[c, q]),
             "p_uniform": float(before[c, q]), "p_weighted": float(after[c, q])}
        if emp is not None:
            b["drawn"] = int(emp[c, q])
        buckets.append(b)
    return {"t": t, "n": n, "seed": seed, "bin_edges": [float(e) if np.isfinite(e) else "inf" for e in part.bin_edges],
            "buckets": buckets}, part, before, after


def cmd_sample_stats(args, stdout):
    from .report import emit_json, plot_sampling

    if args.t < 0:
        raise ValueError("t must be non-negative")
    scene = sceneio.load_scene(args.scene)
    stats, part, before, after = sample_stats(scene.grid, args.t, args.n, args.seed or 0)
    if args.out:
        out = _out_dir(args)
        _write_json(os.path.join(out, "sample_stats.json"), stats)
        plot_sampling(part, before, after, ("t=0", f"t={args.t:g}"), os.path.join(out, "sampling.png"))
        stats["figures"] = {"sampling": "sampling.png"}
    emit_json(stats, stdout)
    return EXIT_OK


def cmd_flow_recovery(args, stdout):
    from .experiment import run_flow_recovery
    from .report import emit_json, write_recovery_figures

    cfg = _load_config(args)
    if args.seed is not None:
        cfg.optimizer.seed = args.seed
    if args.iterations is not None:
        cfg.optimizer.iterations = args.iterations
    cfg.validate()
    out = _out_dir(args)
    cfg.dump(os.path.join(out, "config.json"))

    def progress(it, rec):
        if args.verbose and it % 25 == 0:
            log.info("iteration %d  l_2d %.6g  total %.6g", it, rec["l_2d"], rec["total"])

    result = run_flow_recovery(cfg, progress=progress)
    with open(os.path.join(out, "trace.jsonl"), "w") as f:
        f.write(result.trace_jsonl())
    np.save(os.path.join(out, "flow.npy"), result.flow)
    _write_json(os.path.join(out, "report.json"), result.report)
    payload = dict(result.report)
    if args.figures:
        grid = result.scene.grid_t
        part = partition(grid, cfg.sampler.bin_edges)
        t = cfg.sampler.t if cfg.ablation.use_weighted_sampling else 0.0
        figs = write_recovery_figures(out, result, part, class_probabilities(part, 0.0), class_probabilities(part, t), t)
        payload["figures"] = {k: os.path.relpath(v, out) for k, v in figs.items()}
    emit_json(payload, stdout)
    return EXIT_OK


def _grid_arg(path, flow_path=None):
    if path.endswith(".npy"):
        raise ValueError("grids are read from scene JSON files")
    grid = sceneio.load_scene(path).grid
    if flow_path:
        flow = np.load(flow_path)
        if flow.shape != grid.flow.shape:
            raise ValueError(f"flow shape {flow.shape} does not match grid {grid.flow.shape}")
        grid = grid.with_(flow=flow)
    return grid


def cmd_metrics(args, stdout):
    from .report import emit_json

    gt_scene = sceneio.load_scene(args.gt)
    gt = gt_scene.grid
    pred = _grid_arg(args.pred, args.pred_flow)
    if args.visible_only:
        from ..scene import FREE
        vis = gt.visible[..., None]
        pred = pred.with_(semantics=np.where(gt.visible, pred.semantics, FREE), flow=np.where(vis, pred.flow, 0.0))
        gt = gt.with_(semantics=np.where(gt.visible, gt.semantics, FREE), flow=np.where(vis, gt.flow, 0.0))
    per, mean = mave(pred, gt, gt_scene.dynamic_classes)
    o, d = camera_ray_set(gt_scene.cameras, stride=args.ray_stride)
    ray_per, ray_mean = ray_iou(pred, gt, o, d)
    mi_per, mi_mean = miou(pred, gt)
    payload = {"mave": mean, "ave_per_class": {str(k): v for k, v in per.items()},
               "ray_iou": {f"{k:g}m": v for k, v in ray_per.items()}, "ray_iou_mean": ray_mean,
               "miou": mi_mean, "iou_per_class": {str(k): v for k, v in mi_per.items()}}
    if args.out:
        _write_json(os.path.join(_out_dir(args), "metrics.json"), payload)
    emit_json(payload, stdout)
    return EXIT_OK


def cmd_gradcheck(args, stdout):
    from .gradcheck import REL_TOL, run_gradcheck

    seed = 0 if args.seed is None else args.seed
    worst, suites = run_gradcheck(seed, render_scenes=args.scenes, other_cases=args.cases)
    for s in suites:
        stdout.write(f"{s.name:16s} cases {s.cases:4d}  checked {s.checked:6d}  max rel err {s.max_rel_error:.3e}\n")
    stdout.write(f"max relative error {worst:.6e}\n")
    if args.out:
        _write_json(os.path.join(_out_dir(args), "gradcheck.json"),
                    {"seed": seed, "max_rel_error": worst, "tolerance": REL_TOL, "suites": [s.as_dict() for s in suites]})
    return EXIT_OK if worst < REL_TOL else EXIT_NUMERIC


def build_parser():
    parser = _Parser(prog="splatflow", description="Semantic Gaussian splatting and 2D-supervised scene flow.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def config_args(p):
        p.add_argument("--config", help="experiment config JSON")
        p.add_argument("--preset", choices=sorted(PRESETS), help="built-in experiment config")

    p = sub.add_parser("make-scene", help="build a synthetic scene and write scene JSON")
    config_args(p)
    p.add_argument("--embeddings", action="store_true", help="include voxel embeddings")
    _common(p)
    p.set_defaults(func=cmd_make_scene)

    for name, func, helptext in (("render", cmd_render, "render voxels of a scene from one camera"),
                                 ("labels", cmd_labels, "emit ground-truth 2D labels for one camera")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--scene", required=True)
        p.add_argument("--camera", type=int, default=0)
        p.add_argument("--frame", type=int, choices=(0, 1), default=0)
        if name == "render":
            p.add_argument("--advect", action="store_true", help="move dynamic voxels by flow * dt")
        else:
            p.add_argument("--visible-only", action="store_true")
        _common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("sample-stats", help="class/speed sampling distributions")
    p.add_argument("--scene", required=True)
    p.add_argument("--t", type=float, default=0.5)
    p.add_argument("--n", type=int, default=0, help="also draw n samples and report counts")
    _common(p)
    p.set_defaults(func=cmd_sample_stats)

    p = sub.add_parser("flow-recovery", help="run the flow-recovery experiment")
    config_args(p)
    p.add_argument("--iterations", type=int)
    p.add_argument("--figures", action="store_true", help="write PNG figures next to the outputs")
    _common(p)
    p.set_defaults(func=cmd_flow_recovery)

    p = sub.add_parser("metrics", help="compare a predicted grid against ground truth")
    p.add_argument("--pred", required=True, help="scene JSON holding the predicted grid")
    p.add_argument("--gt", required=True, help="scene JSON holding the ground-truth grid and cameras")
    p.add_argument("--pred-flow", help="flow.npy overriding the predicted grid's flow")
    p.add_argument("--visible-only", action="store_true")
    p.add_argument("--ray-stride", type=int, default=4)
    _common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("gradcheck", help="finite-difference checks of every backward pass")
    p.add_argument("--scenes", type=int, default=100)
    p.add_argument("--cases", type=int, default=20)
    _common(p)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None, stdout=None):
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(str(e) + "\n")
        return EXIT_USAGE
    except SystemExit as e:  # --help
        return EXIT_OK if not e.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, stdout)
    except (FloatingPointError, np.linalg.LinAlgError) as e:
        sys.stderr.write(f"numerical failure: {e}\n")
        return EXIT_NUMERIC
    except (ValueError, TypeError, KeyError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
