"""Figures and delimited JSON for experiment reports.

Figures go to PNG files with fixed metadata so repeated runs produce
identical bytes. The JSON block is framed by marker lines so it can be
pulled out of mixed terminal output.
"""

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from ..scene import FREE  # noqa: E402

BEGIN = "----- BEGIN SPLATFLOW JSON -----"
END = "----- END SPLATFLOW JSON -----"
PNG_METADATA = {"Software": None}

STYLE = {
    "figure.figsize": (6.0, 3.6),
    "figure.dpi": 100,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}


def emit_json(payload, stream):
    stream.write(BEGIN + "\n")
    stream.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    stream.write(END + "\n")


def extract_json(text):
    """Parse the first delimited JSON block in ``text``."""
    start = text.index(BEGIN) + len(BEGIN)
    return json.loads(text[start:text.index(END, start)])


def _save(fig, path):
    fig.savefig(path, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def plot_loss(trace, path):
    it = [r["iteration"] for r in trace]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for key, label in (("l_2d", "2D"), ("l_flow", "flow"), ("l_occ", "occupancy")):
            y = np.array([r[key] for r in trace])
            if np.any(y > 0):
                ax.plot(it, y, lw=1.2, label=label)
        ax.set_xlabel("iteration")
        ax.set_ylabel("loss")
        ax.set_yscale("log")
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)


def plot_sampling(part, probs_before, probs_after, labels, path):
    """Per-class sampling mass with uniform allocation (t=0) and the weighted one."""
    nz = np.argwhere(part.counts > 0)
    names = [f"{c}/{q}" for c, q in nz]
    before = np.array([probs_before[c, q] for c, q in nz])
    after = np.array([probs_after[c, q] for c, q in nz])
    x = np.arange(len(nz))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(x - 0.2, before, 0.4, label=labels[0])
        ax.bar(x + 0.2, after, 0.4, label=labels[1])
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=60)
        ax.set_xlabel("class / speed bin")
        ax.set_ylabel("probability")
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)


def plot_flow(grid, flow, path, stride=1):
    """Top-down arrows of ground-truth and recovered flow, averaged over height."""
    occ = grid.occupied & grid.visible
    moving = occ & (np.linalg.norm(grid.flow, axis=-1) > 0)
    cols = moving.any(axis=2)
    cnt = np.maximum(moving.sum(axis=2), 1)[..., None]
    gt = (grid.flow * moving[..., None]).sum(axis=2) / cnt
    rec = (flow * moving[..., None]).sum(axis=2) / cnt
    ii, jj = np.nonzero(cols)
    sel = (ii % stride == 0) & (jj % stride == 0)
    ii, jj = ii[sel], jj[sel]
    c = grid.origin[:2] + (np.stack([ii, jj], 1) + 0.5) * grid.voxel_size
    top = np.where(grid.semantics != FREE, np.arange(grid.dims[2]), -1).max(axis=2)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 5.0))
        ext = [grid.origin[0], grid.origin[0] + grid.dims[0] * grid.voxel_size,
               grid.origin[1], grid.origin[1] + grid.dims[1] * grid.voxel_size]
        ax.imshow(top.T, origin="lower", extent=ext, cmap="Greys", alpha=0.5, interpolation="nearest")
        kw = dict(angles="xy", scale_units="xy", scale=1.0, width=0.004)
        ax.quiver(c[:, 0], c[:, 1], gt[ii, jj, 0], gt[ii, jj, 1], color="tab:blue", label="true", **kw)
        ax.quiver(c[:, 0], c[:, 1], rec[ii, jj, 0], rec[ii, jj, 1], color="tab:red", label="recovered", **kw)
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_aspect("equal")
        ax.grid(False)
        ax.legend(loc="upper right")
        fig.tight_layout()
        return _save(fig, path)


def write_recovery_figures(out_dir, result, part, probs_uniform, probs_weighted, t):
    os.makedirs(out_dir, exist_ok=True)
    figs = {}
    if result.trace:
        figs["loss"] = plot_loss(result.trace, os.path.join(out_dir, "loss.png"))
    figs["sampling"] = plot_sampling(part, probs_uniform, probs_weighted, ("t=0", f"t={t:g}"),
                                     os.path.join(out_dir, "sampling.png"))
    figs["flow"] = plot_flow(result.scene.grid_t, result.flow, os.path.join(out_dir, "flow.png"))
    return figs
