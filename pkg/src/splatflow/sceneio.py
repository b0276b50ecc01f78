"""Scene JSON: the interchange format shared by every CLI subcommand.

Dense arrays are flattened in row-major (C) order. The document is
validated against ``schemas/scene.schema.json`` on load and on save.
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import jsonschema
import numpy as np

from .dynamics import DEFAULT_DYNAMIC_CLASSES
from .sampler import DEFAULT_DT
from .scene import Camera, VoxelGrid

FORMAT = "splatflow-scene"
VERSION = 1


def load_schema(name):
    text = resources.files("splatflow").joinpath("schemas", name).read_text()
    return json.loads(text)


@dataclass(eq=False)
class SceneFile:
    grid: VoxelGrid
    cameras: list
    grid_next: VoxelGrid = None
    cameras_next: list = field(default_factory=list)
    dynamic_classes: tuple = DEFAULT_DYNAMIC_CLASSES
    dt: float = DEFAULT_DT


def camera_to_dict(cam):
    return {
        "fx": float(cam.fx), "fy": float(cam.fy), "cx": float(cam.cx), "cy": float(cam.cy),
        "width": int(cam.width), "height": int(cam.height),
        "rotation": cam.rotation.tolist(), "translation": cam.translation.tolist(),
        "timestamp": float(cam.timestamp),
    }


def camera_from_dict(d):
    return Camera(d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"],
                  np.array(d["rotation"], dtype=np.float64), np.array(d["translation"], dtype=np.float64),
                  d.get("timestamp", 0.0))


def grid_to_dict(grid, embeddings=False):
    d = {
        "origin": grid.origin.tolist(),
        "voxel_size": float(grid.voxel_size),
        "dims": list(grid.dims),
        "num_classes": int(grid.num_classes),
        "order": "C",
        "semantics": grid.semantics.ravel().tolist(),
        "flow": grid.flow.ravel().tolist(),
        "visible": grid.visible.ravel().tolist(),
    }
    if embeddings and grid.embeddings.shape[-1] > 0:
        d["embed_dim"] = int(grid.embeddings.shape[-1])
        d["embeddings"] = grid.embeddings.ravel().tolist()
    return d


def grid_from_dict(d):
    dims = tuple(d["dims"])
    n = int(np.prod(dims))
    sem = np.array(d["semantics"], dtype=np.int64)
    if sem.size != n:
        raise ValueError(f"semantics has {sem.size} entries, dims need {n}")
    flow = np.array(d["flow"], dtype=np.float64) if "flow" in d else np.zeros(2 * n)
    if flow.size != 2 * n:
        raise ValueError(f"flow has {flow.size} entries, dims need {2 * n}")
    vis = np.array(d["visible"], dtype=bool) if "visible" in d else np.zeros(n, dtype=bool)
    if vis.size != n:
        raise ValueError(f"visible has {vis.size} entries, dims need {n}")
    emb = None
    if "embeddings" in d:
        c = int(d.get("embed_dim", 0))
        emb = np.array(d["embeddings"], dtype=np.float64)
        if c <= 0 or emb.size != n * c:
            raise ValueError("embeddings do not match dims and embed_dim")
        emb = emb.reshape(dims + (c,))
    return VoxelGrid(np.array(d["origin"], dtype=np.float64), float(d["voxel_size"]), sem.reshape(dims),
                     int(d["num_classes"]), flow=flow.reshape(dims + (2,)), embeddings=emb,
                     visible=vis.reshape(dims))


def scene_to_dict(scene, embeddings=False):
    d = {
        "format": FORMAT,
        "version": VERSION,
        "grid": grid_to_dict(scene.grid, embeddings),
        "cameras": [camera_to_dict(c) for c in scene.cameras],
        "dynamic_classes": [int(c) for c in scene.dynamic_classes],
        "dt": float(scene.dt),
    }
    if scene.grid_next is not None:
        d["grid_next"] = grid_to_dict(scene.grid_next, embeddings)
    if scene.cameras_next:
        d["cameras_next"] = [camera_to_dict(c) for c in scene.cameras_next]
    return d


def validate_scene_dict(d):
    """Raise ``ValueError`` if ``d`` violates the scene schema."""
    try:
        jsonschema.validate(d, load_schema("scene.schema.json"))
    except jsonschema.ValidationError as e:
        path = "/".join(str(p) for p in e.absolute_path)
        raise ValueError(f"scene JSON invalid at '{path}': {e.message}") from None


def scene_from_dict(d):
    validate_scene_dict(d)
    return SceneFile(
        grid=grid_from_dict(d["grid"]),
        cameras=[camera_from_dict(c) for c in d["cameras"]],
        grid_next=grid_from_dict(d["grid_next"]) if "grid_next" in d else None,
        cameras_next=[camera_from_dict(c) for c in d.get("cameras_next", [])],
        dynamic_classes=tuple(d.get("dynamic_classes", DEFAULT_DYNAMIC_CLASSES)),
        dt=float(d.get("dt", DEFAULT_DT)),
    )


def save_scene(path, scene, embeddings=False):
    d = scene_to_dict(scene, embeddings)
    validate_scene_dict(d)
    with open(path, "w") as f:
        json.dump(d, f, sort_keys=True)


def load_scene(path):
    with open(path) as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: not valid JSON ({e})") from None
    return scene_from_dict(d)


def from_synthetic(synth, cfg):
    """Wrap a SyntheticScene with the config's dynamic classes and time step."""
    return SceneFile(synth.grid_t, list(synth.cameras_t), synth.grid_t1, list(synth.cameras_t1),
                     tuple(cfg.dynamic_classes), cfg.dt)
