"""Desk-scale synthetic driving scenes: ground plane, static clutter and moving boxes."""

from dataclasses import dataclass

import numpy as np

from ..projection import compute_visibility_mask
from ..scene import FREE, Camera, VoxelGrid


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    grid_t: VoxelGrid
    grid_t1: VoxelGrid
    cameras_t: list
    cameras_t1: list
    instances_t: np.ndarray  # (H, W, D) object id per voxel, -1 for ground/clutter/free
    objects: list  # BoxSpec per instance id


def _box_mask(centers, center_xy, base_z, size, yaw):
    c, s = np.cos(yaw), np.sin(yaw)
    rel = centers[..., :2] - np.asarray(center_xy, dtype=np.float64)
    lx = c * rel[..., 0] + s * rel[..., 1]
    ly = -s * rel[..., 0] + c * rel[..., 1]
    z = centers[..., 2] - base_z
    return (np.abs(lx) <= size[0] / 2) & (np.abs(ly) <= size[1] / 2) & (z >= 0) & (z <= size[2])


def make_rig(rig, ground_top, ego_xy=(0.0, 0.0), timestamp=0.0):
    cams = []
    eye = np.array([ego_xy[0], ego_xy[1], ground_top + rig.height_m])
    pitch = np.deg2rad(rig.pitch_deg)
    for i in range(rig.num_cameras):
        yaw = np.deg2rad(rig.yaw_offset_deg + 360.0 * i / rig.num_cameras)
        fwd = np.array([np.cos(yaw) * np.cos(pitch), np.sin(yaw) * np.cos(pitch), -np.sin(pitch)])
        cams.append(Camera.look_at(eye, eye + fwd, rig.fov_deg, rig.width, rig.height, timestamp=timestamp))
    return cams


def _rasterize(spec, objects, clutter, offset_t, centers, base_z, shape):
    sem = np.full(shape, FREE, dtype=np.int64)
    flow = np.zeros(shape + (2,))
    inst = np.full(shape, -1, dtype=np.int64)
    sem[:, :, 0] = spec.ground_class
    for cls, size, pos, yaw in clutter:
        m = _box_mask(centers, pos, base_z, size, yaw)
        sem[m] = cls
        flow[m] = 0.0
    # later objects overwrite earlier ones
    for i, ob in enumerate(objects):
        pos = np.asarray(ob.position, dtype=np.float64) + np.asarray(ob.velocity, dtype=np.float64) * offset_t
        m = _box_mask(centers, pos, base_z, ob.size, ob.yaw)
        sem[m] = ob.cls
        flow[m] = ob.velocity
        inst[m] = i
    return sem, flow, inst


def make_synthetic_scene(cfg, seed=None):
    """Build ground-truth grids and camera rigs at frames t and t+dt.

    Boxes are rasterized by voxel-center containment; at t+dt every box is
    displaced by ``velocity * dt``. Overlapping objects: the later one wins.
    """
    spec, rig, dt = cfg.scene, cfg.rig, cfg.dt
    seed = cfg.scene_seed if seed is None else seed
    rng = np.random.default_rng(seed)
    H, W, D = spec.dims
    vs = spec.voxel_size
    origin = np.asarray(spec.resolved_origin(), dtype=np.float64)
    idx = np.stack(np.meshgrid(np.arange(H), np.arange(W), np.arange(D), indexing="ij"), axis=-1)
    centers = origin + (idx + 0.5) * vs
    base_z = origin[2] + vs  # top of the ground layer
    extent = np.array([H, W]) * vs

    clutter = []
    tries = 0
    while len(clutter) < spec.clutter_count and tries < 1000:
        tries += 1
        size = rng.uniform([1.0, 1.0, 1.0], [3.0, 3.0, 3.0])
        pos = origin[:2] + rng.uniform(size[:2], extent - size[:2])
        if np.linalg.norm(pos) < spec.clutter_keepout + size[:2].max():
            continue
        clear = True
        for ob in spec.objects:
            p0 = np.asarray(ob.position, dtype=np.float64)
            p1 = p0 + np.asarray(ob.velocity, dtype=np.float64) * dt
            r = spec.clutter_keepout / 2 + max(ob.size[:2]) / 2 + size[:2].max() / 2
            if min(np.linalg.norm(pos - p0), np.linalg.norm(pos - p1)) < r:
                clear = False
        if clear:
            clutter.append((int(rng.choice(spec.clutter_classes)), size, pos, float(rng.uniform(0, np.pi))))

    shape = (H, W, D)
    sem_t, flow_t, inst_t = _rasterize(spec, spec.objects, clutter, 0.0, centers, base_z, shape)
    sem_t1, flow_t1, _ = _rasterize(spec, spec.objects, clutter, dt, centers, base_z, shape)

    emb = rng.normal(size=shape + (spec.embed_dim,))
    cams_t = make_rig(rig, base_z, (0.0, 0.0), 0.0)
    ego1 = np.asarray(rig.ego_velocity, dtype=np.float64) * dt
    cams_t1 = make_rig(rig, base_z, ego1, dt)

    def grid(sem, flow, cams):
        g = VoxelGrid(origin, vs, sem, spec.num_classes, flow=flow,
                      embeddings=np.where((sem != FREE)[..., None], emb, 0.0))
        return g.with_(visible=compute_visibility_mask(g, cams, stride=cfg.visibility_stride))

    return SyntheticScene(grid(sem_t, flow_t, cams_t), grid(sem_t1, flow_t1, cams_t1), cams_t, cams_t1,
                          inst_t, list(spec.objects))
