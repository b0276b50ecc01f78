"""Experiment configuration, loadable from JSON."""

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Optional

import jsonschema

from ..dynamics import DEFAULT_DYNAMIC_CLASSES
from ..sampler import DEFAULT_BIN_EDGES


@dataclass
class BoxSpec:
    cls: int
    size: list  # (sx, sy, sz) meters
    position: list  # (x, y) of the box center on the ground
    velocity: list = field(default_factory=lambda: [0.0, 0.0])
    yaw: float = 0.0


@dataclass
class SceneSpec:
    dims: list = field(default_factory=lambda: [40, 40, 8])
    voxel_size: float = 0.5
    origin: Optional[list] = None  # defaults to an ego-centred grid whose first layer is the ground
    num_classes: int = 16
    ground_class: int = 10
    objects: list = field(default_factory=list)
    clutter_count: int = 0
    clutter_classes: list = field(default_factory=lambda: [0, 14, 15])
    clutter_keepout: float = 3.0
    embed_dim: int = 32

    def resolved_origin(self):
        if self.origin is not None:
            return list(self.origin)
        H, W, _ = self.dims
        return [-H * self.voxel_size / 2, -W * self.voxel_size / 2, -1.0]


@dataclass
class RigSpec:
    num_cameras: int = 4
    width: int = 64
    height: int = 48
    fov_deg: float = 90.0
    height_m: float = 1.5
    pitch_deg: float = 10.0
    yaw_offset_deg: float = 0.0
    ego_velocity: list = field(default_factory=lambda: [0.0, 0.0])


@dataclass
class OptimizerSpec:
    iterations: int = 300
    lr_flow: float = 0.1
    lr_decoder: float = 1e-3
    lr_logits: float = 0.0
    learn_decoder: bool = True
    hidden: int = 64
    seed: int = 0
    flow_warmup: int = 0
    shape_warmup: int = 0  # initial iterations that train only the decoder (flow frozen)
    decoder_from_dynamic: bool = False  # let dynamic-pass gradients reach the decoder
    lr_final_ratio: float = 1.0  # steps decay geometrically to this fraction by the last iteration
    flow_coupling: float = 1.0  # weight of the region-mean flow gradient; 0 = independent voxels


@dataclass
class SamplerSpec:
    t: float = 0.5
    n: int = 100000
    bin_edges: list = field(default_factory=lambda: list(DEFAULT_BIN_EDGES))


@dataclass
class AblationSpec:
    use_2d_loss: bool = True
    use_multiframe: bool = True
    use_decompose: bool = True
    use_weighted_sampling: bool = True


@dataclass
class ExperimentConfig:
    scene: SceneSpec = field(default_factory=SceneSpec)
    rig: RigSpec = field(default_factory=RigSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    sampler: SamplerSpec = field(default_factory=SamplerSpec)
    ablation: AblationSpec = field(default_factory=AblationSpec)
    loss_weights: dict = field(default_factory=lambda: {"occ": 0.0, "flow": 0.0, "2d": 1.0})
    dynamic_classes: list = field(default_factory=lambda: list(DEFAULT_DYNAMIC_CLASSES))
    dt: float = 0.5
    visibility_stride: int = 1
    scene_seed: int = 0

    def validate(self):
        P = self.scene.num_classes
        classes = [o.cls for o in self.scene.objects] + list(self.scene.clutter_classes) + [self.scene.ground_class]
        classes += list(self.dynamic_classes)
        bad = [c for c in classes if not 0 <= c < P]
        if bad:
            raise ValueError(f"class ids {bad} outside [0, {P})")
        if not 0.0 < self.optimizer.lr_final_ratio <= 1.0:
            raise ValueError("lr_final_ratio must lie in (0, 1]")
        if not 0.0 <= self.optimizer.flow_coupling <= 1.0:
            raise ValueError("flow_coupling must lie in [0, 1]")
        if self.optimizer.shape_warmup < 0:
            raise ValueError("shape_warmup must be >= 0")
        if self.optimizer.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.sampler.t < 0 or self.sampler.n < 0:
            raise ValueError("sampler t and n must be non-negative")
        return self

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["sampler"]["bin_edges"] = [e if e != float("inf") else "inf" for e in self.sampler.bin_edges]
        return d

    @classmethod
    def from_dict(cls, d):
        from ..sceneio import load_schema

        try:
            jsonschema.validate(d, load_schema("config.schema.json"))
        except jsonschema.ValidationError as e:
            path = "/".join(str(p) for p in e.absolute_path)
            raise ValueError(f"config JSON invalid at '{path}': {e.message}") from None
        d = dict(d)
        scene = dict(d.pop("scene", {}))
        scene["objects"] = [BoxSpec(**o) for o in scene.get("objects", [])]
        sampler = dict(d.pop("sampler", {}))
        if "bin_edges" in sampler:
            sampler["bin_edges"] = [float(e) for e in sampler["bin_edges"]]
        cfg = cls(
            scene=SceneSpec(**scene),
            rig=RigSpec(**d.pop("rig", {})),
            optimizer=OptimizerSpec(**d.pop("optimizer", {})),
            sampler=SamplerSpec(**sampler),
            ablation=AblationSpec(**d.pop("ablation", {})),
            **d,
        )
        return cfg.validate()

    @classmethod
    def load(cls, path):
        with open(path) as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}: not valid JSON ({e})") from None
        return cls.from_dict(d)

    def dump(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
