"""Reconstruction configuration with the published parameter presets.

default_config carries the operative per-view settings (coarse voxel
4/4/5 mm, ICP pyramids [15,8,4,2] for the sides and [25,12,6] for the
back, 50k/50k/30k RANSAC iterations, rotation residual capped at 2
degrees).  alternate_config ships the other parameter family found in
the method description (5 mm left/back and 3 mm right voxels, pyramids
[25,12,6] and [10,5,2.5,1], unrestricted right-view rotation).
Configs mirror to JSON one-to-one; unknown keys are rejected.
"""

import json
from dataclasses import asdict, dataclass, field, fields

from .cloud import CameraIntrinsics
from .errors import ConfigError
from .register import DEFAULT_QUALITY_K

VIEW_NAMES = ("front", "left", "right", "back")
DEFAULT_VIEW_ORDER = ("front", "left", "right", "back")
DEFAULT_RIG_YAW_DEG = {"front": 0.0, "left": 90.0, "right": -90.0,
                       "back": 180.0}


@dataclass
class MaskConfig:
    low: float = 0.2
    high: float = 0.95
    morph_radius: int = 3


@dataclass
class ViewRegistration:
    """Registration schedule for one non-reference view."""

    coarse_voxel: float = 4.0
    ransac_iterations: int = 50000
    rotation_limit_deg: float | None = 2.0
    icp_voxels: tuple = (15.0, 8.0, 4.0, 2.0)
    icp_iterations: tuple = (150, 200, 250, 300)
    small_rotation_caps_deg: tuple = (2.0, 1.0, 0.5)
    small_rotation_iterations: tuple = (30, 30, 60)
    translation_iterations: tuple = (20, 20, 30)
    translation_dist_factor: float = 1.5
    # correspondence basis for the small-rotation and translation polish
    # stages; fixed at the rig's finest working scale so a view with a
    # coarse pyramid still gets sub-voxel final placement
    polish_voxel: float = 2.0
    feature_radius_factor: float = 5.0
    normal_radius_factor: float = 2.0
    normal_max_nn: int = 30

    def __post_init__(self):
        if self.coarse_voxel <= 0:
            raise ConfigError("coarse_voxel must be positive")
        if self.ransac_iterations <= 0:
            raise ConfigError("ransac_iterations must be positive")
        if not self.icp_voxels:
            raise ConfigError("icp_voxels must be non-empty")
        self.icp_voxels = tuple(float(v) for v in self.icp_voxels)
        self.icp_iterations = tuple(int(i) for i in self.icp_iterations)
        self.small_rotation_caps_deg = tuple(
            float(c) for c in self.small_rotation_caps_deg)
        self.small_rotation_iterations = tuple(
            int(i) for i in self.small_rotation_iterations)
        self.translation_iterations = tuple(
            int(i) for i in self.translation_iterations)
        self.polish_voxel = float(self.polish_voxel)
        if self.polish_voxel <= 0:
            raise ConfigError("polish_voxel must be positive")
        if len(self.small_rotation_caps_deg) != len(
                self.small_rotation_iterations):
            raise ConfigError("small-rotation caps and iterations must pair")


@dataclass
class ReconstructionConfig:
    camera: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    depth_scale: float = 100.0
    mask: MaskConfig = field(default_factory=MaskConfig)
    backproject_step: int = 1
    views: dict = field(default_factory=dict)
    view_order: tuple = DEFAULT_VIEW_ORDER
    rig_yaw_deg: dict = field(
        default_factory=lambda: dict(DEFAULT_RIG_YAW_DEG))
    rig_distance: float = 2000.0
    quality_threshold: float = 0.4
    quality_k: float = DEFAULT_QUALITY_K
    refinement_rounds: int = 2
    # widened RANSAC rotation window during refinement; anything >= 90 deg
    # would place a view in a neighboring rig slot, so stay below that
    refine_rotation_limit_deg: float = 90.0
    merge_voxel: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.view_order = tuple(self.view_order)
        if sorted(self.view_order) != sorted(VIEW_NAMES):
            raise ConfigError(
                f"view_order must be a permutation of {VIEW_NAMES}")
        for name in VIEW_NAMES:
            if name not in self.rig_yaw_deg:
                raise ConfigError(f"rig_yaw_deg missing view {name}")
        for name in VIEW_NAMES:
            self.views.setdefault(name, ViewRegistration())
        extra = set(self.views) - set(VIEW_NAMES)
        if extra:
            raise ConfigError(f"unknown views in config: {sorted(extra)}")
        if not 0 <= self.quality_threshold <= 1:
            raise ConfigError("quality_threshold must be in [0, 1]")
        if self.refinement_rounds < 0:
            raise ConfigError("refinement_rounds must be >= 0")

    # -- serialization ------------------------------------------------

    def as_dict(self):
        return {
            "camera": self.camera.as_dict(),
            "depth_scale": self.depth_scale,
            "mask": asdict(self.mask),
            "backproject_step": self.backproject_step,
            "views": {name: asdict(v) for name, v in sorted(
                self.views.items())},
            "view_order": list(self.view_order),
            "rig_yaw_deg": {k: float(v) for k, v in sorted(
                self.rig_yaw_deg.items())},
            "rig_distance": self.rig_distance,
            "quality_threshold": self.quality_threshold,
            "quality_k": self.quality_k,
            "refinement_rounds": self.refinement_rounds,
            "refine_rotation_limit_deg": self.refine_rotation_limit_deg,
            "merge_voxel": self.merge_voxel,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {f.name for f in fields(cls)}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        kwargs = {}
        if "camera" in data:
            kwargs["camera"] = CameraIntrinsics.from_dict(data.pop("camera"))
        if "mask" in data:
            m = data.pop("mask")
            bad = set(m) - {f.name for f in fields(MaskConfig)}
            if bad:
                raise ConfigError(f"unknown mask keys: {sorted(bad)}")
            kwargs["mask"] = MaskConfig(**m)
        if "views" in data:
            views = {}
            vr_fields = {f.name for f in fields(ViewRegistration)}
            for name, v in data.pop("views").items():
                bad = set(v) - vr_fields
                if bad:
                    raise ConfigError(
                        f"unknown view keys for {name}: {sorted(bad)}")
                views[name] = ViewRegistration(**v)
            kwargs["views"] = views
        kwargs.update(data)
        return cls(**kwargs)

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def default_config(**overrides):
    """Operative per-view parameter set (coarse 4/4/5 mm family)."""
    views = {
        "front": ViewRegistration(),
        "left": ViewRegistration(coarse_voxel=4.0, ransac_iterations=50000,
                                 icp_voxels=(15.0, 8.0, 4.0, 2.0)),
        "right": ViewRegistration(coarse_voxel=4.0, ransac_iterations=50000,
                                  icp_voxels=(15.0, 8.0, 4.0, 2.0)),
        "back": ViewRegistration(coarse_voxel=5.0, ransac_iterations=30000,
                                 icp_voxels=(25.0, 12.0, 6.0)),
    }
    cfg = ReconstructionConfig(views=views, **overrides)
    return cfg


def alternate_config(**overrides):
    """Second parameter family: 5/3/5 mm voxels, wider right rotation."""
    views = {
        "front": ViewRegistration(),
        "left": ViewRegistration(coarse_voxel=5.0, ransac_iterations=50000,
                                 icp_voxels=(25.0, 12.0, 6.0)),
        "right": ViewRegistration(coarse_voxel=3.0, ransac_iterations=50000,
                                  icp_voxels=(10.0, 5.0, 2.5, 1.0),
                                  rotation_limit_deg=None),
        "back": ViewRegistration(coarse_voxel=5.0, ransac_iterations=30000,
                                 icp_voxels=(25.0, 12.0, 6.0)),
    }
    return ReconstructionConfig(views=views, **overrides)
