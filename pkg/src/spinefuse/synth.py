"""Synthetic depth-scene generator with analytic ground truth.

Bodies are unions of spheres, capsules, and boxes laid out from a small set
of anthropometric ratios.  Views are rendered by exact ray casting against
those primitives, so every depth image comes with a noise-free mask, the
true camera pose, the true joint positions, and the true posture angles.
Scenes round-trip through a directory of 16-bit PGM images plus JSON
sidecars and are the fixture source for the registration, skeleton, and
posture tests.

Frames: the world has x pointing to the subject's left, y down, and z
behind the subject (the subject faces -z).  The front camera sits on -z
looking straight at the body, so front-camera coordinates are world
coordinates shifted by the rig distance along z.
"""

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import EmptyRender, InvalidBody
from . import cloud as cl
from . import depthmap as dm
from .cloud import CameraIntrinsics
from .pipeline import rig_extrinsic
from .register import RigidTransform, rotation_about_axis

VIEW_NAMES = ("front", "left", "right", "back")
VIEW_YAW_DEG = {"front": 0.0, "left": 90.0, "right": -90.0, "back": 180.0}
DEFAULT_RIG_DISTANCE = 2000.0
DEFAULT_DEPTH_SCALE = 2600.0

UP = np.array([0.0, -1.0, 0.0])
ANTERIOR = np.array([0.0, 0.0, -1.0])
LATERAL = np.array([1.0, 0.0, 0.0])        # subject's left


# ---------------------------------------------------------------------------
# Body parameterization
# ---------------------------------------------------------------------------

@dataclass
class BodyParams:
    """Dimensions and pose knobs for a synthetic body.

    Bend angles are forward pitches (degrees) applied at single spine
    joints: lumbar at the middle-spine joint, thoracic at the upper-spine
    joint, cervical at the neck.  head_flexion_deg tilts the eye marker
    relative to the ear so the head-pitch angle beta has a known value.
    """

    height: float = 1700.0
    shoulder_width: float = 380.0
    hip_width: float = 340.0
    girth: float = 1.0
    cervical_deg: float = 0.0
    thoracic_deg: float = 0.0
    lumbar_deg: float = 0.0
    head_flexion_deg: float = 0.0
    include_arms: bool = True
    flat_back_mm: float = 0.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not 1200.0 <= self.height <= 2100.0:
            raise InvalidBody(f"height {self.height} outside [1200, 2100] mm")
        if not 0.0 < self.shoulder_width < self.height / 2:
            raise InvalidBody("shoulder_width must be positive and plausible")
        if not 0.0 < self.hip_width < self.height / 2:
            raise InvalidBody("hip_width must be positive and plausible")
        if not 0.15 <= self.girth <= 2.0:
            raise InvalidBody("girth must lie in [0.15, 2.0]")
        for name in ("cervical_deg", "thoracic_deg", "lumbar_deg",
                     "head_flexion_deg"):
            if abs(getattr(self, name)) > 60.0:
                raise InvalidBody(f"{name} must stay within +-60 degrees")
        if self.flat_back_mm < 0 or self.noise_sigma < 0:
            raise InvalidBody("flat_back_mm and noise_sigma must be >= 0")

    def as_dict(self):
        return {k: getattr(self, k) for k in (
            "height", "shoulder_width", "hip_width", "girth", "cervical_deg",
            "thoracic_deg", "lumbar_deg", "head_flexion_deg", "include_arms",
            "flat_back_mm", "noise_sigma")}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def thin_body(height=1300.0, **kw):
    """A mannequin-thin body whose primitive radii stay near 20 mm.

    Useful when joint positions must be recoverable from the visible
    surface to tight tolerance: the surface is never far from the bone.
    """
    kw.setdefault("girth", 0.25)
    kw.setdefault("shoulder_width", 300.0)
    kw.setdefault("hip_width", 260.0)
    kw.setdefault("include_arms", False)
    return BodyParams(height=height, **kw)


def _rx(deg):
    return rotation_about_axis(LATERAL, deg)


def body_joints(body):
    """Analytic joint positions in world coordinates (hips at the origin).

    The spine is a polyline bent at single joints; shoulders attach exactly
    at the upper-spine joint so a thoracic bend pivots about the shoulder
    midpoint and changes the cervicothoracic angle by exactly the bend.
    """
    h = body.height
    m_hip = np.zeros(3)
    d0 = UP.copy()
    lower = m_hip + d0 * (0.05 * h)
    middle = lower + d0 * (0.12 * h)
    d1 = _rx(body.lumbar_deg) @ d0
    upper = middle + d1 * (0.10 * h)
    d2 = _rx(body.thoracic_deg) @ d1
    neck = upper + d2 * (0.06 * h)
    d3 = _rx(body.cervical_deg) @ d2
    head = neck + d3 * (0.08 * h)

    r_head = 0.062 * h
    # ear markers on the head sphere, nudged forward so the frontal camera
    # actually sees them
    ear_off = r_head * (0.95 * LATERAL + math.sqrt(1 - 0.95 ** 2) * ANTERIOR)
    ear_l = head + ear_off
    ear_r = head + ear_off * np.array([-1.0, 1.0, 1.0])
    pitch = (body.lumbar_deg + body.thoracic_deg + body.cervical_deg
             + body.head_flexion_deg)
    eye_dir = _rx(pitch) @ UP
    eye_l = ear_l + eye_dir * (0.35 * r_head)
    eye_r = ear_r + eye_dir * (0.35 * r_head)

    sw, hw = body.shoulder_width / 2.0, body.hip_width / 2.0
    joints = {
        "head": head, "neck": neck,
        "upper_spine": upper, "middle_spine": middle, "lower_spine": lower,
        "left_shoulder": upper + LATERAL * sw,
        "right_shoulder": upper - LATERAL * sw,
        "left_hip": m_hip + LATERAL * hw,
        "right_hip": m_hip - LATERAL * hw,
        "left_knee": np.array([hw, 0.25 * h, 0.0]),
        "right_knee": np.array([-hw, 0.25 * h, 0.0]),
        "left_ankle": np.array([hw, 0.49 * h, 0.0]),
        "right_ankle": np.array([-hw, 0.49 * h, 0.0]),
        "left_ear": ear_l, "right_ear": ear_r,
        "left_eye_outer": eye_l, "right_eye_outer": eye_r,
    }
    return {k: np.asarray(v, dtype=np.float64) for k, v in joints.items()}


def body_primitives(body):
    """Union-of-primitives surface for a body: list of shape tuples.

    Shapes: ("sphere", center, radius), ("capsule", p0, p1, radius),
    ("box", lo, hi).
    """
    h, g = body.height, body.girth
    j = body_joints(body)
    r_head = 0.062 * h
    prims = [("sphere", j["head"], r_head),
             ("capsule", j["neck"], j["head"], 0.030 * h)]

    m_hip = np.zeros(3)
    chain = [(m_hip, j["lower_spine"], 0.085 * h * g, body.hip_width),
             (j["lower_spine"], j["middle_spine"], 0.075 * h * g,
              0.75 * body.hip_width + 0.25 * body.shoulder_width),
             (j["middle_spine"], j["upper_spine"], 0.082 * h * g,
              0.4 * body.hip_width + 0.6 * body.shoulder_width),
             (j["upper_spine"], j["neck"], 0.065 * h * g,
              body.shoulder_width)]
    for p0, p1, r, width in chain:
        prims.append(("capsule", p0, p1, r))
        side_r = 0.75 * r
        off = max(width / 2.0 - side_r, 0.0)
        for s in (1.0, -1.0):
            shift = LATERAL * (s * off)
            prims.append(("capsule", p0 + shift, p1 + shift, side_r))

    r_thigh, r_shin = 0.055 * h * g, 0.042 * h * g
    for side in ("left", "right"):
        prims.append(("capsule", j[f"{side}_hip"], j[f"{side}_knee"], r_thigh))
        prims.append(("capsule", j[f"{side}_knee"], j[f"{side}_ankle"], r_shin))

    if body.include_arms:
        r_arm = 0.030 * h * g
        for s, side in ((1.0, "left"), (-1.0, "right")):
            x = s * (body.shoulder_width / 2.0 + r_arm + 18.0)
            top = np.array([x, j["upper_spine"][1], j["upper_spine"][2]])
            elbow = np.array([x, -0.09 * h, j["upper_spine"][2]])
            wrist = np.array([x, 0.05 * h, j["upper_spine"][2]])
            prims.append(("capsule", top, elbow, r_arm))
            prims.append(("capsule", elbow, wrist, 0.85 * r_arm))

    if body.flat_back_mm > 0:
        r_chest = 0.082 * h * g
        z0 = 0.6 * r_chest
        lo = np.array([-body.shoulder_width / 2.0, j["upper_spine"][1], z0])
        hi = np.array([body.shoulder_width / 2.0, 0.04 * h,
                       z0 + body.flat_back_mm])
        prims.append(("box", lo, hi))
    return prims


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------

def _ray_sphere(origin, dirs, center, radius):
    m = origin - center
    a = np.einsum("ij,ij->i", dirs, dirs)
    b = 2.0 * dirs @ m
    c = float(m @ m) - radius * radius
    disc = b * b - 4.0 * a * c
    hit = disc >= 0.0
    t = np.full(len(dirs), np.inf)
    if hit.any():
        root = np.sqrt(disc[hit])
        t_near = (-b[hit] - root) / (2.0 * a[hit])
        t_near[t_near <= 1e-9] = np.inf
        t[hit] = t_near
    return t


def _ray_capsule(origin, dirs, p0, p1, radius):
    axis = p1 - p0
    length = np.linalg.norm(axis)
    if length < 1e-9:
        return _ray_sphere(origin, dirs, p0, radius)
    ax = axis / length
    m = origin - p0
    d_par = dirs @ ax
    m_par = float(m @ ax)
    d_perp = dirs - d_par[:, None] * ax
    m_perp = m - m_par * ax
    a = np.einsum("ij,ij->i", d_perp, d_perp)
    b = 2.0 * d_perp @ m_perp
    c = float(m_perp @ m_perp) - radius * radius
    disc = b * b - 4.0 * a * c
    t = np.full(len(dirs), np.inf)
    ok = (disc >= 0.0) & (a > 1e-12)
    if ok.any():
        root = np.sqrt(disc[ok])
        t_cyl = (-b[ok] - root) / (2.0 * a[ok])
        s = m_par + t_cyl * d_par[ok]
        good = (t_cyl > 1e-9) & (s >= 0.0) & (s <= length)
        t_ok = np.where(good, t_cyl, np.inf)
        t[ok] = t_ok
    t = np.minimum(t, _ray_sphere(origin, dirs, p0, radius))
    t = np.minimum(t, _ray_sphere(origin, dirs, p1, radius))
    return t


def _ray_box(origin, dirs, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo - origin) * inv
        t2 = (hi - origin) * inv
    tmin = np.nanmax(np.minimum(t1, t2), axis=1)
    tmax = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (tmax >= tmin) & (tmax > 1e-9)
    t = np.where(hit, np.where(tmin > 1e-9, tmin, np.inf), np.inf)
    return t


def _cast(origin, dirs, prims):
    best = np.full(len(dirs), np.inf)
    for prim in prims:
        kind = prim[0]
        if kind == "sphere":
            t = _ray_sphere(origin, dirs, prim[1], prim[2])
        elif kind == "capsule":
            t = _ray_capsule(origin, dirs, prim[1], prim[2], prim[3])
        else:
            t = _ray_box(origin, dirs, prim[1], prim[2])
        best = np.minimum(best, t)
    return best


def _prim_bounds(prims):
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for prim in prims:
        if prim[0] == "sphere":
            lo = np.minimum(lo, prim[1] - prim[2])
            hi = np.maximum(hi, prim[1] + prim[2])
        elif prim[0] == "capsule":
            lo = np.minimum(lo, np.minimum(prim[1], prim[2]) - prim[3])
            hi = np.maximum(hi, np.maximum(prim[1], prim[2]) + prim[3])
        else:
            lo = np.minimum(lo, prim[1])
            hi = np.maximum(hi, prim[2])
    return lo, hi


def render_depth(prims, extrinsic, intrinsics, depth_scale,
                 noise_sigma=0.0, rng=None):
    """Ray-cast a depth image: returns (values in [0,1], exact hit mask).

    extrinsic maps world to camera coordinates.  Background pixels get
    value 1.0, which the default dual-threshold mask rejects.  Depth noise
    (mm, along the ray's z) is added before normalization.
    """
    w, h_px = intrinsics.width, intrinsics.height
    rot, tr = extrinsic.rotation, extrinsic.translation
    origin = -(rot.T @ tr)

    # project primitive bounding box corners to find the pixel region of
    # interest; rays outside never hit anything
    lo, hi = _prim_bounds(prims)
    corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                        for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    cam = corners @ rot.T + tr
    if (cam[:, 2] <= 1.0).any():
        raise EmptyRender("body intersects the camera plane")
    us = intrinsics.fx * cam[:, 0] / cam[:, 2] + intrinsics.cx
    vs = intrinsics.fy * cam[:, 1] / cam[:, 2] + intrinsics.cy
    u0 = max(int(np.floor(us.min())) - 2, 0)
    u1 = min(int(np.ceil(us.max())) + 3, w)
    v0 = max(int(np.floor(vs.min())) - 2, 0)
    v1 = min(int(np.ceil(vs.max())) + 3, h_px)
    if u0 >= u1 or v0 >= v1:
        raise EmptyRender("body projects outside the image")

    uu, vv = np.meshgrid(np.arange(u0, u1), np.arange(v0, v1))
    dirs_cam = np.stack([(uu.ravel() - intrinsics.cx) / intrinsics.fx,
                         (vv.ravel() - intrinsics.cy) / intrinsics.fy,
                         np.ones(uu.size)], axis=1)
    dirs_world = dirs_cam @ rot            # rot.T applied to each row
    t = _cast(origin, dirs_world, prims)   # equals camera-frame depth z
    hit = np.isfinite(t)
    if not hit.any():
        raise EmptyRender("no ray hit the body")
    z = t.copy()
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        z[hit] += rng.normal(0.0, noise_sigma, size=int(hit.sum()))

    values = np.ones((h_px, w), dtype=np.float64)
    mask = np.zeros((h_px, w), dtype=bool)
    block_v = (z / depth_scale).reshape(uu.shape)
    block_m = hit.reshape(uu.shape)
    values[v0:v1, u0:u1] = np.where(block_m, block_v, 1.0)
    mask[v0:v1, u0:u1] = block_m
    if float(values[mask].max(initial=0.0)) >= 1.0:
        raise EmptyRender("depth_scale too small: depths exceed the unit range")
    return values, mask


def _quantize(values):
    q = np.round(np.clip(values, 0.0, 1.0) * 65535.0).astype(np.uint16)
    return q, q.astype(np.float64) / 65535.0


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------

@dataclass
class SceneView:
    """One rendered view plus its exact pose bookkeeping."""

    name: str
    values: np.ndarray          # quantized depth values in [0, 1]
    mask: np.ndarray            # exact hit mask
    depth16: np.ndarray         # the on-disk uint16 image
    extrinsic: RigidTransform   # world -> this camera
    gt_to_front: RigidTransform  # this camera's frame -> front camera frame


@dataclass
class SyntheticScene:
    """Four rendered views with full analytic ground truth."""

    views: dict
    landmarks: list
    gt_joints_front: dict
    body: BodyParams
    intrinsics: CameraIntrinsics
    depth_scale: float
    rig_distance: float
    yaw_deg: dict
    seed: int

    def gt_transform(self, name):
        return self.views[name].gt_to_front

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        for name, view in self.views.items():
            dm.save_pgm(os.path.join(out_dir, f"{name}.pgm"), view.depth16)
            dm.save_mask(os.path.join(out_dir, f"{name}_mask.pgm"), view.mask)
        with open(os.path.join(out_dir, "landmarks.json"), "w") as f:
            json.dump(self.landmarks, f, indent=2, sort_keys=True)
        meta = {
            "intrinsics": self.intrinsics.as_dict(),
            "depth_scale": self.depth_scale,
            "rig_distance": self.rig_distance,
            "yaw_deg": self.yaw_deg,
            "seed": self.seed,
            "body": self.body.as_dict(),
            "gt_transforms": {n: v.gt_to_front.as_matrix().tolist()
                              for n, v in self.views.items()},
            "extrinsics": {n: v.extrinsic.as_matrix().tolist()
                           for n, v in self.views.items()},
            "gt_joints_front": {k: v.tolist()
                                for k, v in self.gt_joints_front.items()},
        }
        with open(os.path.join(out_dir, "scene.json"), "w") as f:
            json.dump(meta, f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, scene_dir):
        with open(os.path.join(scene_dir, "scene.json")) as f:
            meta = json.load(f)
        with open(os.path.join(scene_dir, "landmarks.json")) as f:
            landmarks = json.load(f)
        intr = CameraIntrinsics.from_dict(meta["intrinsics"])
        views = {}
        for name in meta["gt_transforms"]:
            img = dm.load_depth(os.path.join(scene_dir, f"{name}.pgm"))
            mask = dm.load_mask(os.path.join(scene_dir, f"{name}_mask.pgm"))
            values = dm.to_unit(img)
            views[name] = SceneView(
                name=name, values=values, mask=mask, depth16=img,
                extrinsic=RigidTransform.from_matrix(
                    np.array(meta["extrinsics"][name])),
                gt_to_front=RigidTransform.from_matrix(
                    np.array(meta["gt_transforms"][name])))
        return cls(
            views=views, landmarks=landmarks,
            gt_joints_front={k: np.array(v) for k, v in
                             meta["gt_joints_front"].items()},
            body=BodyParams.from_dict(meta["body"]),
            intrinsics=intr, depth_scale=meta["depth_scale"],
            rig_distance=meta["rig_distance"], yaw_deg=meta["yaw_deg"],
            seed=meta["seed"])


def _random_perturbation(rng, max_rot_deg, max_trans_mm):
    axis = rng.normal(size=3)
    angle = rng.uniform(0.2, 1.0) * max_rot_deg
    rot = rotation_about_axis(axis, angle)
    direction = rng.normal(size=3)
    direction /= max(np.linalg.norm(direction), 1e-12)
    trans = direction * rng.uniform(0.2, 1.0) * max_trans_mm
    return RigidTransform(rot, trans)


def project_points(points_cam, intrinsics):
    pts = np.asarray(points_cam, dtype=np.float64)
    u = intrinsics.fx * pts[:, 0] / pts[:, 2] + intrinsics.cx
    v = intrinsics.fy * pts[:, 1] / pts[:, 2] + intrinsics.cy
    return np.column_stack([u, v])


LANDMARK_NAMES = (
    "left_shoulder", "right_shoulder", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
    "left_ear", "right_ear", "left_eye_outer", "right_eye_outer")


def make_scene(body=None, seed=0, intrinsics=None,
               depth_scale=DEFAULT_DEPTH_SCALE,
               rig_distance=DEFAULT_RIG_DISTANCE,
               perturb_rot_deg=2.0, perturb_trans_mm=20.0,
               misrotate_deg=None, landmark_jitter_px=0.0,
               drop_landmarks=()):
    """Render a four-view scene with analytic ground truth.

    The front camera is the unperturbed reference; the other three poses
    are disturbed by a seeded rigid perturbation bounded by
    perturb_rot_deg / perturb_trans_mm.  misrotate_deg, if given, is a
    dict view->extra yaw degrees of *unannounced* error (the kind the
    adaptive-refinement gate has to catch).
    """
    body = body or BodyParams()
    intrinsics = intrinsics or CameraIntrinsics()
    rng = np.random.default_rng(seed)
    prims = body_primitives(body)
    joints_world = body_joints(body)
    misrotate_deg = misrotate_deg or {}

    front_ext = rig_extrinsic(0.0, rig_distance)
    views = {}
    for name in VIEW_NAMES:
        ext = rig_extrinsic(VIEW_YAW_DEG[name], rig_distance)
        if name in misrotate_deg:
            # unannounced roll of the camera about its optical axis: the
            # subject stays in frame but the staged cloud lands tipped over
            roll = RigidTransform(
                rotation_about_axis([0.0, 0.0, 1.0], misrotate_deg[name]),
                np.zeros(3))
            ext = roll.compose(ext)
        if name != "front":
            if perturb_rot_deg > 0 or perturb_trans_mm > 0:
                ext = _random_perturbation(
                    rng, perturb_rot_deg, perturb_trans_mm).compose(ext)
        values, mask = render_depth(prims, ext, intrinsics, depth_scale,
                                    noise_sigma=body.noise_sigma, rng=rng)
        depth16, values_q = _quantize(values)
        views[name] = SceneView(
            name=name, values=values_q, mask=mask, depth16=depth16,
            extrinsic=ext, gt_to_front=front_ext.compose(ext.inverse()))

    joints_front = {k: front_ext.apply(v) for k, v in joints_world.items()}
    pix = project_points(
        np.stack([joints_front[n] for n in LANDMARK_NAMES]), intrinsics)
    if landmark_jitter_px > 0:
        pix = pix + rng.uniform(-landmark_jitter_px, landmark_jitter_px,
                                size=pix.shape)
    landmarks = [
        {"name": n, "x": float(pix[i, 0]), "y": float(pix[i, 1]),
         "confidence": 1.0}
        for i, n in enumerate(LANDMARK_NAMES) if n not in drop_landmarks]
    return SyntheticScene(
        views=views, landmarks=landmarks, gt_joints_front=joints_front,
        body=body, intrinsics=intrinsics, depth_scale=depth_scale,
        rig_distance=rig_distance, yaw_deg=dict(VIEW_YAW_DEG), seed=seed)


def render_cloud(body=None, yaw_deg=0.0, seed=0, intrinsics=None,
                 depth_scale=DEFAULT_DEPTH_SCALE,
                 rig_distance=DEFAULT_RIG_DISTANCE, step=4,
                 noise_sigma=None, extrinsic=None):
    """One rendered view backprojected to a camera-frame point cloud.

    Convenience for registration fixtures; returns (cloud, extrinsic).
    """
    body = body or BodyParams()
    intrinsics = intrinsics or CameraIntrinsics()
    rng = np.random.default_rng(seed)
    prims = body_primitives(body)
    ext = extrinsic or rig_extrinsic(yaw_deg, rig_distance)
    sigma = body.noise_sigma if noise_sigma is None else noise_sigma
    values, mask = render_depth(prims, ext, intrinsics, depth_scale,
                                noise_sigma=sigma, rng=rng)
    _, values_q = _quantize(values)
    cloud = cl.backproject(values_q, mask, intrinsics, step=step,
                           depth_scale=depth_scale)
    return cloud, ext


def make_icp_pair(seed=0, offset_rot_deg=4.0, offset_trans_mm=30.0,
                  flat=True, resolution=256, step=2, noise_sigma=0.4):
    """Source/target cloud pair with known relative pose for ICP studies.

    Renders the back view of a (by default) planar-dominant body from two
    nearby camera poses.  Returns (source, target, gt) where gt maps
    source-camera coordinates onto target-camera coordinates.
    """
    rng = np.random.default_rng(seed)
    body = BodyParams(
        height=float(rng.uniform(1500, 1900)),
        shoulder_width=float(rng.uniform(340, 430)),
        hip_width=float(rng.uniform(300, 380)),
        girth=float(rng.uniform(0.8, 1.2)),
        flat_back_mm=60.0 if flat else 0.0,
        noise_sigma=noise_sigma)
    intr = CameraIntrinsics(fx=256.0, fy=256.0, cx=resolution / 2.0,
                            cy=resolution / 2.0, width=resolution,
                            height=resolution)
    ext_t = rig_extrinsic(180.0, DEFAULT_RIG_DISTANCE)
    perturb = _random_perturbation(rng, offset_rot_deg, offset_trans_mm)
    ext_s = perturb.compose(ext_t)
    target, _ = render_cloud(body=body, intrinsics=intr, step=step,
                             seed=seed + 1, extrinsic=ext_t)
    source, _ = render_cloud(body=body, intrinsics=intr, step=step,
                             seed=seed + 2, extrinsic=ext_s)
    gt = ext_t.compose(ext_s.inverse())
    return source, target, gt
