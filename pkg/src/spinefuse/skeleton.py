"""Spinal skeleton estimation: landmark lifting, per-LOD refinement,
median ensemble voting, and spine segmentation with regional bend angles.

Joints start from 2D pose landmarks on the frontal image, lifted onto the
frontal point cloud along pixel rays.  Each LOD mesh then nudges the
joints toward the local surface (robust median centroid), the per-LOD
skeletons are fused by coordinate-wise median voting that only ever picks
real candidates, and the spine polyline is cut at 20/50/80% of the
effective length into cervical/thoracic/lumbar regions whose angles are
the worst adjacent-segment bends inside each region.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (DegenerateLandmarks, EnsembleTooSmall,
                     ImplausibleSkeleton)

DEFAULT_UP = np.array([0.0, -1.0, 0.0])
SPINE_NAMES = ("neck", "upper_spine", "middle_spine", "lower_spine")
SPINE_FRACTIONS = (0.28, 0.60, 0.92)   # neck -> hip interpolation stops
REGION_NAMES = ("cervical", "thoracic", "lumbar")
REGION_UPPER_FRACTION = {"cervical": 0.20, "thoracic": 0.50, "lumbar": 0.80}
LIFT_MAX_RAY_DIST = 20.0
REFINE_RADIUS = 30.0
REFINE_MAX_DISPLACEMENT = 30.0
MIN_EFFECTIVE_LENGTH = 200.0
MIN_ENSEMBLE = 3

_REQUIRED_PAIRS = ("shoulder", "hip", "ear")


# ---------------------------------------------------------------------------
# 2D landmarks
# ---------------------------------------------------------------------------

@dataclass
class LandmarkSet2D:
    """Named pixel landmarks with confidences on one frontal image."""

    points: dict
    confidence: dict
    width: int
    height: int

    def __post_init__(self):
        for name, (x, y) in self.points.items():
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise DegenerateLandmarks(
                    f"landmark {name} at ({x:.1f}, {y:.1f}) is outside the "
                    f"{self.width}x{self.height} image")
        for part in _REQUIRED_PAIRS:
            for side in ("left", "right"):
                if f"{side}_{part}" not in self.points:
                    raise DegenerateLandmarks(f"missing required {side}_{part}")

    def has(self, name):
        return name in self.points

    def get(self, name):
        return np.asarray(self.points[name], dtype=np.float64)

    @classmethod
    def from_records(cls, records, width, height, min_confidence=0.5):
        """Build from a list of {name, x, y, confidence} dicts.

        Entries below min_confidence are treated as absent.
        """
        pts, conf = {}, {}
        for rec in records:
            c = float(rec.get("confidence", 1.0))
            if c < min_confidence:
                continue
            pts[rec["name"]] = (float(rec["x"]), float(rec["y"]))
            conf[rec["name"]] = c
        return cls(points=pts, confidence=conf, width=width, height=height)

    @classmethod
    def from_json(cls, path, width, height, min_confidence=0.5):
        with open(path) as f:
            records = json.load(f)
        return cls.from_records(records, width, height, min_confidence)


# ---------------------------------------------------------------------------
# 3D skeleton
# ---------------------------------------------------------------------------

@dataclass
class Skeleton3D:
    """Named 3D joints (mm) with provenance flags."""

    joints: dict
    flags: dict = field(default_factory=dict)
    up: np.ndarray = field(default_factory=lambda: DEFAULT_UP.copy())

    def __post_init__(self):
        self.joints = {k: np.asarray(v, dtype=np.float64).reshape(3)
                       for k, v in self.joints.items()}
        self.up = np.asarray(self.up, dtype=np.float64).reshape(3)

    def copy(self):
        return Skeleton3D({k: v.copy() for k, v in self.joints.items()},
                          dict(self.flags), self.up.copy())

    def _mid(self, a, b):
        return (self.joints[a] + self.joints[b]) / 2.0

    @property
    def m_sh(self):
        return self._mid("left_shoulder", "right_shoulder")

    @property
    def m_hip(self):
        return self._mid("left_hip", "right_hip")

    @property
    def m_knee(self):
        return self._mid("left_knee", "right_knee")

    def as_dict(self):
        return {"joints": {k: v.tolist() for k, v in self.joints.items()},
                "flags": dict(self.flags), "up": self.up.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(joints={k: np.array(v) for k, v in d["joints"].items()},
                   flags=dict(d.get("flags", {})),
                   up=np.array(d.get("up", DEFAULT_UP)))


def _lift_on_ray(points, pixel, intrinsics, max_ray_dist):
    """Nearest cloud point to the pixel's viewing ray, within max_ray_dist."""
    d = np.array([(pixel[0] - intrinsics.cx) / intrinsics.fx,
                  (pixel[1] - intrinsics.cy) / intrinsics.fy, 1.0])
    d /= np.linalg.norm(d)
    proj = points @ d
    perp = points - proj[:, None] * d
    dist = np.linalg.norm(perp, axis=1)
    dist[proj <= 0] = np.inf      # behind the camera
    idx = int(np.argmin(dist))
    if not np.isfinite(dist[idx]) or dist[idx] > max_ray_dist:
        return None
    return points[idx].copy()


def init_joints(landmarks, reference, intrinsics,
                max_ray_dist=LIFT_MAX_RAY_DIST,
                spine_fractions=SPINE_FRACTIONS, up=DEFAULT_UP):
    """Lift 2D landmarks onto the frontal cloud and build the joint set.

    Landmarks whose rays miss the cloud are synthesized from anatomical
    proportions and flagged.  Spine joints are interpolated between the
    neck (shoulder midpoint) and the hip midpoint at the given fractions.
    """
    points = reference.points if hasattr(reference, "points") else np.asarray(reference)
    if len(points) == 0:
        raise DegenerateLandmarks("reference cloud is empty")
    up = np.asarray(up, dtype=np.float64)

    lifted, flags = {}, {}
    for name in landmarks.points:
        p = _lift_on_ray(points, landmarks.get(name), intrinsics,
                         max_ray_dist)
        if p is not None:
            lifted[name] = p
            flags[name] = "lifted"

    def lateral_mirror(p, center, lateral):
        return p - 2.0 * lateral * float(lateral @ (p - center))

    # shoulders and hips anchor everything; mirror a lone survivor of a
    # pair across the sagittal plane of the other pair
    for part, other in (("hip", "shoulder"), ("shoulder", "hip")):
        l, r = f"left_{part}", f"right_{part}"
        have = [n for n in (l, r) if n in lifted]
        if len(have) == 0:
            raise DegenerateLandmarks(
                f"neither {part} landmark could be lifted onto the cloud")
        if len(have) == 1:
            ol, orr = f"left_{other}", f"right_{other}"
            if ol not in lifted or orr not in lifted:
                raise DegenerateLandmarks(
                    f"cannot mirror the missing {part}: {other} pair absent")
            lateral = lifted[ol] - lifted[orr]
            nrm = np.linalg.norm(lateral)
            if nrm < 1e-9:
                raise DegenerateLandmarks(f"{other} pair is degenerate")
            lateral = lateral / nrm
            center = (lifted[ol] + lifted[orr]) / 2.0
            missing = r if have[0] == l else l
            lifted[missing] = lateral_mirror(lifted[have[0]], center, lateral)
            flags[missing] = "synthesized"

    m_sh = (lifted["left_shoulder"] + lifted["right_shoulder"]) / 2.0
    m_hip = (lifted["left_hip"] + lifted["right_hip"]) / 2.0
    trunk = m_sh - m_hip
    if np.linalg.norm(trunk) < 1e-6:
        raise DegenerateLandmarks("shoulder and hip midpoints coincide")
    lateral = lifted["left_shoulder"] - lifted["right_shoulder"]
    lateral /= max(np.linalg.norm(lateral), 1e-12)

    joints = dict(lifted)
    joints["neck"] = m_sh.copy()
    flags["neck"] = "derived"
    for name, f in zip(("upper_spine", "middle_spine", "lower_spine"),
                       spine_fractions):
        joints[name] = m_sh + f * (m_hip - m_sh)
        flags[name] = "derived"

    # head from ears; a lone ear is projected onto the sagittal plane
    ears = [n for n in ("left_ear", "right_ear") if n in joints]
    if len(ears) == 2:
        joints["head"] = (joints["left_ear"] + joints["right_ear"]) / 2.0
        flags["head"] = "derived"
    elif len(ears) == 1:
        e = joints[ears[0]]
        joints["head"] = e - lateral * float(lateral @ (e - m_sh))
        flags["head"] = "synthesized"
        other = "right_ear" if ears[0] == "left_ear" else "left_ear"
        joints[other] = lateral_mirror(e, joints["head"], lateral)
        flags[other] = "synthesized"
    else:
        joints["head"] = joints["neck"] + 0.35 * trunk
        flags["head"] = "synthesized"

    # knees: the documented fallback places them along hip->ankle
    for side in ("left", "right"):
        knee, hip, ankle = (f"{side}_knee", f"{side}_hip", f"{side}_ankle")
        if knee not in joints:
            if ankle in joints:
                joints[knee] = joints[hip] + 0.45 * (joints[ankle] - joints[hip])
            else:
                joints[knee] = joints[hip] - 0.55 * trunk
            flags[knee] = "synthesized"

    for side in ("left", "right"):
        eye, ear = f"{side}_eye_outer", f"{side}_ear"
        if eye not in joints and ear in joints:
            joints[eye] = joints[ear] + 0.3 * (joints["head"] - joints["neck"])
            flags[eye] = "synthesized"

    # synthesized joints must stay inside the cloud's slightly padded box
    lo, hi = points.min(axis=0), points.max(axis=0)
    pad = 0.05 * (hi - lo)
    for name, flag in flags.items():
        if flag == "synthesized":
            joints[name] = np.clip(joints[name], lo - pad, hi + pad)

    return Skeleton3D(joints=joints, flags=flags, up=up)


def refine_joints_on_lod(sk, mesh, radius=REFINE_RADIUS,
                         max_displacement=REFINE_MAX_DISPLACEMENT):
    """Snap each joint toward the median of nearby mesh vertices.

    Displacement is capped; joints with no vertices in range are left
    alone and flagged.  Spine ordering along the vertical axis is
    re-enforced afterwards.
    """
    verts = getattr(mesh, "vertices", None)
    if verts is None:
        verts = mesh.points if hasattr(mesh, "points") else np.asarray(mesh)
    verts = np.asarray(verts, dtype=np.float64)
    if len(verts) == 0:
        raise ImplausibleSkeleton("refinement surface is empty")
    tree = cKDTree(verts)

    out = sk.copy()
    for name, p in out.joints.items():
        idx = tree.query_ball_point(p, radius)
        if not idx:
            out.flags[name] = out.flags.get(name, "") + "+no_support"
            continue
        target = np.median(verts[idx], axis=0)
        delta = target - p
        dist = np.linalg.norm(delta)
        if dist > max_displacement:
            delta *= max_displacement / dist
        out.joints[name] = p + delta

    # keep neck above upper above middle above lower along `up`
    present = [n for n in SPINE_NAMES if n in out.joints]
    if len(present) > 1:
        positions = [out.joints[n] for n in present]
        heights = [float(out.up @ p) for p in positions]
        order = np.argsort(heights)[::-1]          # tallest first
        for name, k in zip(present, order):
            out.joints[name] = positions[int(k)]
    return out


def ensemble_vote(candidates):
    """Median-vote joints across LOD skeletons, selecting real candidates.

    For every joint the coordinate-wise median over candidates is computed
    and the candidate joint closest to it wins; ties go to the
    higher-detail (earlier) candidate.  The result never contains an
    interpolated coordinate.
    """
    if len(candidates) < MIN_ENSEMBLE:
        raise EnsembleTooSmall(
            f"{len(candidates)} candidates, need >= {MIN_ENSEMBLE}")
    common = set(candidates[0].joints)
    for c in candidates[1:]:
        common &= set(c.joints)
    joints, flags = {}, {}
    for name in sorted(common):
        stack = np.stack([c.joints[name] for c in candidates])
        med = np.median(stack, axis=0)
        d = np.linalg.norm(stack - med, axis=1)
        sel = int(np.argmin(d))                    # first minimum wins
        joints[name] = stack[sel].copy()
        flags[name] = f"voted:{sel}"
    # carry joints absent from some candidates from the best-detail owner
    for c in candidates:
        for name, p in c.joints.items():
            if name not in joints:
                joints[name] = p.copy()
                flags[name] = "unvoted"
    return Skeleton3D(joints=joints, flags=flags, up=candidates[0].up.copy())


# ---------------------------------------------------------------------------
# Spine segmentation
# ---------------------------------------------------------------------------

@dataclass
class SpineRegions:
    """Per-region worst bends plus the length bookkeeping behind them."""

    cervical_deg: float
    thoracic_deg: float
    lumbar_deg: float
    effective_length: float
    boundaries: dict                  # region -> mm below C7 of its lower edge
    vertex_bends: dict = field(default_factory=dict)

    def angle(self, region):
        return getattr(self, f"{region}_deg")

    def as_dict(self):
        return {"cervical_deg": self.cervical_deg,
                "thoracic_deg": self.thoracic_deg,
                "lumbar_deg": self.lumbar_deg,
                "effective_length": self.effective_length,
                "boundaries": dict(self.boundaries),
                "vertex_bends": {k: list(v) for k, v in self.vertex_bends.items()}}


def _bend_deg(prev_pt, pt, next_pt):
    d1 = pt - prev_pt
    d2 = next_pt - pt
    n1, n2 = np.linalg.norm(d1), np.linalg.norm(d2)
    if n1 < 1e-9 or n2 < 1e-9:
        return 0.0
    c = float(np.clip(d1 @ d2 / (n1 * n2), -1.0, 1.0))
    return float(np.degrees(np.arccos(c)))


def segment_spine(sk, up=None):
    """Cut the spine at 20/50/80% of effective length and measure bends.

    Effective length is the vertical distance from the neck (C7 stand-in)
    to the lower-spine terminus.  The analyzed polyline runs
    head -> neck -> upper -> middle -> lower; each interior vertex is
    assigned to the region containing its vertical fraction and the
    region angle is the largest adjacent-segment bend among its vertices.
    """
    joints = sk.joints if hasattr(sk, "joints") else sk
    if up is None:
        up = getattr(sk, "up", DEFAULT_UP)
    up = np.asarray(up, dtype=np.float64)
    up = up / np.linalg.norm(up)

    for name in SPINE_NAMES:
        if name not in joints:
            raise ImplausibleSkeleton(f"spine joint {name} missing")
    h_neck = float(up @ np.asarray(joints["neck"]))
    h_lower = float(up @ np.asarray(joints["lower_spine"]))
    eff = h_neck - h_lower
    if eff < MIN_EFFECTIVE_LENGTH:
        raise ImplausibleSkeleton(
            f"effective spinal length {eff:.1f} mm < {MIN_EFFECTIVE_LENGTH} mm")

    chain = [n for n in ("head",) + SPINE_NAMES if n in joints]
    pts = [np.asarray(joints[n], dtype=np.float64) for n in chain]

    angles = {r: 0.0 for r in REGION_NAMES}
    vertex_bends = {}
    for i in range(1, len(chain) - 1):
        frac = (h_neck - float(up @ pts[i])) / eff
        region = None
        prev_edge = 0.0
        for r in REGION_NAMES:
            if prev_edge - 1e-9 <= frac <= REGION_UPPER_FRACTION[r] + 1e-9:
                region = r
                break
            prev_edge = REGION_UPPER_FRACTION[r]
        if region is None:
            continue
        bend = _bend_deg(pts[i - 1], pts[i], pts[i + 1])
        vertex_bends[chain[i]] = (region, bend)
        angles[region] = max(angles[region], bend)

    boundaries = {r: REGION_UPPER_FRACTION[r] * eff for r in REGION_NAMES}
    return SpineRegions(cervical_deg=angles["cervical"],
                        thoracic_deg=angles["thoracic"],
                        lumbar_deg=angles["lumbar"],
                        effective_length=eff,
                        boundaries=boundaries,
                        vertex_bends=vertex_bends)


def ensemble_angles(region_results, lod_names=None):
    """Fuse per-LOD region angles by nearest-to-median selection.

    Returns (SpineRegions, deviation_table).  Each table row reports the
    selected LOD and the mean absolute deviation of the candidates from
    the selected value (median strategy) and from the candidate mean
    (mean strategy).
    """
    if len(region_results) < MIN_ENSEMBLE:
        raise EnsembleTooSmall(
            f"{len(region_results)} LOD results, need >= {MIN_ENSEMBLE}")
    if lod_names is None:
        lod_names = [f"lod{i}" for i in range(len(region_results))]

    finals = {}
    table = []
    for region in REGION_NAMES:
        values = np.array([r.angle(region) for r in region_results])
        med = float(np.median(values))
        sel = int(np.argmin(np.abs(values - med)))   # tie -> higher detail
        final = float(values[sel])
        finals[region] = final
        table.append({
            "region": region,
            "selected_lod": lod_names[sel],
            "angle_deg": final,
            "median_abs_dev": float(np.mean(np.abs(values - final))),
            "mean_abs_dev": float(np.mean(np.abs(values - values.mean()))),
        })
    eff = float(np.median([r.effective_length for r in region_results]))
    boundaries = {r: REGION_UPPER_FRACTION[r] * eff for r in REGION_NAMES}
    fused = SpineRegions(cervical_deg=finals["cervical"],
                         thoracic_deg=finals["thoracic"],
                         lumbar_deg=finals["lumbar"],
                         effective_length=eff, boundaries=boundaries)
    return fused, table
