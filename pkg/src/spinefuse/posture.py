"""Posture variables and risk classification.

Six variables are computed from named body landmarks: cervical lordosis
(difference between head pitch and trunk pitch), thoracic kyphosis and
lumbar lordosis (3D joint angles at the shoulder and hip midpoints),
shoulder and pelvic levelness (line tilt against the horizontal axis),
and the sagittal vertical axis offset in centimeters.  Each value is
mapped to Normal / Caution / Danger bands; boundary values always take
the less severe class.

Landmarks live in a body-aligned frame given by a vertical unit vector v
and a horizontal (subject-right) unit vector h; the forward direction is
v x h.  Trunk and head pitches are signed positive when leaning forward.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateLandmarks

V_DEFAULT = np.array([0.0, 1.0, 0.0])
H_DEFAULT = np.array([0.0, 0.0, 1.0])

NORMAL, CAUTION, DANGER = "Normal", "Caution", "Danger"

# Table rows: variable -> (pretty name, unit, view used for the measure)
VARIABLES = (
    ("cervical", "Cervical Lordosis Angle", "deg", "Side"),
    ("thoracic", "Thoracic Kyphosis Angle", "deg", "Side"),
    ("lumbar", "Lumbar Lordosis Angle", "deg", "Front"),
    ("shoulder", "Shoulder Angle", "deg", "Front"),
    ("pelvic", "Pelvic Angle", "deg", "Side"),
    ("sva", "Sagittal Vertical Axis", "cm", "Side"),
)

_REQUIRED = ("sh_l", "sh_r", "hip_l", "hip_r", "ear", "eye_outer", "m_knee")


@dataclass
class PostureLandmarks:
    """Named points in the body frame plus the height scale for SVA."""

    points: dict
    h_pix: float
    h_real_cm: float
    v: np.ndarray = field(default_factory=lambda: V_DEFAULT.copy())
    h: np.ndarray = field(default_factory=lambda: H_DEFAULT.copy())

    def __post_init__(self):
        self.points = {k: np.asarray(p, dtype=np.float64).reshape(3)
                       for k, p in self.points.items()}
        self.v = np.asarray(self.v, dtype=np.float64).reshape(3)
        self.h = np.asarray(self.h, dtype=np.float64).reshape(3)
        self.v = self.v / np.linalg.norm(self.v)
        self.h = self.h / np.linalg.norm(self.h)
        if abs(float(self.v @ self.h)) > 1e-6:
            raise DegenerateLandmarks("v and h must be orthogonal")
        if not self.h_pix > 0:
            raise DegenerateLandmarks("h_pix must be positive")
        for name in _REQUIRED:
            if name not in self.points:
                raise DegenerateLandmarks(f"missing posture landmark {name}")
        for mid, a, b in (("m_sh", "sh_l", "sh_r"), ("m_hip", "hip_l", "hip_r")):
            want = (self.points[a] + self.points[b]) / 2.0
            if mid in self.points:
                if np.abs(self.points[mid] - want).max() > 1e-6:
                    raise DegenerateLandmarks(
                        f"{mid} is not the midpoint of {a}/{b}")
            else:
                self.points[mid] = want

    @property
    def forward(self):
        return np.cross(self.v, self.h)

    def get(self, name):
        return self.points[name]


def landmarks_from_skeleton(sk, h_real_cm, anterior, up):
    """Express a camera-frame skeleton in the body frame for analysis.

    anterior and up are the subject's forward and upward directions in
    the skeleton's frame.  Ear and eye-outer positions are averaged over
    both sides when present; if absent they fall back to the head joint
    (ear) and the head continued along neck->head (eye outer).
    """
    f = np.asarray(anterior, dtype=np.float64)
    u = np.asarray(up, dtype=np.float64)
    f = f / np.linalg.norm(f)
    u = u / np.linalg.norm(u)
    if abs(float(f @ u)) > 1e-6:
        raise DegenerateLandmarks("anterior and up must be orthogonal")
    r = np.cross(f, u)                   # subject's right
    basis = np.stack([f, u, r])          # rows: new x, y, z

    joints = sk.joints if hasattr(sk, "joints") else sk

    def bf(p):
        return basis @ np.asarray(p, dtype=np.float64)

    def mean_sides(base):
        names = [f"{s}_{base}" for s in ("left", "right") if f"{s}_{base}" in joints]
        if not names:
            return None
        return bf(np.mean([joints[n] for n in names], axis=0))

    pts = {}
    for key, name in (("sh_l", "left_shoulder"), ("sh_r", "right_shoulder"),
                      ("hip_l", "left_hip"), ("hip_r", "right_hip")):
        if name not in joints:
            raise DegenerateLandmarks(f"skeleton lacks {name}")
        pts[key] = bf(joints[name])
    for name in ("neck", "upper_spine", "middle_spine", "lower_spine", "head"):
        if name in joints:
            pts[name] = bf(joints[name])

    ear = mean_sides("ear")
    if ear is None:
        if "head" not in joints:
            raise DegenerateLandmarks("no ears and no head joint")
        ear = bf(joints["head"])
    pts["ear"] = ear
    eye = mean_sides("eye_outer")
    if eye is None:
        if "head" in pts and "neck" in pts:
            eye = pts["head"] + (pts["head"] - pts["neck"])
        else:
            raise DegenerateLandmarks("no eye-outer landmarks and no head/neck")
    pts["eye_outer"] = eye

    knee = mean_sides("knee")
    if knee is None:
        raise DegenerateLandmarks("skeleton lacks knee joints")
    pts["m_knee"] = knee

    ys = np.array([p[1] for p in pts.values()]
                  + [bf(joints[n])[1] for n in ("left_ankle", "right_ankle")
                     if n in joints])
    h_pix = float(ys.max() - ys.min())
    return PostureLandmarks(points=pts, h_pix=h_pix, h_real_cm=h_real_cm)


# ---------------------------------------------------------------------------
# Angles
# ---------------------------------------------------------------------------

@dataclass
class PostureAngles:
    """The six posture variables plus the intermediate pitches."""

    alpha: float
    beta: float
    theta_n: float
    theta_ct: float
    theta_tl: float
    theta_sh: float
    theta_pelvis: float
    sva_cm: float

    def as_dict(self):
        return {k: getattr(self, k) for k in (
            "alpha", "beta", "theta_n", "theta_ct", "theta_tl",
            "theta_sh", "theta_pelvis", "sva_cm")}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(d[k]) for k in (
            "alpha", "beta", "theta_n", "theta_ct", "theta_tl",
            "theta_sh", "theta_pelvis", "sva_cm")})


def _require_len(d, pair):
    n = np.linalg.norm(d)
    if n < 1e-9:
        raise DegenerateLandmarks(f"coincident landmarks: {pair}")
    return d / n


def _sagittal_deg(d, v, forward, pair):
    _require_len(d, pair)
    return math.degrees(math.atan2(float(d @ forward), float(d @ v)))


def _joint_deg(d1, d2, pair):
    u1 = _require_len(d1, pair)
    u2 = _require_len(d2, pair)
    return math.degrees(math.acos(float(np.clip(u1 @ u2, -1.0, 1.0))))


def _line_vs_axis_deg(d, axis, pair):
    u = _require_len(d, pair)
    c = abs(float(np.clip(u @ axis, -1.0, 1.0)))
    return math.degrees(math.acos(c))


def compute_angles(lm):
    """Evaluate the six posture variables on one landmark set."""
    p = lm.points
    fwd = lm.forward
    m_sh, m_hip = p["m_sh"], p["m_hip"]

    alpha = _sagittal_deg(m_sh - m_hip, lm.v, fwd, "m_hip/m_sh")
    beta = _sagittal_deg(p["eye_outer"] - p["ear"], lm.v, fwd, "ear/eye_outer")
    theta_n = beta - alpha
    theta_ct = _joint_deg(p["ear"] - m_sh, m_hip - m_sh, "ear/m_sh/m_hip")
    theta_tl = _joint_deg(m_sh - m_hip, p["m_knee"] - m_hip,
                          "m_sh/m_hip/m_knee")
    theta_sh = _line_vs_axis_deg(p["sh_l"] - p["sh_r"], lm.h, "sh_l/sh_r")
    theta_pelvis = _line_vs_axis_deg(p["hip_l"] - p["hip_r"], lm.h,
                                     "hip_l/hip_r")
    sva_cm = (float((p["ear"] - m_hip) @ fwd) / lm.h_pix) * lm.h_real_cm
    return PostureAngles(alpha=alpha, beta=beta, theta_n=theta_n,
                         theta_ct=theta_ct, theta_tl=theta_tl,
                         theta_sh=theta_sh, theta_pelvis=theta_pelvis,
                         sva_cm=sva_cm)


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

def _band_two_sided(v, n_lo, n_hi, c_lo, c_hi):
    """Normal inside [n_lo, n_hi]; Caution inside [c_lo, c_hi]; else Danger.

    Boundary values take the less severe class on both edges.
    """
    if n_lo <= v <= n_hi:
        return NORMAL
    if c_lo <= v <= c_hi:
        return CAUTION
    return DANGER


def _band_magnitude(v, n_hi, c_hi):
    if v <= n_hi:
        return NORMAL
    if v <= c_hi:
        return CAUTION
    return DANGER


def classify_value(variable, value):
    """Risk band for a single variable value."""
    if variable == "cervical":
        return _band_two_sided(value, 20.0, 35.0, 10.0, 45.0)
    if variable == "thoracic":
        return _band_two_sided(value, 20.0, 40.0, 15.0, 55.0)
    if variable == "lumbar":
        return _band_two_sided(value, 40.0, 60.0, 30.0, 70.0)
    if variable == "shoulder":
        return _band_magnitude(value, 2.0, 10.0)
    if variable == "pelvic":
        return _band_magnitude(value, 3.0, 10.0)
    if variable == "sva":
        return _band_magnitude(abs(value), 4.0, 6.0)
    raise KeyError(f"unknown posture variable {variable!r}")


@dataclass
class PostureReport:
    """Per-variable values and risk classes in table order."""

    rows: list

    def classification(self, variable):
        for row in self.rows:
            if row["variable"] == variable:
                return row["classification"]
        raise KeyError(variable)

    def value(self, variable):
        for row in self.rows:
            if row["variable"] == variable:
                return row["value"]
        raise KeyError(variable)

    @property
    def worst(self):
        order = {NORMAL: 0, CAUTION: 1, DANGER: 2}
        return max((row["classification"] for row in self.rows),
                   key=lambda c: order[c])

    def as_dict(self):
        return {"rows": [dict(r) for r in self.rows], "worst": self.worst}


def classify(angles):
    """Map all six variables to Table rows with risk classes."""
    values = {"cervical": angles.theta_n, "thoracic": angles.theta_ct,
              "lumbar": angles.theta_tl, "shoulder": angles.theta_sh,
              "pelvic": angles.theta_pelvis, "sva": angles.sva_cm}
    rows = []
    for variable, pretty, unit, view in VARIABLES:
        value = values[variable]
        rows.append({"variable": variable, "name": pretty, "unit": unit,
                     "view": view, "value": float(value),
                     "classification": classify_value(variable, value)})
    return PostureReport(rows=rows)


# ---------------------------------------------------------------------------
# Report document
# ---------------------------------------------------------------------------

def report(angles, posture_report=None, skeleton=None, regions=None,
           deviation_table=None):
    """Assemble the analysis document (JSON-serializable dict + text)."""
    posture_report = posture_report or classify(angles)
    doc = {
        "angles": angles.as_dict(),
        "classification": posture_report.as_dict(),
    }
    if regions is not None:
        doc["spine_regions"] = regions.as_dict() if hasattr(regions, "as_dict") else regions
    if deviation_table is not None:
        doc["deviation_table"] = deviation_table
    if skeleton is not None:
        doc["skeleton"] = skeleton.as_dict() if hasattr(skeleton, "as_dict") else skeleton

    lines = ["Posture analysis", "================"]
    for row in posture_report.rows:
        lines.append(f"{row['name']:<28} {row['value']:8.2f} {row['unit']:<3} "
                     f"[{row['view']}]  {row['classification']}")
    if regions is not None and hasattr(regions, "cervical_deg"):
        lines.append("")
        lines.append(f"Spine regions (effective length "
                     f"{regions.effective_length:.0f} mm): "
                     f"cervical {regions.cervical_deg:.1f} deg, "
                     f"thoracic {regions.thoracic_deg:.1f} deg, "
                     f"lumbar {regions.lumbar_deg:.1f} deg")
    lines.append("")
    lines.append(f"Overall: {posture_report.worst}")
    doc["text"] = "\n".join(lines)
    return doc


def emit(doc):
    return json.dumps(doc, indent=2, sort_keys=True)


def parse(text):
    return json.loads(text)


def svg_overlay(skeleton, intrinsics, report_doc=None):
    """Stick-figure overlay aligned with the frontal image pixel grid.

    Draws the spine polyline and the shoulder and pelvis lines in image
    coordinates so the SVG can be stacked on the frontal depth image.
    """
    joints = skeleton.joints if hasattr(skeleton, "joints") else {
        k: np.asarray(v) for k, v in skeleton.items()}

    def px(p):
        u = intrinsics.fx * p[0] / p[2] + intrinsics.cx
        v = intrinsics.fy * p[1] / p[2] + intrinsics.cy
        return float(u), float(v)

    def path(names, color):
        pts = [px(joints[n]) for n in names if n in joints]
        if len(pts) < 2:
            return ""
        d = " ".join(f"{u:.1f},{v:.1f}" for u, v in pts)
        return (f'<polyline points="{d}" fill="none" stroke="{color}" '
                f'stroke-width="3"/>')

    w, h = intrinsics.width, intrinsics.height
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" '
             f'height="{h}" viewBox="0 0 {w} {h}">',
             '<rect width="100%" height="100%" fill="none"/>']
    parts.append(path(("head", "neck", "upper_spine", "middle_spine",
                       "lower_spine"), "#d62728"))
    parts.append(path(("left_shoulder", "right_shoulder"), "#1f77b4"))
    parts.append(path(("left_hip", "right_hip"), "#2ca02c"))
    for name in ("head", "neck", "upper_spine", "middle_spine", "lower_spine",
                 "left_shoulder", "right_shoulder", "left_hip", "right_hip"):
        if name in joints:
            u, v = px(joints[name])
            parts.append(f'<circle cx="{u:.1f}" cy="{v:.1f}" r="4" '
                         f'fill="#ff7f0e"/>')
    if report_doc is not None and "classification" in report_doc:
        worst = report_doc["classification"].get("worst", "")
        parts.append(f'<text x="10" y="24" font-family="monospace" '
                     f'font-size="16" fill="#d62728">{worst}</text>')
    parts.append("</svg>")
    return "\n".join(p for p in parts if p)
