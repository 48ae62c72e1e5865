"""Rigid registration: RANSAC over feature matches, then ICP refinement.

Coarse alignment samples three-point correspondence hypotheses from FPFH
descriptor matches, prunes them with edge-length and distance checks, and
keeps the hypothesis with the best inlier fitness.  Fine alignment runs
iterative closest point in several flavors: classic point-to-point,
linearized point-to-plane, a rotation-clamped variant for the final touch-up,
and a translation-only variant that never turns the cloud at all.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import (ConfigError, EmptyCloud, InsufficientCorrespondences,
                     NoConsensus, NormalsRequired)
from . import cloud as cl

POINT_TO_POINT = "point_to_point"
POINT_TO_PLANE = "point_to_plane"

DEFAULT_ICP_TOL = 1e-6
DEFAULT_CORR_FACTOR = 3.0
# iterations allowed without a meaningful best-RMSE improvement before an
# ICP run is treated as stalled
ICP_STALL_LIMIT = 12
DEFAULT_NORMAL_FACTOR = 2.0
# a pair's quality reaches 0 when its matched distance equals this fraction
# of body size; 6% keeps a correctly fused rig scoring well clear of the
# 0.4 gate while a view displaced by tens of degrees lands well under it
DEFAULT_QUALITY_K = 0.06
QUALITY_THRESHOLD = 0.4


# ---------------------------------------------------------------------------
# Rigid transforms
# ---------------------------------------------------------------------------

@dataclass
class RigidTransform:
    """Rotation (3, 3) and translation (3,): maps p to R @ p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-6 or abs(np.linalg.det(self.rotation) - 1.0) > 1e-6:
            raise ValueError("rotation matrix is not orthonormal with det +1")

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, other):
        """Transform equal to applying `other` first, then self."""
        return RigidTransform(self.rotation @ other.rotation,
                             self.rotation @ other.translation + self.translation)

    def inverse(self):
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def rotation_angle_deg(self):
        return rotation_angle_deg(self.rotation)


def rotation_about_axis(axis, angle_deg):
    """Rodrigues rotation matrix about a (not necessarily unit) axis."""
    a = np.asarray(axis, dtype=np.float64).reshape(3)
    norm = np.linalg.norm(a)
    if norm < 1e-12:
        return np.eye(3)
    a = a / norm
    th = math.radians(angle_deg)
    k = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + math.sin(th) * k + (1.0 - math.cos(th)) * (k @ k)


def rotation_angle_deg(rotation):
    """Geodesic angle of a rotation matrix, in degrees."""
    tr = np.clip((np.trace(rotation) - 1.0) / 2.0, -1.0, 1.0)
    return math.degrees(math.acos(tr))


def rotation_axis(rotation):
    """Unit rotation axis; arbitrary but deterministic for tiny angles."""
    r = np.asarray(rotation, dtype=np.float64)
    skew = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    s = np.linalg.norm(skew)
    if s > 1e-9:
        return skew / s
    theta = math.radians(rotation_angle_deg(r))
    if theta < 1e-6:
        return np.array([0.0, 0.0, 1.0])
    # angle near pi: recover the axis from R + I, whose columns align with it
    m = r + np.eye(3)
    col = m[:, np.argmax(np.diag(m))]
    return col / np.linalg.norm(col)


def estimate_rigid(source_pts, target_pts):
    """Least-squares rigid transform mapping source onto target (Kabsch)."""
    p = np.asarray(source_pts, dtype=np.float64)
    q = np.asarray(target_pts, dtype=np.float64)
    cp, cq = p.mean(axis=0), q.mean(axis=0)
    h = (p - cp).T @ (q - cq)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return RigidTransform(rot, cq - rot @ cp)


def _estimate_rigid_batch(p, q):
    """Kabsch over a batch: p, q are (m, k, 3); returns (m,3,3), (m,3)."""
    cp = p.mean(axis=1, keepdims=True)
    cq = q.mean(axis=1, keepdims=True)
    h = np.einsum("mki,mkj->mij", p - cp, q - cq)
    u, _, vt = np.linalg.svd(h)
    det = np.linalg.det(np.einsum("mij,mkj->mik", vt.transpose(0, 2, 1), u))
    fix = np.tile(np.eye(3), (len(p), 1, 1))
    fix[:, 2, 2] = np.sign(det)
    rot = np.einsum("mij,mjk,mlk->mil", vt.transpose(0, 2, 1), fix, u)
    t = cq[:, 0, :] - np.einsum("mij,mj->mi", rot, cp[:, 0, :])
    return rot, t


# ---------------------------------------------------------------------------
# Result container and evaluation
# ---------------------------------------------------------------------------

@dataclass
class RegistrationResult:
    """Outcome of one registration call.

    fitness is the fraction of source points with a target neighbor within
    the evaluation distance; inlier_rmse is over those inliers only and is
    +inf (with the non_convergent flag) when there are none.
    """

    transform: RigidTransform
    fitness: float
    inlier_rmse: float
    n_correspondences: int
    converged: bool
    iterations: int = 0
    rmse_history: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    flags: list = field(default_factory=list)


def evaluate(source, target, transform, max_corr_dist):
    """(fitness, inlier_rmse, n_inliers) of source aligned onto target."""
    src = source.points if isinstance(source, cl.PointCloud) else np.asarray(source)
    tgt = target.points if isinstance(target, cl.PointCloud) else np.asarray(target)
    if len(src) == 0 or len(tgt) == 0:
        raise EmptyCloud("evaluate needs non-empty clouds")
    tree = cKDTree(tgt)
    d, _ = tree.query(transform.apply(src), distance_upper_bound=max_corr_dist)
    inlier = np.isfinite(d)
    n = int(inlier.sum())
    if n == 0:
        return 0.0, float("inf"), 0
    rmse = float(np.sqrt(np.mean(d[inlier] ** 2)))
    return n / len(src), rmse, n


# ---------------------------------------------------------------------------
# ICP
# ---------------------------------------------------------------------------

def _solve_point_to_plane(src, tgt, nrm):
    """One Gauss-Newton step of the linearized point-to-plane objective."""
    r = np.einsum("ij,ij->i", src - tgt, nrm)
    jac = np.hstack([np.cross(src, nrm), nrm])
    jtj = jac.T @ jac
    jtr = jac.T @ r
    try:
        x = np.linalg.solve(jtj, -jtr)
    except np.linalg.LinAlgError:
        x = np.linalg.lstsq(jtj, -jtr, rcond=None)[0]
    omega, t = x[:3], x[3:]
    angle = np.linalg.norm(omega)
    rot = rotation_about_axis(omega, math.degrees(angle)) if angle > 0 else np.eye(3)
    return RigidTransform(rot, t)


def _icp_loop(src_pts, tgt_pts, tgt_nrm, tree, init, variant, max_corr_dist,
              iterations, tol, rotation_cap_deg=None, freeze_rotation=False):
    """Shared ICP iteration with best-so-far tracking.

    Returns (transform, rmse_history, non_convergent).  The measured inlier
    RMSE can wobble as the correspondence set re-pairs, so each history
    entry is the running best and the returned transform is the one that
    achieved it; the history is non-increasing by construction.  Iteration
    stops at the cap or when consecutive measurements differ by less than
    tol relative.
    """
    T = init
    T_ref = init          # rotation reference for the clamp / freeze
    history = []
    best = None           # (rmse, transform)
    prev_rmse = None
    stall = 0
    for _ in range(iterations):
        src_t = T.apply(src_pts)
        d, idx = tree.query(src_t, distance_upper_bound=max_corr_dist)
        inlier = np.isfinite(d)
        if not inlier.any():
            return (best[1] if best is not None else T), history, True
        rmse = float(np.sqrt(np.mean(d[inlier] ** 2)))
        if best is None:
            best = (rmse, T)
        elif rmse < best[0]:
            if best[0] - rmse >= tol * max(best[0], 1e-12):
                stall = 0
            else:
                stall += 1
            best = (rmse, T)
        else:
            stall += 1
        history.append(best[0])
        if stall >= ICP_STALL_LIMIT:
            break
        if prev_rmse is not None and abs(prev_rmse - rmse) < tol * max(
                prev_rmse, 1e-12):
            break
        prev_rmse = rmse
        s = src_t[inlier]
        q = tgt_pts[idx[inlier]]
        if freeze_rotation:
            step = RigidTransform(np.eye(3), (q - s).mean(axis=0))
        elif variant == POINT_TO_PLANE:
            step = _solve_point_to_plane(s, q, tgt_nrm[idx[inlier]])
        else:
            step = estimate_rigid(s, q)
        T = step.compose(T)
        if rotation_cap_deg is not None:
            delta = T.compose(T_ref.inverse())
            angle = delta.rotation_angle_deg()
            if angle > rotation_cap_deg:
                clamped = rotation_about_axis(rotation_axis(delta.rotation),
                                              rotation_cap_deg)
                delta = RigidTransform(clamped, delta.translation)
                T = delta.compose(T_ref)
    return (best[1] if best is not None else T), history, False


def _prepare_target(target, variant):
    if variant == POINT_TO_PLANE and target.normals is None:
        raise NormalsRequired("point-to-plane ICP needs target normals")
    return cKDTree(target.points)


def icp(source, target, max_corr_dist, init=None, variant=POINT_TO_PLANE,
        iterations=50, tol=DEFAULT_ICP_TOL):
    """Single-scale ICP between two clouds.

    Zero correspondences at any iteration yields a flagged non-convergent
    result (fitness 0, infinite RMSE) rather than an exception.
    """
    if variant not in (POINT_TO_POINT, POINT_TO_PLANE):
        raise ConfigError(f"unknown ICP variant {variant!r}")
    if len(source) == 0 or len(target) == 0:
        raise EmptyCloud("ICP needs non-empty clouds")
    tree = _prepare_target(target, variant)
    T0 = init or RigidTransform.identity()
    nrm = target.normals if variant == POINT_TO_PLANE else None
    T, history, dead = _icp_loop(source.points, target.points, nrm, tree, T0,
                                 variant, max_corr_dist, iterations, tol)
    return _finish(source, target, T, max_corr_dist, history, dead)


def _finish(source, target, T, max_corr_dist, history, dead, stages=None):
    if dead:
        return RegistrationResult(T, 0.0, float("inf"), 0, False,
                                  iterations=len(history), rmse_history=history,
                                  stages=stages or [], flags=["non_convergent"])
    fit, rmse, n = evaluate(source, target, T, max_corr_dist)
    return RegistrationResult(T, fit, rmse, n, True, iterations=len(history),
                              rmse_history=history, stages=stages or [])


def _broadcast_iterations(voxels, iterations):
    if len(iterations) >= len(voxels):
        return list(iterations[: len(voxels)])
    return list(iterations) + [iterations[-1]] * (len(voxels) - len(iterations))


def multiscale_icp(source, target, voxels, iterations, init=None,
                   variant=POINT_TO_PLANE, corr_factor=DEFAULT_CORR_FACTOR,
                   normal_factor=DEFAULT_NORMAL_FACTOR, normal_max_nn=30,
                   tol=DEFAULT_ICP_TOL):
    """Coarse-to-fine ICP over a decreasing voxel schedule.

    Each scale re-downsamples both clouds, re-estimates target normals with
    radius normal_factor * voxel, and runs ICP with correspondence distance
    corr_factor * voxel, warm-starting from the previous scale.
    """
    if not voxels:
        raise ConfigError("multiscale ICP needs at least one voxel scale")
    if any(voxels[i] <= voxels[i + 1] for i in range(len(voxels) - 1)):
        raise ConfigError("voxel schedule must strictly decrease")
    iters = _broadcast_iterations(voxels, iterations)
    T = init or RigidTransform.identity()
    stages = []
    history_all = []
    for voxel, n_it in zip(voxels, iters):
        src_ds = cl.voxel_downsample(source, voxel)
        tgt_ds = cl.voxel_downsample(target, voxel)
        if variant == POINT_TO_PLANE:
            orient = "prior" if tgt_ds.normals is not None else "origin"
            tgt_ds = cl.estimate_normals(tgt_ds, radius=normal_factor * voxel,
                                         max_nn=normal_max_nn, orient=orient)
        res = icp(src_ds, tgt_ds, max_corr_dist=corr_factor * voxel, init=T,
                  variant=variant, iterations=n_it, tol=tol)
        stages.append({"voxel": voxel, "iterations": res.iterations,
                       "fitness": res.fitness, "rmse": res.inlier_rmse})
        history_all.extend(res.rmse_history)
        if "non_convergent" in res.flags:
            res.stages = stages
            return res
        T = res.transform
    fit, rmse, n = evaluate(
        cl.voxel_downsample(source, voxels[-1]),
        cl.voxel_downsample(target, voxels[-1]),
        T, corr_factor * voxels[-1])
    return RegistrationResult(T, fit, rmse, n, True, iterations=len(history_all),
                              rmse_history=history_all, stages=stages)


def small_rotation_icp(source, target, max_corr_dist, angle_caps=(2.0, 1.0, 0.5),
                       iterations=(30, 30, 60), init=None, variant=None,
                       tol=DEFAULT_ICP_TOL):
    """Staged ICP where each stage's net rotation is clamped to a cap.

    The clamp preserves the rotation axis and saturates the angle relative
    to the stage's starting pose, so a stage can never turn the cloud more
    than its cap.
    """
    if len(angle_caps) != len(iterations):
        raise ConfigError("angle_caps and iterations must pair up")
    if len(source) == 0 or len(target) == 0:
        raise EmptyCloud("ICP needs non-empty clouds")
    if variant is None:
        variant = POINT_TO_PLANE if target.normals is not None else POINT_TO_POINT
    tree = _prepare_target(target, variant)
    nrm = target.normals if variant == POINT_TO_PLANE else None
    T = init or RigidTransform.identity()
    stages = []
    history_all = []
    dead = False
    for cap, n_it in zip(angle_caps, iterations):
        start = T
        T, history, dead = _icp_loop(source.points, target.points, nrm, tree, T,
                                     variant, max_corr_dist, n_it, tol,
                                     rotation_cap_deg=cap)
        applied = T.compose(start.inverse()).rotation_angle_deg()
        stages.append({"cap_deg": cap, "applied_deg": applied,
                       "iterations": len(history)})
        history_all.extend(history)
        if dead:
            break
    return _finish(source, target, T, max_corr_dist, history_all, dead, stages)


def translation_only_icp(source, target, max_corr_dist=None, iterations=(20, 20, 30),
                         init=None, tol=DEFAULT_ICP_TOL, dist_factor=1.5,
                         voxel=None):
    """Staged ICP that only ever shifts the cloud; rotation stays at init.

    The correspondence gate is either given directly (max_corr_dist) or as
    dist_factor * voxel.
    """
    if max_corr_dist is None:
        if voxel is None:
            raise ConfigError("give max_corr_dist or a voxel to scale dist_factor")
        max_corr_dist = dist_factor * voxel
    if len(source) == 0 or len(target) == 0:
        raise EmptyCloud("ICP needs non-empty clouds")
    tree = cKDTree(target.points)
    T = init or RigidTransform.identity()
    rot_before = T.rotation.copy()
    stages = []
    history_all = []
    dead = False
    for n_it in iterations:
        T, history, dead = _icp_loop(source.points, target.points, None, tree, T,
                                     POINT_TO_POINT, max_corr_dist, n_it, tol,
                                     freeze_rotation=True)
        stages.append({"iterations": len(history)})
        history_all.extend(history)
        if dead:
            break
    assert np.allclose(T.rotation, rot_before)
    return _finish(source, target, T, max_corr_dist, history_all, dead, stages)


# ---------------------------------------------------------------------------
# Global registration
# ---------------------------------------------------------------------------

@dataclass
class RansacParams:
    """Knobs for feature-based global registration.

    The correspondence gate is expressed as a multiple of the working voxel
    size so one parameter set scales across resolutions.
    """

    voxel: float
    max_iterations: int = 50000
    max_corr_dist_factor: float = 2.5
    edge_similarity: float = 0.9
    min_correspondences: int = 3
    confidence: float = 0.95
    fitness_early_stop: float = 0.92
    rotation_limit_deg: float | None = None
    mutual_filter: bool = True
    seed: int = 0
    batch: int = 512
    eval_sample: int = 1000

    def __post_init__(self):
        if self.voxel <= 0:
            raise ConfigError("voxel must be positive")
        if self.max_iterations <= 0:
            raise ConfigError("max_iterations must be positive")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must lie in (0, 1)")

    @property
    def max_corr_dist(self):
        return self.max_corr_dist_factor * self.voxel


def match_features(source_features, target_features, mutual=True):
    """Nearest-descriptor correspondences, optionally mutual-filtered.

    Accepts FpfhSet or raw arrays; isolated points (all-zero descriptors)
    never participate.  Returns an (M, 2) array of (source, target) indices.
    """
    fs, keep_s = _feature_block(source_features)
    ft, keep_t = _feature_block(target_features)
    if keep_s.sum() == 0 or keep_t.sum() == 0:
        return np.empty((0, 2), dtype=np.int64)
    is_, it_ = np.nonzero(keep_s)[0], np.nonzero(keep_t)[0]
    tree_t = cKDTree(ft[keep_t])
    _, jj = tree_t.query(fs[keep_s])
    pairs = np.column_stack([is_, it_[jj]])
    if mutual:
        tree_s = cKDTree(fs[keep_s])
        _, back = tree_s.query(ft[keep_t])
        keep = is_[back[jj]] == pairs[:, 0]
        pairs = pairs[keep]
    return pairs


def _feature_block(features):
    if hasattr(features, "features"):
        return features.features, features.has_neighbors.astype(bool)
    arr = np.asarray(features, dtype=np.float64)
    return arr, np.abs(arr).sum(axis=1) > 0


def ransac_global(source, target, source_features, target_features, params):
    """Three-point RANSAC over descriptor matches.

    Hypotheses are pruned by an edge-length similarity check (both triangles
    must agree within the edge_similarity ratio), an optional rotation-angle
    limit, and a final check that the three correspondences themselves align
    within max_corr_dist.  Survivors are scored by inlier fitness on a seeded
    subsample; ties prefer lower RMSE, then the earlier hypothesis.
    """
    pairs = match_features(source_features, target_features, params.mutual_filter)
    if len(pairs) < params.min_correspondences:
        raise InsufficientCorrespondences(
            f"{len(pairs)} correspondences, need >= {params.min_correspondences}")
    src_pts = source.points
    tgt_pts = target.points
    tree = cKDTree(tgt_pts)
    eval_cloud = cl.uniform_sample(source, params.eval_sample, seed=params.seed)
    eval_pts = eval_cloud.points

    rng = np.random.default_rng(params.seed)
    best = None         # (neg fitness, rmse, hyp index, transform)
    examined = 0
    needed = params.max_iterations
    stop = False
    for start in range(0, params.max_iterations, params.batch):
        m = min(params.batch, params.max_iterations - start)
        draw = rng.integers(0, len(pairs), size=(m, 3))
        examined += m
        ok = ((draw[:, 0] != draw[:, 1]) & (draw[:, 0] != draw[:, 2])
              & (draw[:, 1] != draw[:, 2]))
        hyp_index = start + np.nonzero(ok)[0]
        tri = pairs[draw[ok]]                       # (h, 3, 2)
        a = src_pts[tri[:, :, 0]]                   # (h, 3, 3)
        b = tgt_pts[tri[:, :, 1]]
        ea = np.linalg.norm(a - np.roll(a, 1, axis=1), axis=2)
        eb = np.linalg.norm(b - np.roll(b, 1, axis=1), axis=2)
        ratio = params.edge_similarity
        good = ((ea > 1e-9) & (eb > 1e-9)
                & (ea > ratio * eb) & (eb > ratio * ea)).all(axis=1)
        if not good.any():
            if examined >= needed:
                break
            continue
        a, b, hyp_index = a[good], b[good], hyp_index[good]
        rot, t = _estimate_rigid_batch(a, b)
        if params.rotation_limit_deg is not None:
            tr = np.clip((np.einsum("mii->m", rot) - 1.0) / 2.0, -1.0, 1.0)
            within = np.degrees(np.arccos(tr)) <= params.rotation_limit_deg
            a, b, rot, t, hyp_index = (a[within], b[within], rot[within],
                                       t[within], hyp_index[within])
        if len(rot):
            moved = np.einsum("mij,mkj->mki", rot, a) + t[:, None, :]
            close = (np.linalg.norm(moved - b, axis=2) <= params.max_corr_dist)
            survivors = close.all(axis=1)
        else:
            survivors = np.zeros(0, dtype=bool)
        for row in np.nonzero(survivors)[0]:
            T = RigidTransform(rot[row], t[row])
            d, _ = tree.query(T.apply(eval_pts),
                              distance_upper_bound=params.max_corr_dist)
            inl = np.isfinite(d)
            fit = inl.sum() / len(eval_pts)
            rmse = float(np.sqrt(np.mean(d[inl] ** 2))) if inl.any() else float("inf")
            key = (-fit, rmse, int(hyp_index[row]))
            if best is None or key < best[0]:
                best = (key, T)
                if fit > 0:
                    denom = math.log(max(1.0 - fit ** 3, 1e-12))
                    needed = min(params.max_iterations,
                                 math.log(max(1.0 - params.confidence, 1e-12)) / denom)
            if fit >= params.fitness_early_stop:
                stop = True
                break
        if stop or examined >= needed:
            break
    if best is None:
        raise NoConsensus("no RANSAC hypothesis survived the validation checks")
    T = best[1]
    fit, rmse, n = evaluate(source, target, T, params.max_corr_dist)
    return RegistrationResult(T, fit, rmse, n, True, iterations=examined)


# ---------------------------------------------------------------------------
# Alignment quality feedback
# ---------------------------------------------------------------------------

@dataclass
class AlignmentQuality:
    """Fused-view consistency score in [0, 1] with per-pair detail."""

    score: float
    pair_scores: dict
    pair_mean_nn: dict
    body_size: float
    pair_overlap: dict = field(default_factory=dict)

    def passes(self, threshold=QUALITY_THRESHOLD):
        return self.score >= threshold


# a view pair whose samples almost never find a surface-consistent
# neighbor on the other side shares no measurable overlap
MIN_PAIR_OVERLAP = 0.02
# two samples of the same surface patch agree in normal direction to a few
# degrees (staging residual plus estimation noise); a patch that merely
# slid onto a different region of the curved body disagrees by tens
PAIR_NORMAL_COS = math.cos(math.radians(30.0))


def _pair_match(src, dst, tree):
    """Distances of surface-consistent nearest-neighbor matches.

    A match only counts as overlap evidence when the two normals agree
    within PAIR_NORMAL_COS: two sheets can also be close by
    interpenetrating or by sliding onto the wrong region, and that
    closeness must not raise the score.  Without normals on both sides
    every match counts.
    """
    d, idx = tree.query(src.points)
    if src.normals is None or dst.normals is None:
        return d
    agree = np.einsum("ij,ij->i", src.normals,
                      dst.normals[idx]) > PAIR_NORMAL_COS
    return d[agree]


def assess_alignment_quality(aligned_views, body_size=None, k=DEFAULT_QUALITY_K,
                             sample_n=2000, seed=0, skip_pairs=None):
    """Score geometric consistency of aligned views.

    Per view pair, seeded samples from each side are matched to their
    nearest neighbor on the other side, keeping surface-consistent matches
    (see _pair_match); the pair's mean matched distance maps to quality
    clamp(1 - mean_nn / (k * body_size), 0, 1), and a pair where fewer
    than MIN_PAIR_OVERLAP of the samples find a consistent neighbor has no
    measurable overlap and scores 0.  The total score is the mean over
    scored pairs.  body_size defaults to the largest bounding-box edge of
    the union.

    skip_pairs lists (i, j) index pairs into aligned_views to leave out of
    the score; use it when the capture geometry already guarantees two
    views share no surface.  Pair keys in the result always use the
    caller's view indices.
    """
    keep = [i for i, v in enumerate(aligned_views) if len(v)]
    if len(keep) < len(aligned_views):
        warnings.warn("quality assessment skipped "
                      f"{len(aligned_views) - len(keep)} empty view(s)")
    if len(keep) < 2:
        raise EmptyCloud("quality assessment needs at least two non-empty views")
    skip = {tuple(sorted(p)) for p in (skip_pairs or ())}
    if body_size is None:
        allpts = np.vstack([aligned_views[i].points for i in keep])
        body_size = float((allpts.max(axis=0) - allpts.min(axis=0)).max())
    samples = {i: cl.uniform_sample(aligned_views[i], sample_n, seed=seed + i)
               for i in keep}
    trees = {i: cKDTree(samples[i].points) for i in keep}
    pair_scores = {}
    pair_nn = {}
    pair_overlap = {}
    for a in range(len(keep)):
        for b in range(a + 1, len(keep)):
            i, j = keep[a], keep[b]
            if (i, j) in skip:
                continue
            d_ij = _pair_match(samples[i], samples[j], trees[j])
            d_ji = _pair_match(samples[j], samples[i], trees[i])
            matched = np.concatenate([d_ij, d_ji])
            total = len(samples[i]) + len(samples[j])
            frac = len(matched) / total
            mean_nn = float(matched.mean()) if len(matched) else float("inf")
            if frac < MIN_PAIR_OVERLAP:
                q = 0.0
            else:
                q = float(np.clip(1.0 - mean_nn / (k * body_size), 0.0, 1.0))
            pair_scores[(i, j)] = q
            pair_nn[(i, j)] = mean_nn
            pair_overlap[(i, j)] = frac
    if not pair_scores:
        raise ConfigError("skip_pairs left no view pairs to score")
    score = float(np.mean(list(pair_scores.values())))
    return AlignmentQuality(score, pair_scores, pair_nn, body_size,
                            pair_overlap)
