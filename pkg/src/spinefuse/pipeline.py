"""Four-view reconstruction: staging, coarse-to-fine alignment, fusion.

Views are assumed captured on a turntable rig: cameras at known yaw
angles around the subject's vertical axis, all at the same distance.
Each view is pre-rotated to its nominal rig pose so the registration
stages only search the small residual (mount error, subject sway).
The first view in the configured order is the fixed reference; every
later view registers against the union of the already-aligned clouds,
then a quality gate at the configured threshold decides whether the
adaptive refinement loop reruns alignment with relaxed settings.
"""

import json
import time
import warnings

import numpy as np
from dataclasses import dataclass, field

from . import cloud as cl
from . import depthmap as dm
from . import fpfh
from .config import ReconstructionConfig, default_config
from .errors import (EmptyCloud, InsufficientCorrespondences, NoConsensus)
from .register import (POINT_TO_PLANE, POINT_TO_POINT, RansacParams,
                       RegistrationResult, RigidTransform,
                       assess_alignment_quality, multiscale_icp,
                       ransac_global, rotation_about_axis,
                       small_rotation_icp, translation_only_icp)

# largest mean point displacement a trustworthy global init may apply to a
# staged view; the rig stages views to within ~2 deg / 20 mm, which moves
# body points at most a few tens of millimetres
STAGING_ENVELOPE_MM = 80.0


def rig_extrinsic(yaw_deg, rig_distance):
    """Ideal camera pose on the rig: yaw about the subject's vertical axis."""
    rot = rotation_about_axis(np.array([0.0, 1.0, 0.0]), yaw_deg)
    return RigidTransform(rot, np.array([0.0, 0.0, rig_distance]))


def nominal_transform(yaw_deg, rig_distance):
    """Ideal view-camera -> reference-camera transform for a rig yaw."""
    front = rig_extrinsic(0.0, rig_distance)
    view = rig_extrinsic(yaw_deg, rig_distance)
    return front.compose(view.inverse())


@dataclass
class FusedResult:
    """Everything the downstream meshing and reporting stages need."""

    merged: cl.PointCloud
    per_view: dict
    quality_score: float
    elapsed: dict
    aligned: dict
    view_order: tuple
    refinement_rounds_used: int = 0
    flags: list = field(default_factory=list)
    log_lines: list = field(default_factory=list)

    def transform_dict(self):
        return {name: res.transform.as_matrix().tolist()
                for name, res in sorted(self.per_view.items())}


class _StageClock:
    def __init__(self):
        self.elapsed = {}
        self.logs = []

    def log(self, stage, seconds, voxel=None, iterations=None, fitness=None,
            rmse=None):
        self.elapsed[stage] = self.elapsed.get(stage, 0.0) + seconds
        entry = {"stage": stage, "voxel": voxel, "iterations": iterations,
                 "fitness": fitness,
                 "rmse": None if rmse is None or not np.isfinite(rmse)
                 else rmse,
                 "seconds": round(seconds, 6)}
        self.logs.append(json.dumps(entry, sort_keys=True))


def _preprocess_view(name, values, cfg, user_mask=None):
    mask = dm.build_mask(values, lo=cfg.mask.low, hi=cfg.mask.high)
    mask = dm.refine_mask(mask, radius=cfg.mask.morph_radius)
    if user_mask is not None:
        mask = dm.combine_masks(mask, user_mask)
    try:
        pc = cl.backproject(values, mask, cfg.camera,
                            step=cfg.backproject_step,
                            depth_scale=cfg.depth_scale)
    except EmptyCloud as exc:
        raise EmptyCloud(f"view {name!r}: {exc}") from exc
    return pc


def _estimate_view_normals(pc, max_nn=30):
    """Full-resolution normals with a spacing-adaptive radius."""
    index = cl.SpatialIndex(pc.points)
    k = min(2, len(pc))
    d, _ = index.knn(pc.points, k=k)
    spacing = float(d[:, -1].mean()) if k == 2 else 1.0
    return cl.estimate_normals(pc, radius=3.0 * spacing, max_nn=max_nn,
                               orient="origin")


def _register_one(source, union, view_cfg, seed, clock, stage_tag,
                  ransac_scale=1, rotation_limit_override=None,
                  icp_variant=POINT_TO_PLANE):
    """Global + three fine stages for one view against the union."""
    flags = []
    stages = []

    t0 = time.perf_counter()
    voxel = view_cfg.coarse_voxel
    init = RigidTransform.identity()
    g_fit = g_rmse = None
    try:
        src_ds = cl.voxel_downsample(source, voxel)
        tgt_ds = cl.voxel_downsample(union, voxel)
        src_ds = cl.estimate_normals(
            src_ds, radius=view_cfg.normal_radius_factor * voxel,
            max_nn=view_cfg.normal_max_nn, orient="prior")
        tgt_ds = cl.estimate_normals(
            tgt_ds, radius=view_cfg.normal_radius_factor * voxel,
            max_nn=view_cfg.normal_max_nn, orient="prior")
        feat_radius = view_cfg.feature_radius_factor * voxel
        f_src = fpfh.compute_fpfh(src_ds, radius=feat_radius)
        f_tgt = fpfh.compute_fpfh(tgt_ds, radius=feat_radius)
        params = RansacParams(
            voxel=voxel,
            max_iterations=int(view_cfg.ransac_iterations * ransac_scale),
            rotation_limit_deg=(rotation_limit_override
                                if rotation_limit_override is not None
                                else view_cfg.rotation_limit_deg),
            seed=seed)
        g = ransac_global(src_ds, tgt_ds, f_src, f_tgt, params)
        if rotation_limit_override is None:
            # staged views start within the rig's perturbation envelope, so
            # a global init that moves points further than it is a feature
            # mismatch, not a correction
            disp = float(np.linalg.norm(
                g.transform.apply(src_ds.points) - src_ds.points,
                axis=1).mean())
            if disp > STAGING_ENVELOPE_MM:
                flags.append("global_rejected")
                stages.append({"stage": "global", "fitness": g.fitness,
                               "rmse": g.inlier_rmse,
                               "rejected_displacement": disp})
                g = None
        if g is not None:
            init = g.transform
            g_fit, g_rmse = g.fitness, g.inlier_rmse
            stages.append({"stage": "global", "fitness": g.fitness,
                           "rmse": g.inlier_rmse})
    except (InsufficientCorrespondences, NoConsensus) as exc:
        flags.append("global_failed")
        stages.append({"stage": "global", "error": str(exc)})
    clock.log(f"global:{stage_tag}", time.perf_counter() - t0, voxel=voxel,
              iterations=int(view_cfg.ransac_iterations * ransac_scale),
              fitness=g_fit, rmse=g_rmse)

    t0 = time.perf_counter()
    finest = min(view_cfg.icp_voxels)
    res = multiscale_icp(source, union, voxels=list(view_cfg.icp_voxels),
                         iterations=list(view_cfg.icp_iterations),
                         init=init, variant=icp_variant,
                         normal_factor=view_cfg.normal_radius_factor,
                         normal_max_nn=view_cfg.normal_max_nn)
    stages.extend({"stage": "multiscale", **s} for s in res.stages)
    flags.extend(f for f in res.flags if f not in flags)
    clock.log(f"icp:{stage_tag}", time.perf_counter() - t0,
              voxel=finest, iterations=res.iterations,
              fitness=res.fitness, rmse=res.inlier_rmse)

    t0 = time.perf_counter()
    polish = view_cfg.polish_voxel
    sr_variant = icp_variant if union.normals is not None else POINT_TO_POINT
    res_sr = small_rotation_icp(
        source, union, max_corr_dist=3.0 * polish,
        angle_caps=view_cfg.small_rotation_caps_deg,
        iterations=view_cfg.small_rotation_iterations,
        init=res.transform, variant=sr_variant)
    stages.extend({"stage": "small_rotation", **s} for s in res_sr.stages)
    flags.extend(f for f in res_sr.flags if f not in flags)

    res_tr = translation_only_icp(
        source, union, voxel=polish,
        dist_factor=view_cfg.translation_dist_factor,
        iterations=view_cfg.translation_iterations, init=res_sr.transform)
    stages.extend({"stage": "translation", **s} for s in res_tr.stages)
    flags.extend(f for f in res_tr.flags if f not in flags)
    clock.log(f"polish:{stage_tag}", time.perf_counter() - t0, voxel=polish,
              iterations=res_sr.iterations + res_tr.iterations,
              fitness=res_tr.fitness, rmse=res_tr.inlier_rmse)

    return RegistrationResult(
        transform=res_tr.transform, fitness=res_tr.fitness,
        inlier_rmse=res_tr.inlier_rmse,
        n_correspondences=res_tr.n_correspondences,
        converged=res_tr.converged,
        iterations=res.iterations + res_sr.iterations + res_tr.iterations,
        stages=stages, flags=flags)


def _align_views(staged, nominals, cfg, clock, ransac_scale=1,
                 rotation_limit_override=None, widen_views=None,
                 icp_variant=POINT_TO_PLANE, seed_offset=0):
    order = cfg.view_order
    reference = order[0]
    aligned = {reference: staged[reference].copy()}
    per_view = {reference: RegistrationResult(
        transform=nominals[reference], fitness=1.0, inlier_rmse=0.0,
        n_correspondences=len(staged[reference]), converged=True,
        flags=["reference"])}
    for idx, name in enumerate(order[1:], start=1):
        union = cl.concatenate([aligned[v] for v in order[:idx]
                                if v in aligned])
        override = rotation_limit_override
        if override is not None and widen_views is not None \
                and name not in widen_views:
            override = None
        delta = _register_one(
            staged[name], union, cfg.views[name],
            seed=cfg.seed + seed_offset + idx, clock=clock, stage_tag=name,
            ransac_scale=ransac_scale,
            rotation_limit_override=override,
            icp_variant=icp_variant)
        aligned[name] = staged[name].transformed(delta.transform.rotation,
                                                 delta.transform.translation)
        full = delta.transform.compose(nominals[name])
        per_view[name] = RegistrationResult(
            transform=full, fitness=delta.fitness,
            inlier_rmse=delta.inlier_rmse,
            n_correspondences=delta.n_correspondences,
            converged=delta.converged, iterations=delta.iterations,
            stages=delta.stages, flags=delta.flags)
    return aligned, per_view


def _opposed_pairs(cfg):
    """Index pairs of views mounted back-to-back on the rig.

    Views whose rig yaws differ by 180 degrees image disjoint halves of
    the body, so the distance between their clouds carries no alignment
    signal; worse, a misregistration that drives one into the other reads
    as closeness.  Those pairs are excluded from the quality score.
    """
    order = cfg.view_order
    skip = set()
    for i in range(len(order)):
        for j in range(i + 1, len(order)):
            diff = abs(cfg.rig_yaw_deg[order[i]]
                       - cfg.rig_yaw_deg[order[j]]) % 360.0
            if abs(diff - 180.0) < 1e-9:
                skip.add((i, j))
    return skip


def _score(aligned, cfg, order):
    return assess_alignment_quality([aligned[v] for v in order],
                                    k=cfg.quality_k, seed=cfg.seed,
                                    skip_pairs=_opposed_pairs(cfg))


# a pair of correctly placed views scores well above this even when the two
# barely overlap; a view misplaced badly enough to trip the gate drags all
# of its pairs under it
PAIR_SUSPECT_THRESHOLD = 0.4


def _suspect_views(quality, order):
    """Views whose every pair score sits below the per-pair gate.

    A well-placed view keeps at least one strong pair (its neighbors on the
    rig), so a view whose best pair is still weak is the one to re-search.
    The reference view never moves and is never a suspect.
    """
    best = {name: 0.0 for name in order}
    for (i, j), q in quality.pair_scores.items():
        best[order[i]] = max(best[order[i]], q)
        best[order[j]] = max(best[order[j]], q)
    return {name for name in order[1:] if best[name] < PAIR_SUSPECT_THRESHOLD}


def apply_adaptive_refinement(staged, nominals, cfg, baseline, clock=None):
    """Rerun alignment with escalated settings until the gate passes.

    baseline is the (aligned, per_view, quality) triple that scored below
    the threshold.  Each round doubles the RANSAC budget again and widens
    the rotation search to refine_rotation_limit_deg, but only for the
    views the pair scores implicate; the other views keep the narrow
    search so an already-good placement cannot wander off.  An unlimited
    search is never used because it collapses onto the body's left-right
    symmetry, and for the same reason a round is discarded outright when
    any view comes back rotated by the full widened limit or more.  The
    second round switches the fine stage to point-to-point.  Returns the
    best-scoring attempt; never raises.
    """
    clock = clock or _StageClock()
    best_aligned, best_per_view, best_quality = baseline
    suspects = _suspect_views(best_quality, cfg.view_order)
    rounds_used = 0
    for rnd in range(1, cfg.refinement_rounds + 1):
        rounds_used = rnd
        variant = POINT_TO_PLANE if rnd == 1 else POINT_TO_POINT
        t0 = time.perf_counter()
        try:
            aligned, per_view = _align_views(
                staged, nominals, cfg, clock, ransac_scale=2 * rnd,
                rotation_limit_override=cfg.refine_rotation_limit_deg,
                widen_views=suspects or None,
                icp_variant=variant,
                seed_offset=1000 * rnd)
            quality = _score(aligned, cfg, cfg.view_order)
        except Exception as exc:   # contract: refinement never raises
            warnings.warn(f"refinement round {rnd} failed: {exc}")
            clock.log(f"refine:{rnd}", time.perf_counter() - t0)
            continue
        clock.log(f"refine:{rnd}", time.perf_counter() - t0,
                  fitness=quality.score)
        deltas = [per_view[name].transform.compose(nominals[name].inverse())
                  for name in cfg.view_order[1:]]
        if any(d.rotation_angle_deg() >= cfg.refine_rotation_limit_deg
               for d in deltas):
            continue
        if quality.score > best_quality.score:
            best_aligned, best_per_view, best_quality = (aligned, per_view,
                                                         quality)
            suspects = _suspect_views(best_quality, cfg.view_order)
        if best_quality.score >= cfg.quality_threshold:
            break
    return best_aligned, best_per_view, best_quality, rounds_used


def reconstruct(depths, cfg=None, masks=None):
    """Fuse four depth views into one cloud in the reference frame.

    depths maps view name (front/left/right/back) to a unit-range depth
    image; masks optionally maps view name to a boolean foreground mask
    combined with the computed one.
    """
    cfg = cfg or default_config()
    if not isinstance(cfg, ReconstructionConfig):
        raise TypeError("cfg must be a ReconstructionConfig")
    missing = [v for v in cfg.view_order if v not in depths]
    if missing:
        raise EmptyCloud(f"missing views: {missing}")
    masks = masks or {}
    clock = _StageClock()
    t_start = time.perf_counter()

    staged = {}
    nominals = {}
    for name in cfg.view_order:
        t0 = time.perf_counter()
        pc = _preprocess_view(name, depths[name], cfg, masks.get(name))
        clock.log(f"preprocess:{name}", time.perf_counter() - t0)

        t0 = time.perf_counter()
        pc = _estimate_view_normals(pc)
        nominal = nominal_transform(cfg.rig_yaw_deg[name], cfg.rig_distance)
        staged[name] = pc.transformed(nominal.rotation, nominal.translation)
        nominals[name] = nominal
        clock.log(f"normals:{name}", time.perf_counter() - t0)

    aligned, per_view = _align_views(staged, nominals, cfg, clock)

    t0 = time.perf_counter()
    quality = _score(aligned, cfg, cfg.view_order)
    clock.log("quality", time.perf_counter() - t0, fitness=quality.score)

    flags = []
    rounds_used = 0
    if quality.score < cfg.quality_threshold and cfg.refinement_rounds > 0:
        flags.append("quality_gate_triggered")
        aligned, per_view, quality, rounds_used = apply_adaptive_refinement(
            staged, nominals, cfg, (aligned, per_view, quality), clock)
    if quality.score < cfg.quality_threshold:
        flags.append("quality_gate_failed")

    t0 = time.perf_counter()
    merged = cl.concatenate([aligned[v] for v in cfg.view_order])
    clock.log("merge", time.perf_counter() - t0)

    total = time.perf_counter() - t_start
    elapsed = dict(clock.elapsed)
    elapsed["total"] = total

    return FusedResult(merged=merged, per_view=per_view,
                       quality_score=quality.score, elapsed=elapsed,
                       aligned=aligned, view_order=cfg.view_order,
                       refinement_rounds_used=rounds_used, flags=flags,
                       log_lines=clock.logs)


def merge(aligned_clouds, voxel=1.0):
    """Concatenate aligned clouds and deduplicate at the given voxel."""
    merged = cl.concatenate(list(aligned_clouds))
    return cl.voxel_downsample(merged, voxel)
