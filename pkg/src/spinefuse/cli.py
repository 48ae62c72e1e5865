"""Command line interface: per-stage tools plus batch orchestration.

Every subcommand is deterministic for fixed inputs, config, and seed;
wall-clock timings appear only in run.jsonl logs and manifest.json so
all other JSON artifacts are byte-stable across reruns.  Exit codes:
0 success, 1 partial failure (batch datasets failed or nothing to do),
2 fatal error.
"""

import argparse
import json
import os
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import cloud as cl
from . import depthmap as dm
from . import mesh_lod as ml
from . import posture as po
from . import skeleton as sk
from . import stats as st
from . import synth as sy
from .config import (ReconstructionConfig, VIEW_NAMES, default_config)
from .errors import SpinefuseError
from .pipeline import reconstruct, merge
from .register import POINT_TO_PLANE, POINT_TO_POINT, icp


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_config(path):
    if path:
        return ReconstructionConfig.load(path)
    return default_config()


def _load_depth_unit(path):
    return dm.to_unit(dm.load_depth(path))


# ---------------------------------------------------------------------------
# Single-stage subcommands
# ---------------------------------------------------------------------------

def cmd_preprocess(args):
    cfg = _load_config(args.config)
    values = _load_depth_unit(args.depth)
    mask = dm.build_mask(values, lo=cfg.mask.low, hi=cfg.mask.high)
    mask = dm.refine_mask(mask, radius=cfg.mask.morph_radius)
    dm.save_mask(args.out_mask, mask)
    if args.stats:
        _write_json(args.stats, {
            "coverage": float(mask.mean()),
            "pixels": int(mask.sum()),
            "shape": list(mask.shape),
        })
    return 0


def cmd_backproject(args):
    cfg = _load_config(args.config)
    values = _load_depth_unit(args.depth)
    if args.mask:
        mask = dm.load_mask(args.mask)
    else:
        mask = dm.refine_mask(
            dm.build_mask(values, lo=cfg.mask.low, hi=cfg.mask.high),
            radius=cfg.mask.morph_radius)
    pc = cl.backproject(values, mask, cfg.camera, step=cfg.backproject_step,
                        depth_scale=cfg.depth_scale)
    cl.save_ply(args.out, pc)
    return 0


def _load_scene_views(scene_dir, cfg):
    depths, masks = {}, {}
    for name in VIEW_NAMES:
        depth_path = os.path.join(scene_dir, f"{name}.pgm")
        if not os.path.exists(depth_path):
            raise FileNotFoundError(f"missing view image {depth_path}")
        depths[name] = _load_depth_unit(depth_path)
        mask_path = os.path.join(scene_dir, f"{name}_mask.pgm")
        if os.path.exists(mask_path):
            masks[name] = dm.load_mask(mask_path)
    return depths, masks


def _scene_config(scene_dir, cfg):
    """Adopt the capture geometry recorded with a scene, if any."""
    meta_path = os.path.join(scene_dir, "scene.json")
    if not os.path.exists(meta_path):
        return cfg
    with open(meta_path) as fh:
        meta = json.load(fh)
    data = cfg.as_dict()
    data["camera"] = meta["intrinsics"]
    data["depth_scale"] = meta["depth_scale"]
    data["rig_distance"] = meta["rig_distance"]
    data["rig_yaw_deg"] = meta["yaw_deg"]
    return ReconstructionConfig.from_dict(data)


def _reconstruct_dir(scene_dir, out_dir, cfg):
    depths, masks = _load_scene_views(scene_dir, cfg)
    cfg = _scene_config(scene_dir, cfg)
    result = reconstruct(depths, cfg, masks or None)
    os.makedirs(out_dir, exist_ok=True)
    cl.save_ply(os.path.join(out_dir, "fused.ply"), result.merged)
    _write_json(os.path.join(out_dir, "result.json"), {
        "transforms": result.transform_dict(),
        "per_view": {name: {
            "fitness": res.fitness,
            "rmse": None if not np.isfinite(res.inlier_rmse)
            else res.inlier_rmse,
            "converged": res.converged,
            "flags": list(res.flags),
        } for name, res in sorted(result.per_view.items())},
        "quality_score": result.quality_score,
        "refinement_rounds_used": result.refinement_rounds_used,
        "flags": list(result.flags),
        "view_order": list(result.view_order),
        "merged_points": len(result.merged),
    })
    with open(os.path.join(out_dir, "run.jsonl"), "w") as fh:
        for line in result.log_lines:
            fh.write(line + "\n")
        fh.write(json.dumps({"stage": "total",
                             "seconds": round(result.elapsed["total"], 6)},
                            sort_keys=True) + "\n")
    return result, cfg


def cmd_reconstruct(args):
    cfg = _load_config(args.config)
    _reconstruct_dir(args.input, args.out_dir, cfg)
    return 0


def _mesh_from_ply(path):
    mesh = ml.load_ply(path)
    if mesh.n_faces:
        return ml.clean_mesh(mesh)
    pc = cl.PointCloud(mesh.vertices, mesh.vertex_normals)
    if pc.normals is None:
        from .pipeline import _estimate_view_normals
        pc = _estimate_view_normals(pc)
    return ml.clean_mesh(ml.build_mesh(pc))


def _save_lods(lods, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name in lods.order():
        mesh = lods[name]
        ml.save_ply(mesh, os.path.join(out_dir, f"{name}.ply"))
        ml.save_obj(mesh, os.path.join(out_dir, f"{name}.obj"))
    _write_json(os.path.join(out_dir, "lods.json"), {
        "original_vertices": lods.original_vertices,
        "rates": {k: v for k, v in lods.rates.items()},
        "counts": lods.counts(),
    })


def cmd_lod(args):
    mesh = _mesh_from_ply(args.infile)
    lods = ml.generate_lods(mesh, path=args.path)
    _save_lods(lods, args.out_dir)
    return 0


def _skeleton_payload(scene_dir, lod_meshes, lod_names, cfg):
    cfg = _scene_config(scene_dir, cfg)
    intr = cfg.camera
    landmarks = sk.LandmarkSet2D.from_json(
        os.path.join(scene_dir, "landmarks.json"), intr.width, intr.height)
    values = _load_depth_unit(os.path.join(scene_dir, "front.pgm"))
    mask_path = os.path.join(scene_dir, "front_mask.pgm")
    if os.path.exists(mask_path):
        mask = dm.load_mask(mask_path)
    else:
        mask = dm.refine_mask(
            dm.build_mask(values, lo=cfg.mask.low, hi=cfg.mask.high),
            radius=cfg.mask.morph_radius)
    # lifting wants the densest grid the image offers
    reference = cl.backproject(values, mask, intr, step=1,
                               depth_scale=cfg.depth_scale)
    base = sk.init_joints(landmarks, reference, intr)

    per_lod = {}
    candidates = []
    regions = []
    used_names = []
    for name, mesh in zip(lod_names, lod_meshes):
        refined = sk.refine_joints_on_lod(base, mesh)
        per_lod[name] = refined
        candidates.append(refined)
        regions.append(sk.segment_spine(refined))
        used_names.append(name)
    voted = sk.ensemble_vote(candidates)
    fused_regions, deviation_table = sk.ensemble_angles(regions, used_names)
    return {
        "skeleton": voted.as_dict(),
        "per_lod": {name: s.as_dict() for name, s in sorted(per_lod.items())},
        "regions": fused_regions.as_dict(),
        "deviation_table": deviation_table,
        "lod_names": used_names,
        "camera": intr.as_dict(),
    }


def cmd_skeleton(args):
    cfg = _load_config(args.config)
    lod_names, meshes = [], []
    for name, _rate in ml.LOD_LEVELS:
        path = os.path.join(args.lods, f"{name}.ply")
        if os.path.exists(path):
            lod_names.append(name)
            meshes.append(ml.load_ply(path))
    payload = _skeleton_payload(args.scene, meshes, lod_names, cfg)
    _write_json(args.out, payload)
    return 0


def _analyze_payload(skeleton_payload, height_cm=None):
    voted = sk.Skeleton3D.from_dict(skeleton_payload["skeleton"])
    # front camera frame: subject faces the camera, image y points down
    lm = po.landmarks_from_skeleton(
        voted, h_real_cm=height_cm or 0.0,
        anterior=np.array([0.0, 0.0, -1.0]), up=np.array([0.0, -1.0, 0.0]))
    if not height_cm:
        # fall back to the skeleton's own vertical extent
        lm = po.PostureLandmarks(points=lm.points, h_pix=lm.h_pix,
                                 h_real_cm=lm.h_pix / 10.0,
                                 v=lm.v, h=lm.h)
    angles = po.compute_angles(lm)
    rep = po.classify(angles)
    regions = skeleton_payload.get("regions")
    doc = po.report(angles, rep, skeleton=skeleton_payload["skeleton"],
                    regions=regions,
                    deviation_table=skeleton_payload.get("deviation_table"))
    return doc, voted


def cmd_analyze(args):
    with open(args.skeleton) as fh:
        payload = json.load(fh)
    doc, voted = _analyze_payload(payload, args.height_cm)
    os.makedirs(args.out_dir, exist_ok=True)
    _write_json(os.path.join(args.out_dir, "posture.json"), doc)
    with open(os.path.join(args.out_dir, "report.txt"), "w") as fh:
        fh.write(doc["text"] + "\n")
    if "camera" in payload:
        intr = cl.CameraIntrinsics.from_dict(payload["camera"])
        svg = po.svg_overlay(voted, intr, doc)
        with open(os.path.join(args.out_dir, "overlay.svg"), "w") as fh:
            fh.write(svg + "\n")
    return 0


def compare_icp_batch(scenes, seed, voxel):
    """Paired point-to-point / point-to-plane runs over seeded cloud pairs."""
    results_pp, results_pl = [], []
    for i in range(scenes):
        source, target, _gt = sy.make_icp_pair(seed=seed + i)
        # the plane variant reads normals off the target; estimate them once
        # at the working scale so both variants see the same correspondences
        target = cl.estimate_normals(target, radius=2.0 * voxel, max_nn=30)
        dist = 3.0 * voxel
        results_pp.append(icp(source, target, max_corr_dist=dist,
                              variant=POINT_TO_POINT, iterations=60))
        results_pl.append(icp(source, target, max_corr_dist=dist,
                              variant=POINT_TO_PLANE, iterations=60))
    return results_pp, results_pl


def cmd_compare_icp(args):
    results_pp, results_pl = compare_icp_batch(args.scenes, args.seed,
                                               args.voxel)
    reports = st.compare_icp(results_pp, results_pl,
                             name_a="point_to_point",
                             name_b="point_to_plane")
    _write_json(args.out, {metric: rep.as_dict()
                           for metric, rep in sorted(reports.items())})
    return 0


def cmd_synth(args):
    if args.params:
        with open(args.params) as fh:
            body = sy.BodyParams.from_dict(json.load(fh))
    else:
        body = sy.BodyParams()
    misrotate = None
    if args.misrotate_deg:
        misrotate = {args.misrotate_view: args.misrotate_deg}
    scene = sy.make_scene(body=body, seed=args.seed,
                          perturb_rot_deg=args.perturb_deg,
                          perturb_trans_mm=args.perturb_mm,
                          misrotate_deg=misrotate)
    scene.save(args.out)
    return 0


# ---------------------------------------------------------------------------
# Batch
# ---------------------------------------------------------------------------

def _run_dataset(job):
    dataset_dir, out_dir, cfg_json, height_cm = job
    name = os.path.basename(dataset_dir.rstrip("/"))
    entry = {"name": name, "success": False, "error": None,
             "seconds": {}, "quality": None, "paths": {}}
    t_start = time.perf_counter()
    try:
        cfg = ReconstructionConfig.from_json(cfg_json)
        os.makedirs(out_dir, exist_ok=True)

        t0 = time.perf_counter()
        result, cfg = _reconstruct_dir(dataset_dir, out_dir, cfg)
        entry["seconds"]["reconstruct"] = time.perf_counter() - t0
        entry["quality"] = result.quality_score
        entry["paths"]["fused"] = os.path.join(out_dir, "fused.ply")

        t0 = time.perf_counter()
        dedup = merge([result.aligned[v] for v in result.view_order],
                      voxel=cfg.merge_voxel)
        mesh = ml.clean_mesh(ml.build_mesh(dedup))
        lods = ml.generate_lods(mesh)
        lod_dir = os.path.join(out_dir, "lods")
        _save_lods(lods, lod_dir)
        entry["seconds"]["lod"] = time.perf_counter() - t0
        entry["paths"]["lods"] = lod_dir

        if os.path.exists(os.path.join(dataset_dir, "landmarks.json")):
            t0 = time.perf_counter()
            names = [n for n, _ in ml.LOD_LEVELS]
            payload = _skeleton_payload(dataset_dir,
                                        [lods[n] for n in names], names, cfg)
            _write_json(os.path.join(out_dir, "skeleton.json"), payload)
            entry["seconds"]["skeleton"] = time.perf_counter() - t0
            entry["paths"]["skeleton"] = os.path.join(out_dir, "skeleton.json")

            t0 = time.perf_counter()
            doc, voted = _analyze_payload(payload, height_cm)
            _write_json(os.path.join(out_dir, "posture.json"), doc)
            with open(os.path.join(out_dir, "report.txt"), "w") as fh:
                fh.write(doc["text"] + "\n")
            intr = cl.CameraIntrinsics.from_dict(payload["camera"])
            with open(os.path.join(out_dir, "overlay.svg"), "w") as fh:
                fh.write(po.svg_overlay(voted, intr, doc) + "\n")
            entry["seconds"]["analyze"] = time.perf_counter() - t0
            entry["paths"]["posture"] = os.path.join(out_dir, "posture.json")

        entry["success"] = True
    except Exception as exc:
        entry["error"] = f"{type(exc).__name__}: {exc}"
        entry["trace"] = traceback.format_exc()
    entry["seconds"]["total"] = time.perf_counter() - t_start
    return entry


def run_batch(dataset_root, out_root, cfg=None, jobs=1, height_cm=None):
    """Reconstruct, mesh, and analyze every dataset under a root dir.

    A dataset is any direct subdirectory holding all four view images.
    Per-dataset failures are recorded and the batch continues.
    """
    cfg = cfg or default_config()
    datasets = []
    if os.path.isdir(dataset_root):
        for name in sorted(os.listdir(dataset_root)):
            d = os.path.join(dataset_root, name)
            if os.path.isdir(d) and all(
                    os.path.exists(os.path.join(d, f"{v}.pgm"))
                    for v in VIEW_NAMES):
                datasets.append(d)

    t_start = time.perf_counter()
    jobs_list = [(d, os.path.join(out_root, os.path.basename(d)),
                  cfg.to_json(), height_cm) for d in datasets]
    if jobs > 1 and len(jobs_list) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_run_dataset, jobs_list))
    else:
        entries = [_run_dataset(job) for job in jobs_list]

    manifest = {
        "datasets": {e["name"]: e for e in entries},
        "dataset_count": len(entries),
        "success_count": sum(1 for e in entries if e["success"]),
        "failure_count": sum(1 for e in entries if not e["success"]),
        "total_seconds": time.perf_counter() - t_start,
    }
    os.makedirs(out_root, exist_ok=True)
    _write_json(os.path.join(out_root, "manifest.json"), manifest)
    return manifest


def cmd_run_batch(args):
    cfg = _load_config(args.config)
    manifest = run_batch(args.input, args.out_dir, cfg, jobs=args.jobs,
                         height_cm=args.height_cm)
    if manifest["dataset_count"] == 0:
        print("no datasets found", file=sys.stderr)
        return 1
    if manifest["failure_count"]:
        print(f"{manifest['failure_count']} dataset(s) failed",
              file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="spinefuse",
                                description="Four-view body reconstruction "
                                            "and posture analysis")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("preprocess", help="depth image to foreground mask")
    sp.add_argument("--depth", required=True)
    sp.add_argument("--out-mask", required=True)
    sp.add_argument("--stats")
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_preprocess)

    sp = sub.add_parser("backproject", help="depth image to point cloud PLY")
    sp.add_argument("--depth", required=True)
    sp.add_argument("--mask")
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_backproject)

    sp = sub.add_parser("reconstruct", help="fuse a four-view scene dir")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("lod", help="mesh a fused cloud and emit LOD levels")
    sp.add_argument("--in", dest="infile", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--path", choices=("quality", "speed"), default="quality")
    sp.set_defaults(func=cmd_lod)

    sp = sub.add_parser("skeleton", help="estimate the spinal skeleton")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--lods", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--config")
    sp.set_defaults(func=cmd_skeleton)

    sp = sub.add_parser("analyze", help="posture angles and risk classes")
    sp.add_argument("--skeleton", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--height-cm", type=float)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("compare-icp", help="paired ICP variant comparison")
    sp.add_argument("--scenes", type=int, default=50)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--voxel", type=float, default=10.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_compare_icp)

    sp = sub.add_parser("synth", help="generate a synthetic scene")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--params")
    sp.add_argument("--perturb-deg", type=float, default=2.0)
    sp.add_argument("--perturb-mm", type=float, default=20.0)
    sp.add_argument("--misrotate-deg", type=float)
    sp.add_argument("--misrotate-view", default="left")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("run-batch", help="process every dataset in a dir")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--config")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--height-cm", type=float)
    sp.set_defaults(func=cmd_run_batch)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SpinefuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
