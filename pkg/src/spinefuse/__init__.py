"""Training-free four-view body reconstruction and posture analysis.

Depth images from four directions are fused by hierarchical rigid
registration (feature-based global alignment refined by coarse-to-fine
ICP), meshed, reduced to a six-level LOD hierarchy, and analyzed: a
spinal skeleton is voted across the LOD levels and posture angles are
classified against ergonomic risk bands.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, DegenerateLandmarks, DegenerateSample,
                     EmptyCloud, EmptyRender, EnsembleTooSmall,
                     ImplausibleSkeleton, InsufficientCorrespondences,
                     InvalidBody, InvalidImage, InvalidThresholds,
                     MeshFailure, NoConsensus, NormalsRequired,
                     SpinefuseError)
from .depthmap import (build_mask, combine_masks, load_depth, load_mask,
                       refine_mask, save_mask, save_pgm, to_unit)
from .cloud import (CameraIntrinsics, PointCloud, SpatialIndex, backproject,
                    concatenate, estimate_normals, uniform_sample,
                    voxel_downsample)
from .fpfh import FpfhSet, compute_fpfh
from .register import (AlignmentQuality, RansacParams, RegistrationResult,
                       RigidTransform, assess_alignment_quality, evaluate,
                       icp, match_features, multiscale_icp, ransac_global,
                       small_rotation_icp, translation_only_icp)
from .config import (ReconstructionConfig, ViewRegistration, alternate_config,
                     default_config)
from .pipeline import (FusedResult, apply_adaptive_refinement, merge,
                       nominal_transform, reconstruct, rig_extrinsic)
from .mesh_lod import (LodSet, TriangleMesh, build_mesh, clean_mesh,
                       decimate_qem, generate_lods, smooth)
from .skeleton import (LandmarkSet2D, Skeleton3D, SpineRegions,
                       ensemble_angles, ensemble_vote, init_joints,
                       refine_joints_on_lod, segment_spine)
from .posture import (PostureAngles, PostureLandmarks, PostureReport,
                      classify, classify_value, compute_angles,
                      landmarks_from_skeleton, report, svg_overlay)
from .stats import (PairedSample, StatsReport, analyze_paired, cohens_d_paired,
                    compare_icp, shapiro_wilk, wilcoxon_signed_rank)
from .synth import (BodyParams, SyntheticScene, body_joints, make_icp_pair,
                    make_scene, render_cloud, render_depth)
