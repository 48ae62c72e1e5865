"""Point cloud container and geometry operations.

Clouds live in the metric frame of the camera that captured them: x right,
y down, z forward (along the optical axis), units in millimeters.  Masked
depth pixels are backprojected through a pinhole model, downsampled on a
voxel grid, and given PCA normals oriented toward the capturing camera.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud, InvalidImage

DEFAULT_DEPTH_SCALE = 100.0
DEFAULT_PIXEL_STEP = 4
DEFAULT_NORMAL_RADIUS = 5.0
DEFAULT_NORMAL_MAX_NN = 30
DEFAULT_SAMPLE_COUNT = 50000


@dataclass
class CameraIntrinsics:
    """Pinhole parameters for a square depth image."""

    fx: float = 512.0
    fy: float = 512.0
    cx: float = 256.0
    cy: float = 256.0
    width: int = 512
    height: int = 512

    def as_dict(self):
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("fx", "fy", "cx", "cy", "width", "height")})


@dataclass
class PointCloud:
    """Points (N, 3) float64 with optional unit normals and validity flags."""

    points: np.ndarray
    normals: np.ndarray | None = None
    normals_valid: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != len(self.points):
                raise InvalidImage("normals count does not match point count")
        if self.normals_valid is not None:
            self.normals_valid = np.asarray(self.normals_valid, dtype=bool).reshape(-1)

    def __len__(self):
        return len(self.points)

    def copy(self):
        return PointCloud(
            self.points.copy(),
            None if self.normals is None else self.normals.copy(),
            None if self.normals_valid is None else self.normals_valid.copy(),
        )

    def transformed(self, rotation, translation):
        """Cloud with points rotated+translated and normals rotated."""
        R = np.asarray(rotation, dtype=np.float64)
        t = np.asarray(translation, dtype=np.float64).reshape(3)
        pts = self.points @ R.T + t
        nrm = None if self.normals is None else self.normals @ R.T
        valid = None if self.normals_valid is None else self.normals_valid.copy()
        return PointCloud(pts, nrm, valid)

    def select(self, indices):
        """Subset preserving normals and flags."""
        idx = np.asarray(indices)
        return PointCloud(
            self.points[idx],
            None if self.normals is None else self.normals[idx],
            None if self.normals_valid is None else self.normals_valid[idx],
        )


class SpatialIndex:
    """KD-tree over a fixed point set with knn, radius, and hybrid queries."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise EmptyCloud("cannot index an empty point set")
        self._points = pts
        self._tree = cKDTree(pts)

    def __len__(self):
        return len(self._points)

    @property
    def points(self):
        return self._points

    def knn(self, query, k=1):
        """Distances and indices of the k nearest points, shape (Q, k)."""
        d, i = self._tree.query(np.atleast_2d(query), k=k)
        if k == 1:
            d, i = d[:, None], i[:, None]
        return d, i

    def within(self, query, radius):
        """List of index arrays for all points within radius of each query."""
        found = self._tree.query_ball_point(np.atleast_2d(query), r=radius)
        return [np.asarray(ix, dtype=np.int64) for ix in found]

    def hybrid(self, query, radius, max_nn):
        """Up to max_nn nearest points within radius.

        Missing slots carry distance inf and index len(self) so callers can
        mask with np.isfinite on the distances.
        """
        d, i = self._tree.query(np.atleast_2d(query), k=max_nn,
                                distance_upper_bound=radius)
        if max_nn == 1:
            d, i = d[:, None], i[:, None]
        return d, i


def backproject(values, mask, intrinsics=None, step=DEFAULT_PIXEL_STEP,
                depth_scale=DEFAULT_DEPTH_SCALE):
    """Lift masked depth pixels on a stride-`step` grid into 3D.

    For pixel (u, v) with normalized value d: z = d * depth_scale,
    x = (u - cx) * z / fx, y = (v - cy) * z / fy.
    """
    arr = np.asarray(values, dtype=np.float64)
    msk = np.asarray(mask, dtype=bool)
    if arr.shape != msk.shape:
        raise InvalidImage(f"depth and mask shapes differ: {arr.shape} vs {msk.shape}")
    if step < 1:
        raise InvalidImage(f"pixel step must be >= 1, got {step}")
    intr = intrinsics or CameraIntrinsics()
    vs = np.arange(0, arr.shape[0], step)
    us = np.arange(0, arr.shape[1], step)
    uu, vv = np.meshgrid(us, vs)
    keep = msk[vv, uu]
    if not keep.any():
        raise EmptyCloud("mask selects no pixels on the sampling grid")
    u = uu[keep].astype(np.float64)
    v = vv[keep].astype(np.float64)
    z = arr[vv, uu][keep] * depth_scale
    x = (u - intr.cx) * z / intr.fx
    y = (v - intr.cy) * z / intr.fy
    return PointCloud(np.column_stack([x, y, z]))


def voxel_downsample(cloud, voxel):
    """One output point per occupied voxel: the centroid of its members.

    Normals are averaged and renormalized; a cell whose members have no
    valid normal keeps the +z fallback and is flagged invalid.  Output
    order is the lexicographic order of voxel indices, so results are
    deterministic.
    """
    if voxel <= 0:
        raise InvalidImage(f"voxel size must be positive, got {voxel}")
    if len(cloud) == 0:
        raise EmptyCloud("cannot downsample an empty cloud")
    keys = np.floor(cloud.points / voxel).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    counts = np.bincount(inverse, minlength=len(uniq)).astype(np.float64)
    sums = np.zeros((len(uniq), 3))
    np.add.at(sums, inverse, cloud.points)
    centroids = sums / counts[:, None]
    normals = valid = None
    if cloud.normals is not None:
        src_valid = (np.ones(len(cloud), dtype=bool) if cloud.normals_valid is None
                     else cloud.normals_valid)
        nsums = np.zeros((len(uniq), 3))
        np.add.at(nsums, inverse[src_valid], cloud.normals[src_valid])
        norms = np.linalg.norm(nsums, axis=1)
        valid = norms > 1e-12
        normals = np.tile([0.0, 0.0, 1.0], (len(uniq), 1))
        normals[valid] = nsums[valid] / norms[valid, None]
    return PointCloud(centroids, normals, valid)


def estimate_normals(cloud, radius=DEFAULT_NORMAL_RADIUS,
                     max_nn=DEFAULT_NORMAL_MAX_NN, orient="origin"):
    """PCA normals over a hybrid neighborhood (radius-limited k-NN).

    The normal is the eigenvector of the neighborhood covariance with the
    smallest eigenvalue.  Points with fewer than three neighbors inside the
    radius keep a +z fallback and are flagged invalid.

    orient: "origin" flips normals toward the camera origin, "prior" matches
    the sign of existing normals, None leaves the PCA sign untouched.
    """
    if len(cloud) == 0:
        raise EmptyCloud("cannot estimate normals on an empty cloud")
    pts = cloud.points
    index = SpatialIndex(pts)
    k = min(max_nn + 1, len(pts))
    dist, idx = index.hybrid(pts, radius, k)
    have = np.isfinite(dist)
    # drop self matches (distance zero in column 0)
    neighbor_counts = have.sum(axis=1) - 1
    valid = neighbor_counts >= 3

    normals = np.tile([0.0, 0.0, 1.0], (len(pts), 1))
    if valid.any():
        idx_safe = np.where(have, idx, 0)
        gathered = pts[idx_safe]                      # (N, k, 3)
        w = have.astype(np.float64)[:, :, None]
        count = have.sum(axis=1).astype(np.float64)[:, None]
        mean = (gathered * w).sum(axis=1) / count
        centered = (gathered - mean[:, None, :]) * w
        cov = np.einsum("nki,nkj->nij", centered, centered) / count[:, :, None]
        _, vecs = np.linalg.eigh(cov[valid])
        normals[valid] = vecs[:, :, 0]                # smallest eigenvalue first

    if orient == "origin":
        flip = np.einsum("ij,ij->i", normals, pts) > 0.0
        normals[flip] *= -1.0
    elif orient == "prior":
        if cloud.normals is None:
            raise InvalidImage("orient='prior' needs existing normals")
        flip = np.einsum("ij,ij->i", normals, cloud.normals) < 0.0
        normals[flip] *= -1.0
    elif orient is not None:
        ref = np.asarray(orient, dtype=np.float64).reshape(3)
        flip = normals @ ref < 0.0
        normals[flip] *= -1.0
    return PointCloud(pts.copy(), normals, valid)


def uniform_sample(cloud, n=DEFAULT_SAMPLE_COUNT, seed=0):
    """Seeded uniform subsample without replacement, original order kept."""
    if len(cloud) == 0:
        raise EmptyCloud("cannot sample an empty cloud")
    if n >= len(cloud):
        return cloud.copy()
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(cloud), size=n, replace=False))
    return cloud.select(idx)


def concatenate(clouds):
    """Stack clouds; normals survive only if every input carries them."""
    clouds = [c for c in clouds if len(c)]
    if not clouds:
        raise EmptyCloud("nothing to concatenate")
    pts = np.vstack([c.points for c in clouds])
    normals = valid = None
    if all(c.normals is not None for c in clouds):
        normals = np.vstack([c.normals for c in clouds])
        valid = np.concatenate([
            np.ones(len(c), dtype=bool) if c.normals_valid is None else c.normals_valid
            for c in clouds
        ])
    return PointCloud(pts, normals, valid)


# ---------------------------------------------------------------------------
# ASCII PLY round-trip.  Fixed %.6f formatting keeps reruns byte-identical.
# ---------------------------------------------------------------------------

def save_ply(path, cloud):
    """Write points (and normals when present) as ASCII PLY."""
    has_normals = cloud.normals is not None
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property float x", "property float y", "property float z"]
    if has_normals:
        lines += ["property float nx", "property float ny", "property float nz"]
    lines.append("end_header")
    rows = (np.hstack([cloud.points, cloud.normals]) if has_normals
            else cloud.points)
    body = "\n".join(" ".join(f"{v:.6f}" for v in row) for row in rows)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n" + body + "\n")


def load_ply(path):
    """Read an ASCII PLY written by save_ply (or any x/y/z[/n*] vertex list)."""
    with open(path, "r", encoding="ascii") as fh:
        text = fh.read().splitlines()
    if not text or text[0].strip() != "ply":
        raise InvalidImage(f"{path} is not a PLY file")
    n_vertex = 0
    props = []
    i = 0
    for i, line in enumerate(text):
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n_vertex = int(parts[2])
        elif parts and parts[0] == "property" and n_vertex:
            props.append(parts[-1])
        elif line.strip() == "end_header":
            break
    data = np.array([row.split() for row in text[i + 1:i + 1 + n_vertex]],
                    dtype=np.float64)
    cols = {name: j for j, name in enumerate(props)}
    pts = data[:, [cols["x"], cols["y"], cols["z"]]]
    normals = None
    if all(k in cols for k in ("nx", "ny", "nz")):
        normals = data[:, [cols["nx"], cols["ny"], cols["nz"]]]
    return PointCloud(pts, normals)
