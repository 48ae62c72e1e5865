"""Fast point feature histograms (33-bin) for coarse correspondence search.

Each point gets a simplified histogram (SPFH) of the three Darboux-frame
angles between its normal and the normals of its neighbors, 11 bins per
angle.  The final descriptor re-weights neighbor SPFHs by inverse distance:

    F(p) = SPFH(p) + sum_k SPFH(q_k) / w_k,   w_k = ||p - q_k||

The construction only sees relative geometry, so descriptors are invariant
under rigid motion of the whole cloud.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyCloud, NormalsRequired
from .cloud import SpatialIndex

N_BINS_PER_ANGLE = 11
DESCRIPTOR_SIZE = 3 * N_BINS_PER_ANGLE
DEFAULT_MAX_NN = 100


@dataclass
class FpfhSet:
    """Descriptor block (N, 33) plus a per-point flag for isolated points."""

    features: np.ndarray
    has_neighbors: np.ndarray

    def __len__(self):
        return len(self.features)


def _pair_angles(p_src, n_src, p_dst, n_dst, dist):
    """Darboux angles (alpha, phi, theta) for point pairs.

    The point whose normal is better aligned with the connecting line acts
    as the frame origin; the swap keeps the features symmetric in the pair.
    Returns the angle triples and a validity mask (degenerate frames where
    the line is parallel to the source normal are dropped).
    """
    d = (p_dst - p_src) / dist[:, None]
    a1 = np.einsum("ij,ij->i", n_src, d)
    a2 = np.einsum("ij,ij->i", n_dst, d)
    swap = np.abs(a1) < np.abs(a2)

    u = np.where(swap[:, None], n_dst, n_src)
    n_other = np.where(swap[:, None], n_src, n_dst)
    d = np.where(swap[:, None], -d, d)
    phi = np.where(swap, -a2, a1)

    v = np.cross(d, u)
    v_norm = np.linalg.norm(v, axis=1)
    ok = v_norm > 1e-12
    v = np.divide(v, v_norm[:, None], out=np.zeros_like(v), where=ok[:, None])
    w = np.cross(u, v)

    alpha = np.einsum("ij,ij->i", v, n_other)
    theta = np.arctan2(np.einsum("ij,ij->i", w, n_other),
                       np.einsum("ij,ij->i", u, n_other))
    return alpha, phi, theta, ok


def _bin_index(value, lo, hi):
    idx = np.floor(N_BINS_PER_ANGLE * (value - lo) / (hi - lo)).astype(np.int64)
    return np.clip(idx, 0, N_BINS_PER_ANGLE - 1)


def compute_fpfh(cloud, radius, max_nn=DEFAULT_MAX_NN):
    """FPFH descriptors for every point in the cloud.

    The neighborhood is a hybrid search: all points within `radius`,
    truncated to the `max_nn` nearest.  Points with no neighbors get an
    all-zero descriptor and has_neighbors False.
    """
    if len(cloud) == 0:
        raise EmptyCloud("cannot describe an empty cloud")
    if cloud.normals is None:
        raise NormalsRequired("FPFH needs per-point normals")
    pts = cloud.points
    nrm = cloud.normals
    n = len(pts)

    index = SpatialIndex(pts)
    k = min(max_nn + 1, n)
    dist, idx = index.hybrid(pts, radius, k)
    neigh = np.isfinite(dist)
    neigh[:, 0] = False                    # drop the self match
    if k > 1:
        neigh &= dist > 1e-12              # coincident points carry no frame

    rows, cols = np.nonzero(neigh)
    spfh = np.zeros((n, DESCRIPTOR_SIZE))
    has_neighbors = np.zeros(n, dtype=bool)
    if len(rows):
        ii = rows
        jj = idx[rows, cols]
        w = dist[rows, cols]
        alpha, phi, theta, ok = _pair_angles(pts[ii], nrm[ii], pts[jj], nrm[jj], w)
        ii, jj, w = ii[ok], jj[ok], w[ok]
        b_alpha = _bin_index(alpha[ok], -1.0, 1.0)
        b_phi = _bin_index(phi[ok], -1.0, 1.0)
        b_theta = _bin_index(theta[ok], -np.pi, np.pi)

        pair_count = np.bincount(ii, minlength=n).astype(np.float64)
        has_neighbors = pair_count > 0
        incr = np.zeros(n)
        incr[has_neighbors] = 100.0 / pair_count[has_neighbors]
        np.add.at(spfh, (ii, b_alpha), incr[ii])
        np.add.at(spfh, (ii, N_BINS_PER_ANGLE + b_phi), incr[ii])
        np.add.at(spfh, (ii, 2 * N_BINS_PER_ANGLE + b_theta), incr[ii])

        features = spfh.copy()
        np.add.at(features, ii, spfh[jj] / w[:, None])
    else:
        features = spfh.copy()
    features[~has_neighbors] = 0.0
    return FpfhSet(features, has_neighbors)
