"""Surface meshing and the six-level LOD hierarchy.

build_mesh runs ball-pivoting over the fused cloud with radii scaled
from the mean point spacing.  clean_mesh welds duplicate vertices and
drops degenerate, duplicated, and over-shared faces.  decimate_qem is
quadric edge collapse with a curvature-scaled penalty standing in for
anatomical importance: high-curvature vertices cost more to remove.
generate_lods chains decimation so each level further simplifies the
previous one at reduction rates 0/40/65/75/90/95 percent of the
original vertex count.
"""

import heapq
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, MeshFailure, NormalsRequired

WELD_TOL = 1e-6
MIN_DECIMATED_VERTICES = 50
LOD_LEVELS = (("UltraHigh", 0.0), ("High", 0.40), ("Medium", 0.65),
              ("Default", 0.75), ("Low", 0.90), ("UltraLow", 0.95))
BPA_RADIUS_FACTORS = (1.6, 2.4, 3.2)
CURVATURE_WEIGHT = 3.0
BOUNDARY_WEIGHT = 100.0


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.faces.size and (self.faces.min() < 0
                                or self.faces.max() >= len(self.vertices)):
            raise ConfigError("face indices out of range")
        if self.vertex_normals is not None:
            self.vertex_normals = np.asarray(
                self.vertex_normals, dtype=np.float64).reshape(-1, 3)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_faces(self):
        return len(self.faces)

    def copy(self):
        vn = None if self.vertex_normals is None else self.vertex_normals.copy()
        return TriangleMesh(self.vertices.copy(), self.faces.copy(), vn)

    def centroid(self):
        return self.vertices.mean(axis=0)

    def bbox_diagonal(self):
        if not len(self.vertices):
            return 0.0
        ext = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(ext))


def _face_geometry(vertices, faces):
    v0 = vertices[faces[:, 0]]
    cross = np.cross(vertices[faces[:, 1]] - v0, vertices[faces[:, 2]] - v0)
    norms = np.linalg.norm(cross, axis=1)
    areas = 0.5 * norms
    normals = np.zeros_like(cross)
    ok = norms > 1e-12
    normals[ok] = cross[ok] / norms[ok, None]
    return normals, areas


def recompute_normals(mesh):
    """Area-weighted vertex normals; modifies the mesh in place."""
    acc = np.zeros_like(mesh.vertices)
    if len(mesh.faces):
        fn, areas = _face_geometry(mesh.vertices, mesh.faces)
        weighted = fn * areas[:, None]
        for k in range(3):
            np.add.at(acc, mesh.faces[:, k], weighted)
    lens = np.linalg.norm(acc, axis=1)
    ok = lens > 1e-12
    acc[ok] /= lens[ok, None]
    mesh.vertex_normals = acc
    return mesh


def mesh_area(mesh):
    if not len(mesh.faces):
        return 0.0
    _, areas = _face_geometry(mesh.vertices, mesh.faces)
    return float(areas.sum())


def mesh_volume(mesh):
    """Signed volume by the divergence theorem (closed meshes)."""
    if not len(mesh.faces):
        return 0.0
    a = mesh.vertices[mesh.faces[:, 0]]
    b = mesh.vertices[mesh.faces[:, 1]]
    c = mesh.vertices[mesh.faces[:, 2]]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


# ---------------------------------------------------------------------------
# Ball pivoting
# ---------------------------------------------------------------------------

def _ball_centers(p1, p2, p3, r):
    """Both sphere centers of radius r through three points, or None."""
    u = p2 - p1
    v = p3 - p1
    n = np.cross(u, v)
    nn = float(n @ n)
    if nn < 1e-18:
        return None
    # circumcenter via perpendicular offsets in the triangle plane
    uu, vv, uv = float(u @ u), float(v @ v), float(u @ v)
    denom = 2.0 * (uu * vv - uv * uv)
    if abs(denom) < 1e-18:
        return None
    s = (vv * (uu - uv)) / denom
    t = (uu * (vv - uv)) / denom
    cc = p1 + s * u + t * v
    h2 = r * r - float((cc - p1) @ (cc - p1))
    if h2 <= 0:
        return None
    n_hat = n / np.sqrt(nn)
    off = n_hat * np.sqrt(h2)
    return cc + off, cc - off, n_hat


def _pivot_angle(m, axis, c_old, c_new):
    """Rotation from the old ball center to a candidate, in [0, 2pi).

    Zero is a legal pivot: on regular samplings the next point is often
    exactly cospherical with the current ball.
    """
    r1 = c_old - m
    r1 = r1 - axis * float(r1 @ axis)
    r2 = c_new - m
    r2 = r2 - axis * float(r2 @ axis)
    n1 = np.linalg.norm(r1)
    n2 = np.linalg.norm(r2)
    if n1 < 1e-12 or n2 < 1e-12:
        return 2.0 * np.pi
    cos_a = float(np.clip((r1 @ r2) / (n1 * n2), -1.0, 1.0))
    sin_a = float(np.cross(r1, r2) @ axis) / (n1 * n2)
    ang = np.arctan2(sin_a, cos_a)
    if ang < -1e-6:
        ang += 2.0 * np.pi
    return max(ang, 0.0)


class _BpaFront:
    """Directed-edge advancing front with deferred boundary retries."""

    def __init__(self):
        self.center = {}
        self.queue = []
        self.boundary = []

    def push(self, edge, center, opposite):
        rev = (edge[1], edge[0])
        if rev in self.center:
            # the reverse edge is being glued shut
            del self.center[rev]
            return
        if edge in self.center:
            return
        self.center[edge] = (center, opposite)
        self.queue.append(edge)


def build_mesh(pc, radii=None):
    """Ball-pivoting surface over an oriented point cloud.

    Radii default to the mean nearest-neighbor spacing times
    BPA_RADIUS_FACTORS, run smallest first with the front carried over
    so holes left at one scale are retried at the next.
    """
    pts = np.asarray(pc.points, dtype=np.float64)
    if len(pts) < 100:
        raise MeshFailure(f"need at least 100 points, got {len(pts)}")
    if getattr(pc, "normals", None) is None:
        raise NormalsRequired("ball pivoting needs oriented normals")
    normals = np.asarray(pc.normals, dtype=np.float64)

    tree = cKDTree(pts)
    if radii is None:
        d, _ = tree.query(pts, k=2)
        spacing = float(d[:, 1].mean())
        radii = [spacing * f for f in BPA_RADIUS_FACTORS]
    radii = sorted(float(r) for r in radii)

    n = len(pts)
    state = np.zeros(n, dtype=np.int8)        # 0 orphan, 1 front, 2 inner
    faces = []
    face_set = set()
    edge_valence = {}
    front = _BpaFront()

    def full_edge(u, v):
        e = (u, v) if u < v else (v, u)
        return edge_valence.get(e, 0) >= 2

    def ball_empty(center, r, local_idx, local_pts, tri):
        d2 = ((local_pts - center) ** 2).sum(axis=1)
        inside = d2 < (r * (1.0 - 1e-7)) ** 2
        for li in np.nonzero(inside)[0]:
            if local_idx[li] not in tri:
                return False
        return True

    def add_face(i, j, k):
        key = tuple(sorted((i, j, k)))
        if key in face_set:
            return False
        face_set.add(key)
        faces.append((i, j, k))
        for u, v in ((i, j), (j, k), (k, i)):
            e = (u, v) if u < v else (v, u)
            edge_valence[e] = edge_valence.get(e, 0) + 1
        for v in (i, j, k):
            if state[v] == 0:
                state[v] = 1
        return True

    def try_seed(r):
        cand_lim = 2.0 * r
        for i in range(n):
            if state[i] != 0:
                continue
            idx = tree.query_ball_point(pts[i], cand_lim)
            idx = sorted(x for x in idx if x != i and state[x] != 2)
            if len(idx) < 2:
                continue
            idx = sorted(idx, key=lambda x: float(
                ((pts[x] - pts[i]) ** 2).sum()))[:24]
            local = tree.query_ball_point(pts[i], 3.0 * r)
            local_pts = pts[local]
            for ai, j in enumerate(idx):
                for k in idx[ai + 1:]:
                    if full_edge(j, k):
                        continue
                    res = _ball_centers(pts[i], pts[j], pts[k], r)
                    if res is None:
                        continue
                    c_plus, c_minus, n_hat = res
                    avg_n = normals[i] + normals[j] + normals[k]
                    # orient the face with the vertex normals
                    jj, kk = (j, k) if float(n_hat @ avg_n) >= 0 else (k, j)
                    n_face = n_hat if float(n_hat @ avg_n) >= 0 else -n_hat
                    for c in (c_plus, c_minus):
                        if float((c - pts[i]) @ n_face) < 0:
                            continue
                        if not ball_empty(c, r, local, local_pts, (i, j, k)):
                            continue
                        if add_face(i, jj, kk):
                            front.push((i, jj), c, kk)
                            front.push((jj, kk), c, i)
                            front.push((kk, i), c, jj)
                            return True
        return False

    def run_front(r):
        while front.queue:
            edge = front.queue.pop(0)
            if edge not in front.center:
                continue
            a, b = edge
            c_old, opp = front.center.pop(edge)
            pa, pb = pts[a], pts[b]
            m = 0.5 * (pa + pb)
            axis = pb - pa
            alen = np.linalg.norm(axis)
            if alen < 1e-12:
                continue
            axis = axis / alen
            local = tree.query_ball_point(m, 2.0 * r)
            local_pts = pts[local]
            if full_edge(a, b):
                continue
            best = None
            for x in sorted(local):
                if x == a or x == b or x == opp or state[x] == 2:
                    continue
                if tuple(sorted((a, b, x))) in face_set:
                    continue
                if full_edge(a, x) or full_edge(x, b):
                    continue
                # the new face (b, a, x) must agree with the vertex normals;
                # this disambiguates zero-angle ties on cospherical samples
                tn = np.cross(pa - pb, pts[x] - pb)
                if float(tn @ (normals[a] + normals[b] + normals[x])) <= 0:
                    continue
                res = _ball_centers(pa, pb, pts[x], r)
                if res is None:
                    continue
                for c_new in res[:2]:
                    ang = _pivot_angle(m, axis, c_old, c_new)
                    if best is not None and ang >= best[0]:
                        continue
                    if not ball_empty(c_new, r, local, local_pts, (a, b, x)):
                        continue
                    best = (ang, x, c_new)
            if best is None:
                front.boundary.append((edge, c_old, opp))
                continue
            _, x, c_new = best
            if add_face(b, a, x):
                front.push((a, x), c_new, b)
                front.push((x, b), c_new, a)
        # vertices no longer on any front edge become inner
        on_front = set()
        for (a, b) in front.center:
            on_front.add(a)
            on_front.add(b)
        for (edge, _, _) in front.boundary:
            on_front.add(edge[0])
            on_front.add(edge[1])
        for v in range(n):
            if state[v] == 1 and v not in on_front:
                state[v] = 2

    for r in radii:
        # retry boundary edges of smaller radii at this scale
        retries, front.boundary = front.boundary, []
        for (edge, c_old, opp) in retries:
            if edge not in front.center:
                front.center[edge] = (c_old, opp)
                front.queue.append(edge)
        while True:
            run_front(r)
            if not try_seed(r):
                break

    if not faces:
        raise MeshFailure("ball pivoting produced no triangles")
    faces = np.asarray(faces, dtype=np.int64)
    used = np.unique(faces)
    remap = np.full(n, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    mesh = TriangleMesh(pts[used], remap[faces])
    return recompute_normals(mesh)


# ---------------------------------------------------------------------------
# Cleanup
# ---------------------------------------------------------------------------

def clean_mesh(mesh):
    """Weld near-duplicate vertices and drop broken faces.

    Keeps at most two faces per edge (first two by face order), removes
    zero-area and duplicate faces, drops unreferenced vertices when any
    faces remain, and recomputes area-weighted normals.  Idempotent.
    """
    verts = mesh.vertices
    faces = mesh.faces
    if not len(verts):
        return mesh.copy()

    keys = np.round(verts / WELD_TOL).astype(np.int64)
    _, first_idx, inverse = np.unique(keys, axis=0, return_index=True,
                                      return_inverse=True)
    # keep first-occurrence order for determinism
    order = np.argsort(first_idx, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    inverse = rank[inverse]
    welded = verts[first_idx[order]]

    out_faces = []
    seen = set()
    edge_count = {}
    if len(faces):
        mapped = inverse[faces]
        for f in mapped:
            i, j, k = int(f[0]), int(f[1]), int(f[2])
            if i == j or j == k or i == k:
                continue
            key = tuple(sorted((i, j, k)))
            if key in seen:
                continue
            area = np.linalg.norm(np.cross(welded[j] - welded[i],
                                           welded[k] - welded[i]))
            if area < 1e-12:
                continue
            edges = [tuple(sorted(e)) for e in ((i, j), (j, k), (k, i))]
            if any(edge_count.get(e, 0) >= 2 for e in edges):
                continue
            for e in edges:
                edge_count[e] = edge_count.get(e, 0) + 1
            seen.add(key)
            out_faces.append((i, j, k))

    faces_arr = np.asarray(out_faces, dtype=np.int64).reshape(-1, 3)
    if len(faces_arr):
        used = np.unique(faces_arr)
        remap = np.full(len(welded), -1, dtype=np.int64)
        remap[used] = np.arange(len(used))
        out = TriangleMesh(welded[used], remap[faces_arr])
    else:
        out = TriangleMesh(welded, faces_arr)
    return recompute_normals(out)


# ---------------------------------------------------------------------------
# Quadric decimation
# ---------------------------------------------------------------------------

def _vertex_quadrics(verts, faces, curvature_weight, boundary_weight,
                     with_boundary):
    n = len(verts)
    quadrics = np.zeros((n, 4, 4))
    fn, areas = _face_geometry(verts, faces)
    area_sum = np.zeros(n)
    normal_sum = np.zeros((n, 3))
    for fi in range(len(faces)):
        nrm = fn[fi]
        d = -float(nrm @ verts[faces[fi, 0]])
        plane = np.array([nrm[0], nrm[1], nrm[2], d])
        k = np.outer(plane, plane) * max(areas[fi], 1e-12)
        for v in faces[fi]:
            quadrics[v] += k
            area_sum[v] += areas[fi]
            normal_sum[v] += fn[fi] * areas[fi]

    # curvature-scaled penalty: flat neighborhoods have |sum A n| = sum A
    ok = area_sum > 1e-12
    kappa = np.zeros(n)
    kappa[ok] = 1.0 - np.linalg.norm(normal_sum[ok], axis=1) / area_sum[ok]
    kappa = np.clip(kappa, 0.0, 1.0)
    quadrics *= (1.0 + curvature_weight * kappa)[:, None, None]

    if with_boundary:
        edge_faces = {}
        for fi, f in enumerate(faces):
            for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                edge_faces.setdefault(tuple(sorted(map(int, e))), []).append(fi)
        for (a, b), flist in edge_faces.items():
            if len(flist) != 1:
                continue
            ed = verts[b] - verts[a]
            elen = np.linalg.norm(ed)
            if elen < 1e-12:
                continue
            nb = np.cross(ed / elen, fn[flist[0]])
            ln = np.linalg.norm(nb)
            if ln < 1e-12:
                continue
            nb = nb / ln
            d = -float(nb @ verts[a])
            plane = np.array([nb[0], nb[1], nb[2], d])
            k = np.outer(plane, plane) * boundary_weight * elen * elen
            quadrics[a] += k
            quadrics[b] += k
    return quadrics


def _optimal_position(q, pa, pb):
    a = q[:3, :3]
    b = -q[:3, 3]
    try:
        pos = np.linalg.solve(a + 1e-9 * np.eye(3), b)
    except np.linalg.LinAlgError:
        pos = None
    candidates = []
    if pos is not None and np.isfinite(pos).all():
        candidates.append(pos)
    candidates.extend([0.5 * (pa + pb), pa, pb])
    best, best_cost = None, np.inf
    for p in candidates:
        h = np.array([p[0], p[1], p[2], 1.0])
        cost = float(h @ q @ h)
        if cost < best_cost:
            best, best_cost = p, cost
    return best, max(best_cost, 0.0)


def _collapse_to_count(mesh, target_count, curvature_weight, boundary_weight,
                       with_boundary):
    verts = mesh.vertices.copy()
    faces = [tuple(map(int, f)) for f in mesh.faces]
    n = len(verts)
    quadrics = _vertex_quadrics(verts, np.asarray(mesh.faces), curvature_weight,
                                boundary_weight, with_boundary)

    alive_v = np.ones(n, dtype=bool)
    alive_f = np.ones(len(faces), dtype=bool)
    vfaces = [set() for _ in range(n)]
    for fi, f in enumerate(faces):
        for v in f:
            vfaces[v].add(fi)
    face_keys = {}
    for fi, f in enumerate(faces):
        face_keys[tuple(sorted(f))] = fi

    version = np.zeros(n, dtype=np.int64)
    heap = []

    def neighbors(v):
        out = set()
        for fi in vfaces[v]:
            if alive_f[fi]:
                out.update(faces[fi])
        out.discard(v)
        return out

    def push_edge(u, v):
        if u > v:
            u, v = v, u
        pos, cost = _optimal_position(quadrics[u] + quadrics[v],
                                      verts[u], verts[v])
        heapq.heappush(heap, (cost, u, v, int(version[u]), int(version[v]),
                              tuple(pos)))

    edge_seen = set()
    for f in faces:
        for e in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = tuple(sorted(e))
            if key not in edge_seen:
                edge_seen.add(key)
                push_edge(*key)

    def would_flip(v_keep, v_gone, new_pos):
        for fi in vfaces[v_keep] | vfaces[v_gone]:
            if not alive_f[fi]:
                continue
            f = faces[fi]
            if v_keep in f and v_gone in f:
                continue
            tri = [verts[x] for x in f]
            before = np.cross(tri[1] - tri[0], tri[2] - tri[0])
            tri2 = [new_pos if x in (v_keep, v_gone) else verts[x] for x in f]
            after = np.cross(tri2[1] - tri2[0], tri2[2] - tri2[0])
            nb = np.linalg.norm(before)
            if nb < 1e-12:
                continue
            if float(before @ after) < 1e-12 * nb:
                return True
        return False

    n_alive = n
    while n_alive > target_count and heap:
        cost, u, v, vu, vv, pos = heapq.heappop(heap)
        if not (alive_v[u] and alive_v[v]):
            continue
        if version[u] != vu or version[v] != vv:
            continue
        if v not in neighbors(u):
            continue
        new_pos = np.asarray(pos)
        if would_flip(v, u, new_pos):
            # retry at the surviving endpoint before giving up
            if would_flip(v, u, verts[v]):
                continue
            new_pos = verts[v].copy()

        verts[v] = new_pos
        quadrics[v] = quadrics[v] + quadrics[u]
        alive_v[u] = False
        n_alive -= 1
        version[u] += 1
        version[v] += 1

        for fi in list(vfaces[u]):
            if not alive_f[fi]:
                continue
            f = faces[fi]
            old_key = tuple(sorted(f))
            if v in f:
                alive_f[fi] = False
                face_keys.pop(old_key, None)
                for x in f:
                    vfaces[x].discard(fi)
                continue
            new_f = tuple(v if x == u else x for x in f)
            new_key = tuple(sorted(new_f))
            face_keys.pop(old_key, None)
            if new_key in face_keys:
                alive_f[fi] = False
                for x in f:
                    vfaces[x].discard(fi)
                continue
            faces[fi] = new_f
            face_keys[new_key] = fi
            vfaces[u].discard(fi)
            vfaces[v].add(fi)

        for x in neighbors(v):
            push_edge(v, x)

    out_faces = np.asarray([faces[fi] for fi in range(len(faces))
                            if alive_f[fi]], dtype=np.int64).reshape(-1, 3)
    used = np.unique(out_faces) if len(out_faces) else np.nonzero(alive_v)[0]
    remap = np.full(n, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    out = TriangleMesh(verts[used],
                       remap[out_faces] if len(out_faces) else out_faces)
    return recompute_normals(out)


def decimate_qem(mesh, target_ratio, path="quality",
                 curvature_weight=CURVATURE_WEIGHT,
                 boundary_weight=BOUNDARY_WEIGHT):
    """Remove target_ratio of the vertices by quadric edge collapse.

    The quality path is a single heap pass with boundary-edge quadrics;
    the speed path splits the reduction into five equal sub-steps with
    cleanup and normal recomputation after each.
    """
    if not 0 <= target_ratio < 1:
        raise ConfigError("target_ratio must be in [0, 1)")
    if path not in ("quality", "speed"):
        raise ConfigError(f"unknown decimation path {path!r}")
    if target_ratio == 0:
        return mesh.copy()
    n0 = mesh.n_vertices
    target = int(round((1.0 - target_ratio) * n0))
    return decimate_to_count(mesh, target, path=path,
                             curvature_weight=curvature_weight,
                             boundary_weight=boundary_weight)


def decimate_to_count(mesh, target_count, path="quality",
                      curvature_weight=CURVATURE_WEIGHT,
                      boundary_weight=BOUNDARY_WEIGHT):
    """Decimate to an absolute vertex count (clamped at the floor)."""
    if target_count < MIN_DECIMATED_VERTICES:
        warnings.warn(f"decimation target {target_count} clamped to "
                      f"{MIN_DECIMATED_VERTICES}", stacklevel=2)
        target_count = MIN_DECIMATED_VERTICES
    if mesh.n_vertices <= target_count:
        return mesh.copy()
    if path == "quality":
        return _collapse_to_count(mesh, target_count, curvature_weight,
                                  boundary_weight, with_boundary=True)
    current = mesh
    n0 = mesh.n_vertices
    for step in range(1, 6):
        sub_target = int(round(n0 - (n0 - target_count) * step / 5.0))
        if current.n_vertices > sub_target:
            current = _collapse_to_count(current, sub_target, curvature_weight,
                                         boundary_weight, with_boundary=False)
        current = clean_mesh(current)
    return current


def smooth(mesh, iterations, strength=0.5):
    """Uniform-weight Laplacian smoothing, connectivity preserved."""
    if iterations < 0:
        raise ConfigError("iterations must be >= 0")
    out = mesh.copy()
    if iterations == 0 or not len(out.faces):
        return out
    n = out.n_vertices
    nbrs = [set() for _ in range(n)]
    for f in out.faces:
        i, j, k = map(int, f)
        nbrs[i].update((j, k))
        nbrs[j].update((i, k))
        nbrs[k].update((i, j))
    idx = [np.fromiter(s, dtype=np.int64) for s in nbrs]
    verts = out.vertices
    for _ in range(iterations):
        new = verts.copy()
        for v in range(n):
            if len(idx[v]):
                new[v] = verts[v] + strength * (verts[idx[v]].mean(axis=0)
                                                - verts[v])
        verts = new
    out.vertices = verts
    return recompute_normals(out)


# ---------------------------------------------------------------------------
# LOD hierarchy
# ---------------------------------------------------------------------------

@dataclass
class LodSet:
    levels: dict
    original_vertices: int
    rates: dict = field(default_factory=lambda: dict(LOD_LEVELS))

    def order(self):
        return [name for name, _ in LOD_LEVELS]

    def __getitem__(self, name):
        return self.levels[name]

    def counts(self):
        return {name: self.levels[name].n_vertices for name in self.order()}


def generate_lods(mesh, path="quality"):
    """Six LOD levels by chained decimation at the standard rates.

    Targets are absolute counts computed from the original mesh so band
    errors do not compound down the chain; each level simplifies the
    one above it and is cleaned before handoff.
    """
    n0 = mesh.n_vertices
    levels = {}
    prev = mesh.copy()
    for name, rate in LOD_LEVELS:
        if rate == 0.0:
            levels[name] = prev.copy()
            continue
        target = int(round((1.0 - rate) * n0))
        nxt = decimate_to_count(prev, target, path=path)
        nxt = clean_mesh(nxt)
        levels[name] = nxt
        prev = nxt
    return LodSet(levels=levels, original_vertices=n0)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_ply(mesh, path):
    with open(path, "w") as fh:
        has_n = mesh.vertex_normals is not None
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {mesh.n_vertices}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        if has_n:
            fh.write("property float nx\nproperty float ny\nproperty float nz\n")
        fh.write(f"element face {mesh.n_faces}\n")
        fh.write("property list uchar int vertex_indices\nend_header\n")
        for i, v in enumerate(mesh.vertices):
            row = f"{v[0]:.6f} {v[1]:.6f} {v[2]:.6f}"
            if has_n:
                nrm = mesh.vertex_normals[i]
                row += f" {nrm[0]:.6f} {nrm[1]:.6f} {nrm[2]:.6f}"
            fh.write(row + "\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def load_ply(path):
    with open(path) as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise ConfigError(f"{path} is not a PLY file")
        n_vert = n_face = 0
        props = []
        element = None
        while True:
            line = fh.readline()
            if not line:
                raise ConfigError("unexpected end of PLY header")
            line = line.strip()
            if line == "end_header":
                break
            parts = line.split()
            if parts[0] == "element":
                element = parts[1]
                if element == "vertex":
                    n_vert = int(parts[2])
                elif element == "face":
                    n_face = int(parts[2])
            elif parts[0] == "property" and element == "vertex":
                props.append(parts[-1])
        verts = np.empty((n_vert, 3))
        normals = np.empty((n_vert, 3)) if "nx" in props else None
        col = {name: i for i, name in enumerate(props)}
        for i in range(n_vert):
            vals = fh.readline().split()
            verts[i] = [float(vals[col[c]]) for c in ("x", "y", "z")]
            if normals is not None:
                normals[i] = [float(vals[col[c]]) for c in ("nx", "ny", "nz")]
        faces = np.empty((n_face, 3), dtype=np.int64)
        for i in range(n_face):
            vals = fh.readline().split()
            if int(vals[0]) != 3:
                raise ConfigError("only triangle faces are supported")
            faces[i] = [int(v) for v in vals[1:4]]
    return TriangleMesh(verts, faces, normals)


def save_obj(mesh, path):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.6f} {v[1]:.6f} {v[2]:.6f}\n")
        if mesh.vertex_normals is not None:
            for nrm in mesh.vertex_normals:
                fh.write(f"vn {nrm[0]:.6f} {nrm[1]:.6f} {nrm[2]:.6f}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_obj(path):
    verts, normals, faces = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "vn":
                normals.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:4]]
                faces.append(idx)
    return TriangleMesh(np.asarray(verts), np.asarray(faces, dtype=np.int64),
                        np.asarray(normals) if normals else None)
