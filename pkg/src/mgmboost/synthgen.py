"""Synthetic instance generators, affinity builders, and the point-set
file loader.

Two families of instances are produced: random weighted graphs (uniform
reference weights, Gaussian edge deformation, optional outlier nodes and
edge-density subsampling) and random 2-D point sets whose edge weights
are pairwise Euclidean distances. Both are pure functions of their
parameter struct, bit-reproducible for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import Delaunay, QhullError

from .core import AffinityMatrix, AffinitySet, MatchConfig, Permutation
from .pairwise import solve_pairwise


@dataclass(frozen=True)
class SynthParams:
    """Knobs of the synthetic protocols; see the generator docstrings."""

    n_graphs: int
    inliers: int
    outliers: int = 0
    deform: float = 0.0        # std of the Gaussian edge/point disturbance
    density: float = 1.0       # probability an edge survives subsampling
    sigma2: float = 0.05 ** 2  # affinity kernel sensitivity (squared)
    coverage: float = 1.0      # fraction of pairs initialized by the solver
    seed: int = 0

    def __post_init__(self):
        if self.n_graphs < 2 or self.inliers < 1 or self.outliers < 0:
            raise ValueError("need n_graphs >= 2, inliers >= 1, outliers >= 0")
        if self.deform < 0:
            raise ValueError("deform must be >= 0")
        if not 0.0 <= self.density <= 1.0 or not 0.0 <= self.coverage <= 1.0:
            raise ValueError("density and coverage live in [0, 1]")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")

    @property
    def n_nodes(self):
        return self.inliers + self.outliers


@dataclass
class GraphInstance:
    """One weighted graph with ground-truth labeling to the reference
    ordering (inliers occupy reference slots 0..inlier_count-1)."""

    adjacency: np.ndarray
    inlier_count: int
    truth: Permutation
    coords: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.array_equal(a, a.T) or np.any(np.diag(a) != 0):
            raise ValueError("adjacency must be symmetric with zero diagonal")
        if not 0 <= self.inlier_count <= a.shape[0]:
            raise ValueError("inlier_count out of range")
        if self.truth.n != a.shape[0]:
            raise ValueError("truth permutation size must match node count")
        self.adjacency = a

    @property
    def n(self):
        return self.adjacency.shape[0]

    @property
    def inlier_rows(self):
        """Indices of this instance's nodes that are common inliers."""
        return np.flatnonzero(self.truth.perm < self.inlier_count)

    def padded(self, n_total):
        """Zero-padded copy with isolated dummy nodes appended; dummies map
        to fresh reference slots past the existing ones."""
        if n_total < self.n:
            raise ValueError("cannot pad to a smaller size")
        if n_total == self.n:
            return self
        if self.coords is not None:
            raise ValueError("cannot dummy-pad instances carrying coordinates")
        adj = np.zeros((n_total, n_total))
        adj[:self.n, :self.n] = self.adjacency
        perm = np.concatenate([self.truth.perm, np.arange(self.n, n_total)])
        return GraphInstance(adj, self.inlier_count, Permutation(perm))


def _relabel(adjacency, coords, inlier_count, rng):
    """Shuffle node order; truth maps instance positions back to the
    reference ordering."""
    order = rng.permutation(adjacency.shape[0])
    inv = np.empty_like(order)
    inv[order] = np.arange(order.size)
    adj = adjacency[np.ix_(order, order)]
    pts = coords[order] if coords is not None else None
    # instance node u is reference node order[u]
    return GraphInstance(adj, inlier_count, Permutation(order), pts)


def _apply_density(upper, rng, density):
    mask = rng.uniform(size=upper.size) < density
    return upper * mask


def gen_random_graphs(p):
    """Random weighted graphs around a common reference.

    The reference assigns each inlier edge a uniform [0, 1] weight. Every
    instance perturbs surviving edges with N(0, deform) noise, grows
    ``outliers`` extra nodes with fresh uniform incident weights, drops
    each edge independently with probability 1 - density, clamps negative
    weights to zero, and finally shuffles node order (truth recorded).
    """
    rng = np.random.default_rng(p.seed)
    n_i, n = p.inliers, p.n_nodes
    iu_full = np.triu_indices(n, 1)
    ref = np.zeros((n_i, n_i))
    iu_ref = np.triu_indices(n_i, 1)
    ref[iu_ref] = rng.uniform(size=iu_ref[0].size)

    instances = []
    for _ in range(p.n_graphs):
        full = np.zeros((n, n))
        full[:n_i, :n_i][iu_ref] = ref[iu_ref] + rng.normal(0.0, p.deform, size=iu_ref[0].size)
        outlier_edges = (iu_full[0] >= n_i) | (iu_full[1] >= n_i)
        full[iu_full[0][outlier_edges], iu_full[1][outlier_edges]] = rng.uniform(
            size=int(outlier_edges.sum()))
        w = _apply_density(full[iu_full], rng, p.density)
        w = np.maximum(w, 0.0)   # weights live in [0, 1]; negative = absent
        adj = np.zeros((n, n))
        adj[iu_full] = w
        adj += adj.T
        instances.append(_relabel(adj, None, n_i, rng))
    return instances


def gen_random_points(p):
    """Random 2-D point sets around common reference inliers.

    Reference inliers are standard-normal points; each instance copies
    them with N(0, deform) jitter and adds ``outliers`` fresh
    standard-normal points. Edge weights are pairwise Euclidean
    distances, subsampled by ``density`` like the random-graph protocol.
    """
    rng = np.random.default_rng(p.seed)
    n_i, n = p.inliers, p.n_nodes
    ref_pts = rng.normal(size=(n_i, 2))
    iu = np.triu_indices(n, 1)

    instances = []
    for _ in range(p.n_graphs):
        pts = np.vstack([ref_pts + rng.normal(0.0, p.deform, size=(n_i, 2)),
                         rng.normal(size=(p.outliers, 2))]) if p.outliers else \
            ref_pts + rng.normal(0.0, p.deform, size=(n_i, 2))
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        w = _apply_density(dist[iu], rng, p.density)
        adj = np.zeros((n, n))
        adj[iu] = w
        adj += adj.T
        instances.append(_relabel(adj, pts, n_i, rng))
    return instances


def _directed_edges(adjacency):
    """(rows, cols, weights) of all nonzero directed edges."""
    i, j = np.nonzero(adjacency)
    return i, j, adjacency[i, j]


def _assemble_affinity(n, rows, cols, vals, storage):
    if storage is None:
        storage = "dense" if n <= 12 else "sparse"
    if storage == "dense":
        k = np.zeros((n * n, n * n))
        k[rows, cols] = vals
        return AffinityMatrix(k, storage="dense", validate=False)
    k = sp.coo_matrix((vals, (rows, cols)), shape=(n * n, n * n)).tocsr()
    return AffinityMatrix(k, storage="sparse", validate=False)


def _pad_pair(g1, g2):
    n = max(g1.n, g2.n)
    return g1.padded(n), g2.padded(n), n


def _gauss_entries(e1, e2, n, sigma2):
    i1, j1, w1 = e1
    i2, j2, w2 = e2
    vals = np.exp(-((w1[None, :] - w2[:, None]) ** 2) / sigma2)
    rows = (i2[:, None] * n + i1[None, :]).ravel()
    cols = (j2[:, None] * n + j1[None, :]).ravel()
    return rows, cols, vals.ravel()


def build_affinity_gauss(g1, g2, sigma2, storage=None):
    """Gaussian edge-affinity matrix between two instances.

    Entry for edge pair ((i, j), (a, b)) is exp(-(q_ij - q_ab)^2 / sigma2)
    wherever both edges exist, zero otherwise; node-to-node (diagonal)
    affinities stay zero so matching is driven purely by structure.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    g1, g2, n = _pad_pair(g1, g2)
    rows, cols, vals = _gauss_entries(_directed_edges(g1.adjacency),
                                      _directed_edges(g2.adjacency), n, sigma2)
    return _assemble_affinity(n, rows, cols, vals, storage)


def delaunay_edges(coords):
    """Undirected edge set of the Delaunay triangulation of 2-D points."""
    coords = np.asarray(coords, dtype=float)
    if coords.shape[0] < 3:
        raise ValueError("Delaunay triangulation needs at least 3 points")
    try:
        tri = Delaunay(coords)
    except QhullError as exc:
        raise ValueError("Delaunay triangulation undefined "
                         "(fewer than 3 non-collinear points)") from exc
    edges = set()
    for simplex in tri.simplices:
        for a in range(3):
            for b in range(a + 1, 3):
                u, v = int(simplex[a]), int(simplex[b])
                edges.add((min(u, v), max(u, v)))
    return sorted(edges)


def _delaunay_geometry(g):
    if g.coords is None:
        raise ValueError("instance carries no coordinates")
    edges = np.asarray(delaunay_edges(g.coords), dtype=np.int64)
    d = g.coords[edges[:, 1]] - g.coords[edges[:, 0]]
    lengths = np.linalg.norm(d, axis=1)
    lengths = lengths / lengths.max()   # normalize by the largest edge length
    angles = np.arctan2(np.abs(d[:, 1]), np.abs(d[:, 0]))   # vs horizontal, [0, pi/2]
    both = np.concatenate([edges, edges[:, ::-1]])
    return both[:, 0], both[:, 1], np.tile(lengths, 2), np.tile(angles, 2)


def build_affinity_len_angle(g1, g2, sigma2, beta_w, sigma2_angle=None, storage=None):
    """Length+angle affinity on Delaunay edges of two coordinate instances.

    A convex combination beta_w * K_len + (1 - beta_w) * K_ang of two
    Gaussian kernels: one on edge lengths (normalized per graph by the
    largest Delaunay edge), one on each edge's absolute angle to the
    horizontal. The angle kernel reuses sigma2 unless overridden.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    if not 0.0 <= beta_w <= 1.0:
        raise ValueError("beta_w must lie in [0, 1]")
    if g1.n != g2.n:
        raise ValueError("coordinate instances must have equal node counts")
    s2a = sigma2 if sigma2_angle is None else sigma2_angle
    n = g1.n
    i1, j1, l1, t1 = _delaunay_geometry(g1)
    i2, j2, l2, t2 = _delaunay_geometry(g2)
    k_len = np.exp(-((l1[None, :] - l2[:, None]) ** 2) / sigma2)
    k_ang = np.exp(-((t1[None, :] - t2[:, None]) ** 2) / s2a)
    vals = beta_w * k_len + (1.0 - beta_w) * k_ang
    rows = (i2[:, None] * n + i1[None, :]).ravel()
    cols = (j2[:, None] * n + j1[None, :]).ravel()
    return _assemble_affinity(n, rows, cols, vals.ravel(), storage)


def load_pointset(path, n_inliers=None, n_outliers=0, seed=0, max_frames=None):
    """Load annotated point frames from a plain-text file.

    Format: first line ``n_frames n_points``; then, per frame, n_points
    lines of ``x y``. If the file carries one extra line per frame it is
    read as that frame's annotation permutation (token u gives the
    annotation id of point line u); otherwise points are assumed to be
    listed in annotation order.

    With ``n_inliers`` set, that many annotation ids are chosen (seeded,
    shared across frames) as the common inliers and ``n_outliers`` ids
    are drawn per frame from the rest; node order is then shuffled with
    the truth recorded. Without it, every point is an inlier.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]
    lines = [(idx + 1, ln) for idx, ln in enumerate(lines) if ln]
    if not lines:
        raise ValueError("line 1: empty point-set file")
    header_no, header = lines[0]
    parts = header.split()
    if len(parts) != 2:
        raise ValueError(f"line {header_no}: header must be 'n_frames n_points'")
    try:
        n_frames, n_points = int(parts[0]), int(parts[1])
    except ValueError:
        raise ValueError(f"line {header_no}: header must hold two integers") from None
    if n_frames < 1 or n_points < 1:
        raise ValueError(f"line {header_no}: frame and point counts must be positive")

    body = lines[1:]
    with_perms = len(body) == n_frames * (n_points + 1)
    if not with_perms and len(body) != n_frames * n_points:
        raise ValueError(f"line {body[-1][0] if body else header_no}: expected "
                         f"{n_frames * n_points} coordinate lines "
                         f"(or {n_frames * (n_points + 1)} with permutation lines), "
                         f"got {len(body)}")
    per_frame = n_points + (1 if with_perms else 0)
    frames = []
    for f in range(n_frames):
        chunk = body[f * per_frame:(f + 1) * per_frame]
        pts = np.empty((n_points, 2))
        for row, (no, ln) in enumerate(chunk[:n_points]):
            toks = ln.split()
            if len(toks) != 2:
                raise ValueError(f"line {no}: expected 'x y', got {len(toks)} column(s)")
            try:
                pts[row] = [float(toks[0]), float(toks[1])]
            except ValueError:
                raise ValueError(f"line {no}: non-numeric coordinate") from None
        if with_perms:
            no, ln = chunk[n_points]
            toks = ln.split()
            if len(toks) != n_points:
                raise ValueError(f"line {no}: permutation line must hold {n_points} ids")
            try:
                ann = Permutation([int(t) for t in toks])
            except ValueError:
                raise ValueError(f"line {no}: invalid annotation permutation") from None
            by_annotation = np.empty_like(pts)
            by_annotation[ann.perm] = pts
            pts = by_annotation
        frames.append(pts)

    rng = np.random.default_rng(seed)
    if max_frames is not None and max_frames < n_frames:
        picked = np.sort(rng.choice(n_frames, size=max_frames, replace=False))
        frames = [frames[f] for f in picked]
    if n_inliers is None:
        n_inliers, n_outliers = n_points, 0
        inlier_ids = np.arange(n_points)
    else:
        if n_inliers + n_outliers > n_points or n_inliers < 1:
            raise ValueError("cannot select more landmarks than annotated")
        inlier_ids = rng.choice(n_points, size=n_inliers, replace=False)
    rest = np.setdiff1d(np.arange(n_points), inlier_ids)

    instances = []
    for pts in frames:
        out_ids = rng.choice(rest, size=n_outliers, replace=False) if n_outliers else \
            np.empty(0, dtype=np.int64)
        ids = np.concatenate([inlier_ids, out_ids]).astype(np.int64)
        sel = pts[ids]
        dist = np.linalg.norm(sel[:, None, :] - sel[None, :, :], axis=2)
        np.fill_diagonal(dist, 0.0)
        instances.append(_relabel(dist, sel, n_inliers, rng))
    return instances


def build_affinity_set(instances, sigma2=None, kind="gauss", beta_w=0.9,
                       sigma2_angle=None, storage=None):
    """All pairwise affinity matrices for a list of instances."""
    mats = {}
    for i in range(len(instances) - 1):
        for j in range(i + 1, len(instances)):
            if kind == "gauss":
                mats[(i, j)] = build_affinity_gauss(instances[i], instances[j],
                                                    sigma2, storage)
            elif kind == "len_angle":
                mats[(i, j)] = build_affinity_len_angle(instances[i], instances[j],
                                                        sigma2, beta_w, sigma2_angle,
                                                        storage)
            else:
                raise ValueError(f"unknown affinity kind {kind!r}")
    return AffinitySet(len(instances), mats)


def truth_config(instances):
    """Ground-truth matching configuration induced by the instances'
    reference labelings; fully consistent by construction."""
    n = instances[0].n
    pairs = {}
    for i in range(len(instances) - 1):
        inv_i = instances[i].truth
        for j in range(i + 1, len(instances)):
            pairs[(i, j)] = inv_i.compose(instances[j].truth.inverse())
    return MatchConfig(len(instances), n, pairs)


def init_config(kset, coverage, seed, solver=None):
    """Initial matching configuration over an affinity set.

    A seeded uniform choice of round(coverage * P) of the P graph pairs is
    solved with the pairwise solver; every remaining pair receives a
    uniformly random permutation.
    """
    if not 0.0 <= coverage <= 1.0:
        raise ValueError("coverage must lie in [0, 1]")
    solver = solver or solve_pairwise
    rng = np.random.default_rng(seed)
    all_pairs = kset.pairs()
    n_solved = int(round(coverage * len(all_pairs)))
    solved_idx = set(rng.choice(len(all_pairs), size=n_solved, replace=False).tolist())
    pairs = {}
    for idx, (i, j) in enumerate(all_pairs):
        if idx in solved_idx:
            pairs[(i, j)] = solver(kset.get(i, j))
        else:
            pairs[(i, j)] = Permutation.random(kset.n, rng)
    return MatchConfig(kset.N, kset.n, pairs)


def save_instances(path, instances):
    """Dump instances to a .npz archive (stable round-trip format)."""
    has_coords = instances[0].coords is not None
    np.savez(path,
             adjacency=np.stack([g.adjacency for g in instances]),
             truth=np.stack([g.truth.perm for g in instances]),
             inlier_counts=np.array([g.inlier_count for g in instances]),
             coords=(np.stack([g.coords for g in instances]) if has_coords
                     else np.empty(0)))


def load_instances(path):
    with np.load(path) as data:
        adjacency = data["adjacency"]
        truth = data["truth"]
        counts = data["inlier_counts"]
        coords = data["coords"] if data["coords"].size else None
    return [GraphInstance(adjacency[g], int(counts[g]), Permutation(truth[g]),
                          coords[g] if coords is not None else None)
            for g in range(adjacency.shape[0])]
