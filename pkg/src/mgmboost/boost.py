"""Multi-graph matching by iterative score boosting.

Each iteration rewrites every pairwise matching X_ij with the best
composition X_ik X_kj over anchor graphs k, where "best" is one of
several evaluation functions: raw normalized affinity score, pairwise
consistency, or weighted blends whose consistency weight grows
geometrically across iterations (graduated regularization). All updates
within an iteration read the previous snapshot only, so per-pair updates
are order-independent and the whole sweep is deterministic. Optional
post-processing rewrites the result into an exactly cycle-consistent
configuration via maximum-spanning-tree composition on a super graph, or
spectral synchronization when there are more graphs than nodes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (MatchConfig, Permutation, ScoreNormalizer, total_score)
from .consistency import (InlierEstimate, elicited_pairwise_consistency_all,
                          elicited_unary_consistency_all, is_fully_consistent,
                          keep_masks, overall_consistency,
                          pairwise_consistency_all, unary_consistency_all)
from .pairwise import hungarian

MODES = ("isb", "isb_cst", "isb_2nd", "isb_gc", "isb_gc_inv", "isb_gc_u", "isb_gc_p")
EVAL_KINDS = ("score", "cst", "gc", "gc_inv", "gc_u", "gc_p")

# Modes whose iterates may cycle instead of converging; for these the best
# iterate along the trace is returned rather than the last one.
_CYCLING_MODES = ("isb_cst", "isb_gc_p")


@dataclass(frozen=True)
class BoostParams:
    mode: str = "isb_gc"
    t0: int = 2                  # pure-score iterations before weighting kicks in
    t_max: int = 6
    lambda0: float = 0.2         # initial consistency weight
    beta: float = 1.1            # per-iteration growth factor of the weight
    gamma: float = 0.3           # consistency threshold picking the post-processing route
    delta: float = 1.0           # stop when the total update norm falls below this
    sample_rate: float = 1.0     # fraction of anchor graphs tried per pair
    elicit: InlierEstimate | None = None
    enforce_final_consistency: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.t0 < 0 or self.t_max < 0:
            raise ValueError("iteration counts must be >= 0")
        if not 0.0 <= self.lambda0 <= 1.0:
            raise ValueError("lambda0 must lie in [0, 1]")
        if self.beta < 1.0:
            raise ValueError("beta must be >= 1")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.sample_rate <= 1.0:
            raise ValueError("sample_rate must lie in (0, 1]")


@dataclass
class BoostTrace:
    """Per-iteration snapshots, starting with the initial configuration."""

    scores: list[float] = field(default_factory=list)
    consistencies: list[float] = field(default_factory=list)
    changes: list[int] = field(default_factory=list)
    times: list[float] = field(default_factory=list)

    def record(self, score, consistency, changed, elapsed):
        self.scores.append(score)
        self.consistencies.append(consistency)
        self.changes.append(changed)
        self.times.append(elapsed)

    def __len__(self):
        return len(self.scores)


class _Dims:
    """Shape-only stand-in for a configuration: the consistency helpers
    need just N and n alongside an explicit index table."""

    __slots__ = ("N", "n")

    def __init__(self, n_graphs, n_nodes):
        self.N = n_graphs
        self.n = n_nodes


class _IterTables:
    """Frozen per-iteration state shared by every pair update."""

    def __init__(self, dims, table, kset, kind, norm, est=None, score_cache=None):
        self.dims = dims
        self.kset = kset
        self.kind = kind
        self.norm = norm
        self.est = est
        self.table = table
        self.cache = score_cache if score_cache is not None else {}
        self.keep = None
        if est is not None:
            self.keep = keep_masks(dims, est, kset, table)
        self.cu = None
        self.cp = None
        if kind == "gc_u":
            self.cu = (elicited_unary_consistency_all(dims, est, kset, table, self.keep)
                       if est is not None else unary_consistency_all(dims, table))
        elif kind == "gc_p":
            self.cp = (elicited_pairwise_consistency_all(dims, est, kset, table, self.keep)
                       if est is not None else pairwise_consistency_all(dims, table))

    def scores_for(self, i, j, cands):
        """Normalized (possibly row-masked) affinity scores of candidate
        index vectors for pair (i, j). Duplicate candidates are scored
        once (keyed by their bytes), and sparse-matrix scores are also
        memoized across iterations since they dominate the sweep cost."""
        k_mat = self.kset.get(i, j)
        keep_i = self.keep[i] if self.keep is not None else None
        mask_key = keep_i.tobytes() if keep_i is not None else b""
        count = len(cands)
        vals = np.empty(count)
        keys = [cands[c].tobytes() for c in range(count)]
        first = {}
        missing = []
        for c, key in enumerate(keys):
            if key in first:
                continue
            first[key] = c
            cache_key = (i, j, key, mask_key)
            hit = self.cache.get(cache_key) if k_mat.is_sparse else None
            if hit is None:
                missing.append((c, cache_key))
            else:
                vals[c] = hit
        if missing:
            if keep_i is None:
                raw = k_mat.quad_form_batch(np.stack([cands[c] for c, _ in missing]))
            else:
                raw = [k_mat.quad_form_masked(cands[c], keep_i) for c, _ in missing]
            for (c, cache_key), value in zip(missing, raw):
                v = float(value) / self.norm.value
                if k_mat.is_sparse:
                    self.cache[cache_key] = v
                vals[c] = v
        for c, key in enumerate(keys):
            vals[c] = vals[first[key]]
        return vals

    def cp_of_candidates(self, i, j, cands, comps):
        """Pairwise consistency of each candidate against the snapshot."""
        mism = cands[:, None, :] != comps[None, :, :]
        if self.keep is not None:
            mism = mism & self.keep[i][None, None, :]
            denom = self.est.n_est * self.dims.N
        else:
            denom = self.dims.n * self.dims.N
        return 1.0 - mism.sum(axis=(1, 2)) / denom


def _anchor_pool(i, j, n_graphs, sample_rate, rng):
    """Anchors tried for pair (i, j). Both k = i and k = j reproduce the
    incumbent matching, so the incumbent always competes (listed first for
    tie-breaking); the remaining graphs are sampled without replacement
    and scanned in ascending order."""
    pool = [k for k in range(n_graphs) if k != i and k != j]
    if sample_rate < 1.0 and pool:
        m = max(1, int(round(sample_rate * len(pool))))
        if rng is None:
            raise ValueError("anchor subsampling needs an rng")
        picked = rng.choice(len(pool), size=m, replace=False)
        pool = [pool[idx] for idx in sorted(picked.tolist())]
    return [i, j] + pool


def _first_max(values):
    """Index of the maximum, lowest index on exact ties."""
    return int(np.argmax(values))


def _pair_best(i, j, tbl, lam, sample_rate, rng):
    """Best anchor and replacement candidate for one pair under the
    iteration's evaluation function. Duplicate candidate matrices are
    scored once (inside scores_for), while anchor-dependent consistency
    terms stay per-anchor so the argmax is exact. The anchor scan order
    makes exact ties keep the incumbent, then the smallest anchor."""
    table = tbl.table
    n_graphs = table.shape[0]
    rows = np.arange(n_graphs)[:, None]
    comps = table[:, j][rows, table[i]]   # [k] = X_ik X_kj
    anchors = _anchor_pool(i, j, n_graphs, sample_rate, rng)
    cands = comps[anchors]
    kind = tbl.kind

    if kind == "score":
        vals = tbl.scores_for(i, j, cands)
    elif kind == "cst":
        vals = tbl.cp_of_candidates(i, j, cands, comps)
    elif kind in ("gc", "gc_inv"):
        j_vals = tbl.scores_for(i, j, cands)
        c_vals = tbl.cp_of_candidates(i, j, cands, comps)
        if kind == "gc":
            vals = (1.0 - lam) * j_vals + lam * c_vals
        else:
            vals = lam * j_vals + (1.0 - lam) * c_vals
    elif kind in ("gc_u", "gc_p"):
        j_vals = tbl.scores_for(i, j, cands) if lam < 1.0 else np.zeros(len(anchors))
        if kind == "gc_u":
            cons = tbl.cu[np.array(anchors)]
        else:
            cons = np.sqrt(tbl.cp[i, anchors] * tbl.cp[np.array(anchors), j])
        vals = (1.0 - lam) * j_vals + lam * cons
    else:
        raise ValueError(f"unknown evaluation kind {kind!r}")
    best = _first_max(vals)
    return anchors[best], cands[best]


def best_anchor(i, j, cfg_prev, kset, kind, lam=0.0, est=None, sample_rate=1.0,
                rng=None, norm=None, tables=None):
    """Best third-party graph k and composed candidate X_ik X_kj for one
    pair, under one of the evaluation kinds: "score" (normalized affinity
    only), "cst" (pairwise consistency only), "gc"/"gc_inv" (weighted
    blends), "gc_u" (unary-consistency proxy), "gc_p" (geometric-mean
    pairwise proxy). With ``est`` set, score and consistency terms are
    replaced by their inlier-elicited variants."""
    if i == j:
        raise ValueError("pair indices must differ")
    if kind not in EVAL_KINDS:
        raise ValueError(f"kind must be one of {EVAL_KINDS}")
    if tables is None:
        if norm is None:
            norm = ScoreNormalizer.from_initial(cfg_prev, kset)
        tables = _IterTables(_Dims(cfg_prev.N, cfg_prev.n), cfg_prev.perm_table(),
                             kset, kind, norm, est)
    anchor, cand = _pair_best(i, j, tables, lam, sample_rate, rng)
    return anchor, Permutation(cand)


def _pair_best_2nd(i, j, tbl, sample_rate, rng):
    """Second-order search: best X_iv X_vu X_uj over anchor pairs (u, v),
    scored by normalized affinity alone."""
    table = tbl.table
    n_graphs = table.shape[0]
    pool = _anchor_pool(i, j, n_graphs, sample_rate, rng)
    cands = []
    origins = []
    for v in pool:
        first = np.take_along_axis(table[v], np.broadcast_to(table[i, v], table[v].shape),
                                   axis=1)   # [u] = X_iv then X_vu
        for u in pool:
            cands.append(table[u, j][first[u]])
            origins.append((u, v))
    cands = np.asarray(cands)
    uniq_rows, first_pos = np.unique(cands, axis=0, return_index=True)
    order = np.sort(first_pos)
    uniq = cands[order]
    vals = tbl.scores_for(i, j, list(uniq))
    best = order[_first_max(vals)]
    return origins[best], cands[best]


def _eval_kind(mode, t, t0):
    if mode in ("isb", "isb_2nd"):
        return "score"
    if mode == "isb_cst":
        return "cst"
    if t <= t0:
        return "score"
    return {"isb_gc": "gc", "isb_gc_inv": "gc_inv",
            "isb_gc_u": "gc_u", "isb_gc_p": "gc_p"}[mode]


def run_boost(cfg0, kset, params):
    """Run one boosting algorithm from an initial configuration.

    Returns the final configuration and the per-iteration trace. The
    score normalizer is fixed from the initial configuration. Graduated
    modes spend the first t0 iterations on pure score boosting, then
    grow the consistency weight by min(1, beta * lam) after each weighted
    sweep. Iteration stops early once the total update norm drops below
    delta (with the default, as soon as no pair changes). Modes that can
    cycle return the best iterate seen instead of the last one.
    """
    if params.t_max == 0:
        trace = BoostTrace()
        trace.record(total_score(cfg0, kset) / ScoreNormalizer.from_initial(cfg0, kset).value,
                     overall_consistency(cfg0), 0, 0.0)
        return cfg0, trace

    norm = ScoreNormalizer.from_initial(cfg0, kset)
    if params.elicit is not None and params.elicit.n_est > cfg0.n:
        raise ValueError("elicit.n_est exceeds the node count")
    rng = np.random.default_rng(params.seed)
    cache = {}
    trace = BoostTrace()
    dims = _Dims(cfg0.N, cfg0.n)
    table = cfg0.perm_table()
    upper = [(i, j) for i in range(dims.N - 1) for j in range(i + 1, dims.N)]

    def snapshot(tab):
        score = sum(kset.get(i, j).quad_form(tab[i, j]) for i, j in upper) / norm.value
        return score, float(unary_consistency_all(dims, tab).mean())

    started = time.perf_counter()
    score0, cons0 = snapshot(table)
    trace.record(score0, cons0, 0, time.perf_counter() - started)
    lam = params.lambda0
    best_val, best_table = -np.inf, table
    if params.mode in _CYCLING_MODES:
        best_val = cons0 if params.mode == "isb_cst" else score0

    ident = np.arange(dims.n)
    for t in range(1, params.t_max + 1):
        kind = _eval_kind(params.mode, t, params.t0)
        weighted = params.mode.startswith("isb_gc") and t > params.t0
        tbl = _IterTables(dims, table, kset, kind, norm, params.elicit, cache)
        new_table = table.copy()
        changed = 0
        change_norm = 0.0
        for i, j in upper:
            if params.mode == "isb_2nd":
                _, cand = _pair_best_2nd(i, j, tbl, params.sample_rate, rng)
            else:
                _, cand = _pair_best(i, j, tbl, lam if weighted else 0.0,
                                     params.sample_rate, rng)
            mism = int((cand != table[i, j]).sum())
            if mism:
                changed += 1
                change_norm += 2.0 * mism
                new_table[i, j] = cand
                new_table[j, i][cand] = ident
        table = new_table
        score_t, cons_t = snapshot(table)
        trace.record(score_t, cons_t, changed, time.perf_counter() - started)
        if params.mode in _CYCLING_MODES:
            cur = cons_t if params.mode == "isb_cst" else score_t
            if cur > best_val:
                best_val, best_table = cur, table
        if change_norm < params.delta and (weighted or not params.mode.startswith("isb_gc")):
            break
        if weighted:
            lam = min(1.0, params.beta * lam)

    if params.mode in _CYCLING_MODES:
        table = best_table
    cfg = MatchConfig.from_table(table)
    if params.enforce_final_consistency:
        cfg = enforce_full_consistency(cfg, kset, params.gamma)
    return cfg, trace


def mst(weights):
    """Maximum spanning tree of a complete weighted graph, as a sorted
    edge list. Kruskal with lexicographic tie-breaking, deterministic."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError("weights must be a square matrix")
    if not np.array_equal(w, w.T):
        raise ValueError("weights must be symmetric")
    n = w.shape[0]
    edges = sorted(((i, j) for i in range(n - 1) for j in range(i + 1, n)),
                   key=lambda e: (-w[e[0], e[1]], e[0], e[1]))
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    tree = []
    for i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            tree.append((i, j))
            if len(tree) == n - 1:
                break
    return sorted(tree)


def _config_from_tree(cfg, tree):
    """Rebuild every pairwise matching by composing along tree paths;
    the result is exactly cycle-consistent."""
    table = cfg.perm_table()
    n_graphs, n = cfg.N, cfg.n
    adj = {k: [] for k in range(n_graphs)}
    for i, j in tree:
        adj[i].append(j)
        adj[j].append(i)
    root_to = np.empty((n_graphs, n), dtype=np.int64)
    root_to[0] = np.arange(n)
    seen = {0}
    queue = [0]
    while queue:
        cur = queue.pop(0)
        for nxt in adj[cur]:
            if nxt in seen:
                continue
            root_to[nxt] = table[cur, nxt][root_to[cur]]
            seen.add(nxt)
            queue.append(nxt)
    inv = np.empty_like(root_to)
    for k in range(n_graphs):
        inv[k][root_to[k]] = np.arange(n)
    pairs = {}
    for i in range(n_graphs - 1):
        for j in range(i + 1, n_graphs):
            pairs[(i, j)] = Permutation(root_to[j][inv[i]])
    return MatchConfig(n_graphs, n, pairs)


def _spectral_sync(cfg):
    """Consistent configuration from the leading eigenvectors of the
    stacked block matrix of all matchings, each block re-projected to a
    permutation by the Hungarian method; the first block anchors the
    gauge at the identity."""
    table = cfg.perm_table()
    n_graphs, n = cfg.N, cfg.n
    stack = np.zeros((n_graphs * n, n_graphs * n))
    rows = np.arange(n)
    for i in range(n_graphs):
        for j in range(n_graphs):
            stack[i * n + rows, j * n + table[i, j]] = 1.0
    _, vecs = np.linalg.eigh(stack)
    lead = vecs[:, -n:]
    base = lead[:n]
    basis = np.empty((n_graphs, n), dtype=np.int64)
    basis[0] = rows
    for k in range(1, n_graphs):
        basis[k] = hungarian(lead[k * n:(k + 1) * n] @ base.T).perm
    inv = np.empty_like(basis)
    for k in range(n_graphs):
        inv[k][basis[k]] = rows
    pairs = {}
    for i in range(n_graphs - 1):
        for j in range(i + 1, n_graphs):
            pairs[(i, j)] = Permutation(inv[j][basis[i]])
    return MatchConfig(n_graphs, n, pairs)


def enforce_full_consistency(cfg, kset, gamma=0.3):
    """Rewrite a configuration into an exactly cycle-consistent one.

    Already-consistent input is returned untouched. When overall
    consistency falls below gamma the matchings are too contradictory for
    consistency to guide anything, so the affinity-weighted super graph's
    maximum spanning tree dictates the compositions; otherwise the
    consistency-weighted super graph is used, falling back to spectral
    synchronization when there are more graphs than nodes.
    """
    table = cfg.perm_table()
    if is_fully_consistent(cfg, table):
        return cfg
    c_val = overall_consistency(cfg, table)
    if c_val < gamma:
        weights = np.zeros((cfg.N, cfg.N))
        for i, j, x in cfg.pairs():
            weights[i, j] = weights[j, i] = kset.get(i, j).quad_form(x)
        return _config_from_tree(cfg, mst(weights))
    if cfg.n >= cfg.N:
        weights = pairwise_consistency_all(cfg, table)
        np.fill_diagonal(weights, 0.0)
        return _config_from_tree(cfg, mst(weights))
    return _spectral_sync(cfg)


def run_isb_acc_oracle(cfg0, cfg_truth, inlier_rows, t_max=50):
    """Test-harness upper bound: the boosting loop driven by the true
    per-pair accuracy instead of any observable evaluation. Never part of
    a real algorithm; it quantifies the best the composition search could
    possibly do from a given initial configuration."""
    cfg = cfg0
    for _ in range(t_max):
        table = cfg.perm_table()
        tru = cfg_truth.perm_table()
        updates = {}
        changed = 0
        for i in range(cfg.N - 1):
            rows = np.asarray(inlier_rows[i])
            for j in range(i + 1, cfg.N):
                comps = np.take_along_axis(table[:, j], table[i], axis=1)
                anchors = [i] + [k for k in range(cfg.N) if k != i and k != j]
                hits = (comps[anchors][:, rows] == tru[i, j][rows]).sum(axis=1)
                best = anchors[_first_max(hits)]
                cand = comps[best]
                updates[(i, j)] = Permutation(cand)
                changed += int(not np.array_equal(cand, table[i, j]))
        cfg = cfg.replace(updates)
        if changed == 0:
            break
    return cfg
