"""Shared fixtures and independent reference implementations.

The naive functions here deliberately work on dense matrices with the
textbook formulas (explicit matrix products, squared-Frobenius norms,
dense vectorized quadratic forms) so they share no code path with the
optimized library internals they check.
"""

import itertools

import numpy as np
import pytest

from mgmboost import AffinityMatrix, AffinitySet, MatchConfig, Permutation


def sq_fro(m):
    """Squared Frobenius norm tr(M^T M)."""
    return float((np.asarray(m) ** 2).sum())


def naive_quad_form(x_matrix, k_dense):
    v = np.asarray(x_matrix).flatten(order="F")
    return float(v @ np.asarray(k_dense) @ v)


def naive_unary_consistency(k, cfg):
    mats = {(i, j): cfg.get(i, j).matrix for i in range(cfg.N) for j in range(cfg.N)}
    total = 0.0
    for i in range(cfg.N - 1):
        for j in range(i + 1, cfg.N):
            total += sq_fro(mats[(i, j)] - mats[(i, k)] @ mats[(k, j)]) / 2.0
    return 1.0 - total / (cfg.n * cfg.N * (cfg.N - 1) / 2.0)


def naive_pairwise_consistency(x, cfg, i, j):
    xm = x.matrix if isinstance(x, Permutation) else np.asarray(x)
    total = 0.0
    for k in range(cfg.N):
        total += sq_fro(xm - cfg.get(i, k).matrix @ cfg.get(k, j).matrix) / 2.0
    return 1.0 - total / (cfg.n * cfg.N)


def naive_node_consistency(u, k, cfg):
    total = 0.0
    for i in range(cfg.N - 1):
        for j in range(i + 1, cfg.N):
            y = cfg.get(k, j).matrix - cfg.get(k, i).matrix @ cfg.get(i, j).matrix
            total += sq_fro(y[u, :]) / 2.0
    return 1.0 - total / (cfg.N * (cfg.N - 1) / 2.0)


def naive_node_affinity(u, k, cfg, kset):
    """vec(X^u)^T K vec(X): only the left factor keeps row u."""
    total = 0.0
    for i in range(cfg.N):
        if i == k:
            continue
        x = cfg.get(k, i).matrix
        masked = np.zeros_like(x)
        masked[u, :] = x[u, :]
        total += float(masked.flatten(order="F") @ kset.get(k, i).dense()
                       @ x.flatten(order="F"))
    return total


def naive_elicited_unary(k, cfg, est, keep):
    """Masked unary consistency with the printed normalizer n_est*N*(N-1)."""
    total = 0.0
    for i in range(cfg.N - 1):
        for j in range(i + 1, cfg.N):
            resid = cfg.get(i, j).matrix - cfg.get(i, k).matrix @ cfg.get(k, j).matrix
            resid = resid.copy()
            resid[~keep[i]] = 0.0
            total += (resid ** 2).sum()
    return 1.0 - total / (est.n_est * cfg.N * (cfg.N - 1))


def naive_elicited_pairwise(x, cfg, est, i, j, keep):
    """Masked pairwise consistency with the printed normalizer 2*n_est*N."""
    xm = x.matrix if isinstance(x, Permutation) else np.asarray(x)
    total = 0.0
    for k in range(cfg.N):
        resid = xm - cfg.get(i, k).matrix @ cfg.get(k, j).matrix
        resid = resid.copy()
        resid[~keep[i]] = 0.0
        total += (resid ** 2).sum()
    return 1.0 - total / (2.0 * est.n_est * cfg.N)


def brute_qap_best(k_dense, n):
    """Max quadratic-assignment score over all n! permutations."""
    best = -np.inf
    for perm in itertools.permutations(range(n)):
        x = np.zeros((n, n))
        x[np.arange(n), perm] = 1.0
        best = max(best, naive_quad_form(x, k_dense))
    return best


def brute_assignment_best(profit):
    """Max total assignment profit over all permutations."""
    p = np.asarray(profit)
    n = p.shape[0]
    return max(sum(p[r, c] for r, c in enumerate(perm))
               for perm in itertools.permutations(range(n)))


def spanning_tree_best(weights):
    """Max total weight over every spanning tree (edge-subset enumeration)."""
    w = np.asarray(weights)
    n = w.shape[0]
    edges = [(i, j) for i in range(n - 1) for j in range(i + 1, n)]
    best = -np.inf
    for subset in itertools.combinations(edges, n - 1):
        parent = list(range(n))

        def find(x):
            while parent[x] != x:
                x = parent[x]
            return x

        ok = True
        for i, j in subset:
            ri, rj = find(i), find(j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
        if ok:
            best = max(best, sum(w[i, j] for i, j in subset))
    return best


def random_config(rng, n_graphs, n_nodes):
    return MatchConfig.random(n_graphs, n_nodes, rng)


def random_affinity(rng, n, density=0.6, storage=None):
    """Random symmetric non-negative affinity matrix with zero diagonal."""
    m = rng.uniform(size=(n * n, n * n)) * (rng.uniform(size=(n * n, n * n)) < density)
    m = (m + m.T) / 2.0
    np.fill_diagonal(m, 0.0)
    return AffinityMatrix(m, storage=storage)


def random_kset(rng, n_graphs, n_nodes, density=0.6, storage=None):
    mats = {(i, j): random_affinity(rng, n_nodes, density, storage)
            for i in range(n_graphs - 1) for j in range(i + 1, n_graphs)}
    return AffinitySet(n_graphs, mats)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
