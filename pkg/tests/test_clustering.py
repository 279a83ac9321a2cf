import math

import numpy as np
import pytest

import robustmix as rm
from robustmix.clustering import (
    ClusteringConfig,
    boosts_for_confidence,
    embed_heavy,
    estimate_r2,
    lift,
    robust_cluster,
    sos_moment_check,
    trimmed_mean,
)


def ortho_basis(d, k, seed=0):
    rng = np.random.default_rng(seed)
    return np.linalg.qr(rng.standard_normal((d, k)))[0]


class TestEmbedHeavy:
    def test_noiseless_large_batch_recovers_projection(self):
        d, k, t = 8, 2, 10000
        U = ortho_basis(d, k)
        w = np.zeros(d)
        w[0], w[3] = 1.0, -2.0
        rng = np.random.default_rng(1)
        x = rng.standard_normal((t, d))
        task = rm.TaskData(x=x, y=x @ w)
        emb = embed_heavy([task], U)[0]
        assert np.linalg.norm(emb - U.T @ w) <= 0.05 * np.linalg.norm(w)

    def test_zero_labels_give_zero_vector(self):
        U = ortho_basis(5, 2)
        task = rm.TaskData(x=np.ones((1, 5)), y=np.zeros(1))
        np.testing.assert_array_equal(embed_heavy([task], U)[0], np.zeros(2))

    def test_identity_projection_returns_raw_statistic(self):
        d = 4
        rng = np.random.default_rng(2)
        x = rng.standard_normal((7, d))
        y = rng.standard_normal(7)
        task = rm.TaskData(x=x, y=y)
        emb = embed_heavy([task], np.eye(d))[0]
        np.testing.assert_allclose(emb, x.T @ y / 7, atol=1e-12)


class TestRobustCluster:
    def separated_points(self, n=300, seed=0, spread=1.0):
        rng = np.random.default_rng(seed)
        labels = rng.integers(0, 2, size=n)
        centers = np.array([[10.0, 0.0], [-10.0, 0.0]])
        return centers[labels] + spread * rng.standard_normal((n, 2)), labels, centers

    def test_two_separated_clusters(self):
        pts, labels, centers = self.separated_points()
        cfg = ClusteringConfig(k=2, trim=0.0, boosts=3)
        est_centers, assign = robust_cluster(pts, cfg, seed=1)
        # match by nearest true center
        perm = [int(np.argmin(np.linalg.norm(centers - c, axis=1))) for c in est_centers]
        assert sorted(perm) == [0, 1]
        for j in range(2):
            err = np.linalg.norm(est_centers[j] - centers[perm[j]])
            assert err <= 0.5
        mis = np.sum((assign >= 0) & (np.array(perm)[assign] != labels))
        assert mis == 0

    def test_k1_is_trimmed_mean(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((200, 3))
        cfg = ClusteringConfig(k=1, trim=0.05, boosts=1)
        centers, assign = robust_cluster(pts, cfg, seed=0)
        expected = np.array(
            [trimmed_mean(pts[:, j], 0.05) for j in range(3)]
        )
        np.testing.assert_allclose(centers[0], expected, atol=1e-12)
        assert np.all(assign[assign >= 0] == 0)

    def test_resilience_to_far_adversarial_cloud(self):
        moves = []
        for seed in range(50):
            pts, _, _ = self.separated_points(n=300, seed=seed)
            cfg = ClusteringConfig(k=2, trim=0.1, boosts=4)
            clean_centers, _ = robust_cluster(pts, cfg, seed=seed)
            bad = pts.copy()
            m = 30  # 10 percent of the points, planted far away
            bad[:m] = 1000.0 + 0.1 * np.random.default_rng(seed).standard_normal((m, 2))
            dirty_centers, _ = robust_cluster(bad, cfg, seed=seed)
            # compare matched centers
            d01 = np.linalg.norm(clean_centers[0] - dirty_centers[0]) + np.linalg.norm(
                clean_centers[1] - dirty_centers[1]
            )
            d10 = np.linalg.norm(clean_centers[0] - dirty_centers[1]) + np.linalg.norm(
                clean_centers[1] - dirty_centers[0]
            )
            moves.append(min(d01, d10) / 2)
        assert np.median(moves) < 1.0

    def test_permutation_equivariance(self):
        pts, _, _ = self.separated_points(n=120, seed=9)
        cfg = ClusteringConfig(k=2, trim=0.05, boosts=3)
        centers_a, assign_a = robust_cluster(pts, cfg, seed=5)
        rng = np.random.default_rng(10)
        perm = rng.permutation(pts.shape[0])
        centers_b, assign_b = robust_cluster(pts[perm], cfg, seed=5)
        np.testing.assert_array_equal(centers_a, centers_b)
        np.testing.assert_array_equal(assign_a[perm], assign_b)

    def test_boost_monotonicity(self):
        # median-of-means boosting pays off under symmetric heavy-tailed
        # noise, where a single fold's plain means are fragile
        def instance(seed, n=250):
            rng = np.random.default_rng(seed)
            labels = rng.integers(0, 2, size=n)
            centers = np.array([[10.0, 0.0], [-10.0, 0.0]])
            pts = centers[labels] + 2.0 * rng.standard_t(2.0, size=(n, 2))
            return pts, centers

        errs = {1: [], 5: []}
        for seed in range(50):
            pts, centers = instance(100 + seed)
            for boosts in (1, 5):
                cfg = ClusteringConfig(k=2, trim=0.0, boosts=boosts)
                est, _ = robust_cluster(pts, cfg, seed=seed)
                d01 = max(
                    np.linalg.norm(est[0] - centers[0]),
                    np.linalg.norm(est[1] - centers[1]),
                )
                d10 = max(
                    np.linalg.norm(est[0] - centers[1]),
                    np.linalg.norm(est[1] - centers[0]),
                )
                errs[boosts].append(min(d01, d10))
        assert np.median(errs[5]) <= np.median(errs[1]) + 1e-9

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(ValueError):
            robust_cluster(np.ones((5, 2)), ClusteringConfig(k=2), seed=0)
        with pytest.raises(ValueError):
            robust_cluster(np.ones((1, 2)), ClusteringConfig(k=2), seed=0)

    def test_boosts_default_formula(self):
        assert boosts_for_confidence(0.05) == math.ceil(4 * math.log(1 / 0.05))


class TestLift:
    def test_basis_vector_maps_to_column(self):
        U = ortho_basis(6, 2, seed=4)
        lifted = lift(U, np.array([[1.0, 0.0]]))[0]
        np.testing.assert_allclose(lifted, U[:, 0], atol=1e-12)

    def test_round_trip(self):
        U = ortho_basis(6, 3, seed=5)
        c = np.array([[0.3, -1.2, 2.0]])
        np.testing.assert_allclose(lift(U, c) @ U, c, atol=1e-10)

    def test_norm_preserving_and_triangle_decomposition(self):
        U = ortho_basis(8, 2, seed=6)
        rng = np.random.default_rng(7)
        w = rng.standard_normal(8)
        c = U.T @ w + 0.05 * rng.standard_normal(2)
        lifted = lift(U, c[None, :])[0]
        assert np.linalg.norm(lifted) == pytest.approx(np.linalg.norm(c), abs=1e-10)
        lhs = np.linalg.norm(lifted - w)
        proj_term = np.linalg.norm(U @ c - U @ (U.T @ w))
        resid_term = np.linalg.norm(w - U @ (U.T @ w))
        assert lhs <= proj_term + resid_term + 1e-12


class TestTrimmedMean:
    def test_symmetric_samples(self):
        x = np.tile([-1.0, 0.0, 1.0], 20)
        assert trimmed_mean(x, 0.1) == pytest.approx(0.0, abs=1e-12)

    def test_outlier_resistance(self):
        rng = np.random.default_rng(8)
        n = 10000
        x = rng.standard_normal(n)
        x[: n // 20] = 1e6  # 5 percent gross outliers
        est = trimmed_mean(x, 0.05)
        assert abs(est) <= 0.5
        assert abs(est) <= 18 * math.sqrt(0.05)

    def test_boundary_survivor_count(self):
        k = 5
        n = 8 * k
        x = np.arange(float(n))
        r = math.ceil(2 * 0.125 * n)
        est = trimmed_mean(x, 0.125)
        assert est == pytest.approx(np.sort(x)[r : n - r].mean())
        assert n - 2 * r == n - 2 * math.ceil(n / 4)

    def test_affine_equivariance(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal(64)
        a, b = 2.5, -3.0
        assert trimmed_mean(a * x + b, 0.1) == pytest.approx(
            a * trimmed_mean(x, 0.1) + b, rel=1e-12
        )

    def test_rejects_empty_after_trim(self):
        with pytest.raises(ValueError):
            trimmed_mean(np.ones(2), 0.125)


class TestEstimateR2:
    def make_heavy(self, w, s, n, t, seed):
        d = w.shape[0]
        rng = np.random.default_rng(seed)
        tasks = []
        for _ in range(n):
            x = rng.standard_normal((t, d))
            y = x @ w + s * rng.standard_normal(t)
            tasks.append(rm.TaskData(x=x, y=y))
        return tasks

    def test_clean_chi_square_concentration(self):
        w = np.array([1.0, -1.0, 0.5])
        n, t = 200, 50
        heavy = self.make_heavy(w, 1.0, n, t, seed=0)
        radii = estimate_r2(heavy, w[None, :], np.zeros(n, int), alpha=0.0)
        assert abs(radii[0] - 1.0) <= 3.0 * math.sqrt(2.0 / (t * n))

    def test_zero_noise_gives_zero(self):
        w = np.array([2.0, 0.0])
        heavy = self.make_heavy(w, 0.0, 50, 10, seed=1)
        radii = estimate_r2(heavy, w[None, :], np.zeros(50, int), alpha=0.0)
        assert radii[0] == pytest.approx(0.0, abs=1e-20)

    def test_corrupted_error_within_trimmed_mean_bound(self):
        w = np.array([1.0, 0.0, 0.0, 0.0])
        n, t, s = 400, 25, 1.0
        heavy = self.make_heavy(w, s, n, t, seed=2)
        clean = estimate_r2(heavy, w[None, :], np.zeros(n, int), alpha=0.0)
        clean_err = abs(clean[0] - s ** 2)
        alpha = 0.05
        dirty = list(heavy)
        rng = np.random.default_rng(3)
        for i in range(int(alpha * n)):
            x = rng.standard_normal((t, 4))
            dirty[i] = rm.TaskData(x=x, y=1e3 * np.ones(t))
        est = estimate_r2(dirty, w[None, :], np.zeros(n, int), alpha=alpha)
        # p_hat = 1, so the trim level is alpha; bound is the clean error
        # plus 18 sqrt(alpha) sample standard deviations of the r2 statistic
        bound = clean_err + 18.0 * math.sqrt(alpha) * (s ** 2) * math.sqrt(2.0 / t)
        assert abs(est[0] - s ** 2) <= bound

    def test_empty_cluster_is_an_error(self):
        heavy = self.make_heavy(np.array([1.0, 0.0]), 1.0, 10, 5, seed=4)
        with pytest.raises(ValueError, match="cluster 1"):
            estimate_r2(heavy, np.zeros((2, 2)), np.zeros(10, int), alpha=0.0)


class TestClusteringContract:
    def test_radii_and_center_targets_on_well_separated_instance(self):
        # clean instance with Delta >= 10 rho / sqrt(t): centers within
        # Delta/10 and radii within r^2 Delta^2 / (50 rho^2)
        d, k, t_h, n_h = 6, 2, 100, 400
        meta = rm.simplex_meta(d, k, separation=4.0, noise=1.0)
        stats = rm.derived_stats(meta)
        assert stats.delta >= 10.0 * stats.rho / math.sqrt(t_h)
        tasks = rm.views(rm.sample_tasks(meta, n_h, t_h, seed=11))
        U = np.eye(d)[:, :k]  # the simplex lives in the first k coordinates
        emb = embed_heavy(tasks, U)
        cfg = ClusteringConfig(k=k, trim=0.0, boosts=4)
        centers_proj, assign = robust_cluster(emb, cfg, seed=12)
        centers = lift(U, centers_proj)
        radii = estimate_r2(tasks, centers, assign, alpha=0.0)
        from robustmix.pipeline import match_components

        perm = match_components(centers, meta.components)
        for ell in range(k):
            w_err = np.linalg.norm(centers[perm[ell]] - meta.components[ell])
            assert w_err <= stats.delta / 10.0
            r2_true = w_err ** 2 + meta.s[ell] ** 2
            tol = r2_true * stats.delta ** 2 / (50.0 * stats.rho ** 2)
            assert abs(radii[perm[ell]] - r2_true) <= tol


class TestSosMomentCheck:
    def test_m1_matches_analytic_second_moment(self):
        d = 6
        W = np.zeros((d, 1))
        W[0, 0] = 1.0
        meta = rm.MetaParameter(W=W, s=np.array([1.0]), p=np.array([1.0]))
        rep = sos_moment_check(meta, t=8, n=40000, m_max=1, n_directions=6, seed=0)
        emp = rep["second_moment_empirical"]
        theory = rep["second_moment_theory"]
        np.testing.assert_allclose(emp, theory, rtol=0.1)

    def test_zero_signal_zero_noise_moments_vanish(self):
        W = np.zeros((3, 1))
        W[0, 0] = 1e-12  # zero-center limit
        meta = rm.MetaParameter(W=W, s=np.array([1e-12]), p=np.array([1.0]))
        rep = sos_moment_check(meta, t=6, n=2000, m_max=2, n_directions=4, seed=1)
        assert np.max(rep["empirical_moments"]) <= 1e-20

    def test_m3_ratio_below_one(self):
        d = 5
        W = np.zeros((d, 1))
        W[0, 0] = 1.0
        meta = rm.MetaParameter(W=W, s=np.array([1.0]), p=np.array([1.0]))
        rep = sos_moment_check(meta, t=32, n=100000, m_max=3, n_directions=8, seed=2)
        assert rep["passed"]
        assert rep["max_ratio"] < 1.0

    def test_rejects_small_batches(self):
        meta = rm.MetaParameter(
            W=np.ones((2, 1)), s=np.array([1.0]), p=np.array([1.0])
        )
        with pytest.raises(ValueError):
            sos_moment_check(meta, t=5, n=100, m_max=3, n_directions=2, seed=0)
