import numpy as np
import pytest

from matchfactor import (
    ConstantColumn,
    EmptyClusterUnrecoverable,
    cluster_feature_trajectories,
    feature_membership,
    intra_component_membership,
    kde_gaussian,
    kde_grid,
    kmeans,
    kruskal_tensor,
    as_factor_model,
    silhouette,
    silverman_bandwidth,
    temporal_modulation,
    welch_t_test,
    win_rate_stats,
)

from helpers import (
    adjusted_rand_index,
    best_split_1d,
    welch_p_by_quadrature,
)


# ---------------------------------------------------------------------------
# feature membership


class TestFeatureMembership:
    def test_single_mass_column(self):
        b = np.array([[1.0], [0.0], [0.0], [0.0]])
        sig = feature_membership(b)
        assert sig.retained_indices == ((0,),)
        assert sig.retained_values == ((1.0,),)

    def test_two_large_entries_survive(self):
        col = np.array([0.7, 0.7, 0.1, 0.1])
        sig = feature_membership(col.reshape(-1, 1), fraction=0.95)
        # squared shares: 0.49/0.49/0.01/0.01 of 1.0 -> two large cover 0.98
        assert sig.retained_indices == ((0, 1),)

    def test_archetype_pattern_recovered(self):
        rng = np.random.default_rng(0)
        b = np.zeros((4, 3))
        b[[0, 3], 0] = rng.uniform(0.6, 1.0, 2)
        b[[2, 3], 1] = rng.uniform(0.6, 1.0, 2)
        b[[1, 2, 3], 2] = rng.uniform(0.6, 1.0, 3)
        sig = feature_membership(b, fraction=0.95)
        assert sig.retained_indices == ((0, 3), (2, 3), (1, 2, 3))

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        b = rng.random((6, 3))
        sig = feature_membership(b)
        for s in (0.1, 3.0, 10.0):
            scaled = b.copy()
            scaled[:, 1] *= s
            assert feature_membership(scaled).retained_indices == sig.retained_indices

    def test_fraction_one_keeps_all_nonzero(self):
        b = np.array([[0.5], [0.0], [0.2], [0.1]])
        sig = feature_membership(b, fraction=1.0)
        assert sig.retained_indices == ((0, 2, 3),)

    def test_ties_at_cut_retained_together(self):
        b = np.array([[1.0], [1.0], [1.0], [1.0]])
        # any prefix of 4 equal entries reaching 95% must keep all four
        sig = feature_membership(b, fraction=0.95)
        assert sig.retained_indices == ((0, 1, 2, 3),)

    def test_zero_column_flagged(self):
        b = np.array([[1.0, 0.0], [0.5, 0.0]])
        sig = feature_membership(b)
        assert sig.empty_components == (1,)
        assert sig.retained_indices[1] == ()

    def test_mask_matrix(self):
        b = np.array([[0.9, 0.1], [0.1, 0.9]])
        sig = feature_membership(b, fraction=0.9)
        mask = sig.mask_matrix()
        assert mask[0, 0] == 0.9 and mask[1, 1] == 0.9
        assert mask[1, 0] == 0.0 and mask[0, 1] == 0.0

    def test_rejects_negative(self):
        with pytest.raises(ValueError, match="non-negative"):
            feature_membership(np.array([[-1.0]]))

    def test_rejects_bad_fraction(self):
        with pytest.raises(ValueError, match="fraction"):
            feature_membership(np.ones((2, 1)), fraction=0.0)


# ---------------------------------------------------------------------------
# clustering


def three_blobs(n_per=100, sigma=0.05, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.eye(3)
    points = np.vstack(
        [centers[c] + sigma * rng.standard_normal((n_per, 3)) for c in range(3)]
    )
    labels = np.repeat(np.arange(3), n_per)
    return points, labels


class TestKmeans:
    def test_three_blob_benchmark(self):
        points, truth = three_blobs()
        assign = kmeans(points, 3, seed=0)
        assert adjusted_rand_index(assign.labels, truth) == 1.0
        assert assign.silhouette >= 0.6

    def test_n_equals_k(self):
        points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        assign = kmeans(points, 3, seed=1)
        assert assign.inertia == 0.0
        assert sorted(assign.labels.tolist()) == [0, 1, 2]

    def test_deterministic_under_seed(self):
        points, _ = three_blobs(seed=3)
        a = kmeans(points, 3, seed=42)
        b = kmeans(points, 3, seed=42)
        np.testing.assert_array_equal(a.labels, b.labels)
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_rotation_invariance(self):
        points, _ = three_blobs(seed=4)
        rng = np.random.default_rng(5)
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        rotated = points @ q.T
        a = kmeans(points, 3, seed=7)
        b = kmeans(rotated, 3, seed=7)
        assert adjusted_rand_index(a.labels, b.labels) == 1.0
        assert a.inertia == pytest.approx(b.inertia, rel=1e-8)

    def test_duplicate_points_unrecoverable(self):
        points = np.zeros((4, 2))
        with pytest.raises(EmptyClusterUnrecoverable):
            kmeans(points, 2, seed=0, n_init=3)

    def test_k_bounds(self):
        points = np.zeros((3, 2))
        with pytest.raises(ValueError, match="k must be"):
            kmeans(points, 4)
        with pytest.raises(ValueError, match="k must be"):
            kmeans(points, 0)


class TestSilhouette:
    def test_two_tight_far_pairs(self):
        points = np.array([[0.0, 0.0], [0.01, 0.0], [10.0, 0.0], [10.01, 0.0]])
        overall, per_sample = silhouette(points, np.array([0, 0, 1, 1]))
        assert overall >= 0.95
        assert per_sample.shape == (4,)

    def test_interleaved_identical_points(self):
        points = np.array([[0.0], [1.0], [0.0], [1.0]])
        overall, _ = silhouette(points, np.array([0, 0, 1, 1]))
        assert overall <= 0.0

    def test_singleton_scores_zero(self):
        points = np.array([[0.0], [5.0], [5.1]])
        _, per_sample = silhouette(points, np.array([0, 1, 1]))
        assert per_sample[0] == 0.0

    def test_single_cluster_rejected(self):
        with pytest.raises(ValueError, match="two clusters"):
            silhouette(np.zeros((3, 2)), np.zeros(3, dtype=int))

    def test_matches_sklearn(self):
        sklearn_metrics = pytest.importorskip("sklearn.metrics")
        rng = np.random.default_rng(8)
        points = rng.standard_normal((40, 3))
        labels = rng.integers(0, 3, size=40)
        overall, per_sample = silhouette(points, labels)
        assert overall == pytest.approx(
            float(sklearn_metrics.silhouette_score(points, labels)), abs=1e-10
        )
        np.testing.assert_allclose(
            per_sample, sklearn_metrics.silhouette_samples(points, labels), atol=1e-10
        )


class TestIntraComponentMembership:
    def test_separated_values(self):
        a = np.array([[0.0], [0.0], [0.0], [10.0], [10.0]])
        labels = intra_component_membership(a, 0)
        np.testing.assert_array_equal(labels, [0, 0, 0, 1, 1])

    def test_bimodal_matches_exhaustive_split(self):
        rng = np.random.default_rng(9)
        col = np.concatenate(
            [rng.normal(0.1, 0.02, 30), rng.normal(0.9, 0.02, 20)]
        )
        labels = intra_component_membership(col.reshape(-1, 1), 0)
        np.testing.assert_array_equal(labels, best_split_1d(col))

    def test_constant_column_rejected(self):
        with pytest.raises(ConstantColumn):
            intra_component_membership(np.full((5, 1), 2.0), 0)

    def test_bad_component_index(self):
        with pytest.raises(ValueError, match="component"):
            intra_component_membership(np.ones((5, 2)), 2)


# ---------------------------------------------------------------------------
# temporal views


def toy_model(users, time):
    """Model whose feature columns are unit mass on one feature, so the
    temporal product equals the raw outer product of users and time."""
    users = np.asarray(users, dtype=float)
    time = np.asarray(time, dtype=float)
    rank = users.shape[1]
    feats = np.zeros((max(rank, 2), rank))
    feats[np.arange(rank), np.arange(rank)] = 1.0
    return as_factor_model(users, feats, time)


class TestTemporalModulation:
    def test_single_player_flat_profile(self):
        users = np.array([[1.0]])
        time = np.ones((6, 1))
        model = toy_model(users, time)
        profile = temporal_modulation(model, np.array([0]))
        # weight absorbs the column norms, so the product restores a * c = 1
        np.testing.assert_allclose(profile.means[0, 0], np.ones(6), atol=1e-12)
        np.testing.assert_array_equal(profile.stderrs[0, 0], np.zeros(6))

    def test_identical_players_zero_stderr(self):
        users = np.array([[0.5], [0.5]])
        time = np.linspace(0.1, 1.0, 5).reshape(-1, 1)
        model = toy_model(users, time)
        profile = temporal_modulation(model, np.array([0, 0]))
        np.testing.assert_allclose(profile.stderrs, 0.0, atol=1e-15)

    def test_aggregation_identity(self):
        rng = np.random.default_rng(11)
        users = rng.random((12, 2))
        time = rng.random((7, 2))
        model = toy_model(users, time)
        labels = rng.integers(0, 3, size=12)
        profile = temporal_modulation(model, labels)
        sizes = np.array(profile.cluster_sizes, dtype=float)
        for r in range(2):
            weighted = (
                profile.means[:, r, :] * sizes[:, None]
            ).sum(axis=0) / sizes.sum()
            global_mean = (
                model.weights[r]
                * np.outer(model.factors[0][:, r], model.factors[2][:, r])
            ).mean(axis=0)
            np.testing.assert_allclose(weighted, global_mean, atol=1e-10)

    def test_cluster_dominates_own_component(self):
        # three groups, each loading one component strongly
        users = np.vstack(
            [
                np.hstack([np.full((5, 1), 0.9), np.full((5, 2), 0.05)]),
                np.hstack([np.full((5, 1), 0.05), np.full((5, 1), 0.9), np.full((5, 1), 0.05)]),
                np.hstack([np.full((5, 2), 0.05), np.full((5, 1), 0.9)]),
            ]
        )
        time = np.random.default_rng(12).uniform(0.3, 1.0, (8, 3))
        model = toy_model(users, time)
        labels = np.repeat([0, 1, 2], 5)
        profile = temporal_modulation(model, labels)
        for c in range(3):
            own = profile.means[c, c]
            for r in range(3):
                if r != c:
                    assert (own > profile.means[c, r]).all()

    def test_empty_cluster_rejected(self):
        model = toy_model(np.ones((3, 1)), np.ones((4, 1)))
        with pytest.raises(ValueError, match="one entry per user"):
            temporal_modulation(model, np.array([0, 0]))


class TestClusterTrajectories:
    def test_identical_players(self):
        slice_ = np.random.default_rng(13).random((3, 5))
        t = np.stack([slice_, slice_, slice_])
        traj = cluster_feature_trajectories(t, np.zeros(3, dtype=int))
        np.testing.assert_allclose(traj.means[0], slice_, atol=1e-14)
        np.testing.assert_allclose(traj.stderrs, 0.0, atol=1e-14)

    def test_single_cluster_equals_global_mean(self):
        t = np.random.default_rng(14).random((6, 4, 5))
        traj = cluster_feature_trajectories(t, np.zeros(6, dtype=int))
        np.testing.assert_allclose(traj.means[0], t.mean(axis=0), atol=1e-14)

    def test_planted_behaviors_dominate(self):
        rng = np.random.default_rng(15)
        high_kills = rng.uniform(0.7, 1.0, (10, 4, 6))
        high_kills[:, 0, :] = rng.uniform(0.0, 0.2, (10, 6))  # low assists
        high_assists = rng.uniform(0.7, 1.0, (10, 4, 6))
        high_assists[:, 2, :] = rng.uniform(0.0, 0.2, (10, 6))  # low kills
        t = np.vstack([high_kills, high_assists])
        labels = np.repeat([0, 1], 10)
        traj = cluster_feature_trajectories(t, labels)
        assert (traj.means[0, 2] > traj.means[1, 2]).all()  # kills
        assert (traj.means[1, 0] > traj.means[0, 0]).all()  # assists


# ---------------------------------------------------------------------------
# statistics kernels


class TestKde:
    def test_repeated_value_is_gaussian_bump(self):
        h = 0.3
        grid = np.linspace(-2, 4, 101)
        dens = kde_gaussian(np.full(5, 1.0), grid, bandwidth=h)
        expect = np.exp(-0.5 * ((grid - 1.0) / h) ** 2) / (h * np.sqrt(2 * np.pi))
        np.testing.assert_allclose(dens, expect, atol=1e-12)

    def test_standard_normal_accuracy(self):
        rng = np.random.default_rng(16)
        sample = rng.standard_normal(10_000)
        h = silverman_bandwidth(sample)
        grid = kde_grid(sample, h)
        dens = kde_gaussian(sample, grid, bandwidth=h)
        true = np.exp(-0.5 * grid**2) / np.sqrt(2 * np.pi)
        assert np.abs(dens - true).max() <= 0.02

    @pytest.mark.parametrize("seed", range(4))
    def test_integrates_to_one(self, seed):
        rng = np.random.default_rng(seed)
        sample = rng.gamma(2.0, 1.5, size=200)
        h = silverman_bandwidth(sample)
        grid = kde_grid(sample, h)
        dens = kde_gaussian(sample, grid, bandwidth=h)
        assert (dens >= 0).all()
        integral = float(np.sum((dens[1:] + dens[:-1]) / 2 * np.diff(grid)))
        assert abs(integral - 1.0) <= 1e-3

    def test_zero_variance_without_bandwidth(self):
        with pytest.raises(ConstantColumn):
            silverman_bandwidth(np.full(10, 3.0))
        with pytest.raises(ConstantColumn):
            kde_gaussian(np.full(10, 3.0), np.linspace(0, 1, 5))


class TestWelch:
    def test_identical_samples(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        t, p = welch_t_test(x, x)
        assert t == 0.0
        assert p == 1.0

    def test_fixture_matches_quadrature_oracle(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        y = np.array([2.0, 3.0, 4.0, 5.0, 6.0])
        t, p = welch_t_test(x, y)
        t_expect, p_expect = welch_p_by_quadrature(x, y)
        assert t == pytest.approx(t_expect, abs=1e-12)
        assert p == pytest.approx(p_expect, abs=1e-9)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_samples_match_oracle(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(0.0, 1.0, size=rng.integers(5, 40))
        y = rng.normal(0.3, 2.0, size=rng.integers(5, 40))
        t, p = welch_t_test(x, y)
        t_expect, p_expect = welch_p_by_quadrature(x, y)
        assert t == pytest.approx(t_expect, abs=1e-10)
        assert p == pytest.approx(p_expect, abs=1e-9)

    def test_antisymmetry(self):
        rng = np.random.default_rng(21)
        x = rng.normal(0, 1, 20)
        y = rng.normal(1, 1, 25)
        t_xy, p_xy = welch_t_test(x, y)
        t_yx, p_yx = welch_t_test(y, x)
        assert t_xy == -t_yx
        assert p_xy == p_yx

    def test_constant_equal_samples(self):
        t, p = welch_t_test(np.full(5, 2.0), np.full(7, 2.0))
        assert (t, p) == (0.0, 1.0)

    def test_constant_unequal_samples_flagged(self):
        with pytest.warns(UserWarning, match="zero-variance"):
            t, p = welch_t_test(np.full(5, 2.0), np.full(7, 3.0))
        assert p == 0.0
        assert t == -np.inf

    def test_small_samples_rejected(self):
        with pytest.raises(ValueError, match="at least two"):
            welch_t_test([1.0], [1.0, 2.0])


class TestWinRateStats:
    def make_winners(self, rng, biases, n_per=60, k=40):
        rows = []
        labels = []
        for g, bias in enumerate(biases):
            rows.append(rng.random((n_per, k)) < 0.5 + bias)
            labels.extend([g] * n_per)
        return np.vstack(rows).astype(float), np.array(labels)

    def test_player_mean_mode(self):
        rng = np.random.default_rng(22)
        winners, labels = self.make_winners(rng, (0.05, -0.05))
        stats = win_rate_stats(winners, labels)
        assert stats.mode == "player-mean"
        assert stats.cluster_sizes == (60, 60)
        assert stats.cluster_means[0] > stats.cluster_means[1]
        assert len(stats.pairwise_tests) == 1
        assert stats.densities.shape == (2, len(stats.grid))
        for dens in stats.densities:
            integral = float(np.sum((dens[1:] + dens[:-1]) / 2 * np.diff(stats.grid)))
            assert abs(integral - 1.0) <= 1e-3

    def test_raw_mode(self):
        rng = np.random.default_rng(23)
        winners, labels = self.make_winners(rng, (0.0, 0.0))
        stats = win_rate_stats(winners, labels, mode="raw")
        assert stats.mode == "raw"
        assert (stats.densities >= 0).all()

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="mode"):
            win_rate_stats(np.zeros((4, 3)), np.zeros(4, dtype=int), mode="weird")
