import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dscan import Tensor
from dscan.clustering import (
    ClusterState,
    _lloyd,
    clustering_loss,
    joint_loss,
    kmeans,
    reconstruction_loss,
    soft_assign,
    target_distribution,
)
from dscan.errors import (
    ConfigurationError,
    DegenerateClusterError,
    DimensionError,
    InfiniteDivergenceError,
    InputError,
)
from oracles import fd_check

RNG = np.random.default_rng(42)


class TestSoftAssign:
    def test_single_cluster_gives_ones(self):
        q = soft_assign(RNG.normal(size=(5, 3)), RNG.normal(size=(1, 3)))
        np.testing.assert_allclose(q, 1.0, atol=1e-12)

    def test_hand_oracle_two_centers(self):
        # z=(0,0), centers (0,0) and (1,0), alpha=1: kernel values 1 and 1/2
        q = soft_assign(np.array([[0.0, 0.0]]), np.array([[0.0, 0.0], [1.0, 0.0]]), alpha=1.0)
        np.testing.assert_allclose(q, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-9)

    def test_equidistant_gives_half(self):
        q = soft_assign(np.array([[0.0, 0.0]]), np.array([[1.0, 1.0], [-1.0, -1.0]]))
        np.testing.assert_allclose(q, [[0.5, 0.5]], atol=1e-12)

    def test_rows_sum_to_one(self):
        q = soft_assign(RNG.normal(size=(40, 10)), RNG.normal(size=(9, 10)))
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-6)
        assert np.all((q > 0) & (q < 1))

    def test_zero_clusters_rejected(self):
        with pytest.raises(ConfigurationError):
            soft_assign(RNG.normal(size=(5, 3)), np.zeros((0, 3)))

    def test_translation_invariance(self):
        z = RNG.normal(size=(20, 10))
        centers = RNG.normal(size=(4, 10))
        shift = RNG.normal(size=10) * 5.0
        q1 = soft_assign(z, centers)
        q2 = soft_assign(z + shift, centers + shift)
        np.testing.assert_allclose(q1, q2, atol=1e-6)

    def test_tensor_path_matches_numpy_path(self):
        z = RNG.normal(size=(8, 10))
        centers = RNG.normal(size=(3, 10))
        q_np = soft_assign(z, centers)
        q_t = soft_assign(Tensor(z, dtype=np.float64), Tensor(centers, dtype=np.float64))
        np.testing.assert_allclose(q_t.data, q_np, atol=1e-12)


class TestTargetDistribution:
    def test_one_hot_is_fixed_point(self):
        q = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_allclose(target_distribution(q), q, atol=1e-12)

    def test_hand_oracle(self):
        # f = (1.4, 0.6); exact fractions 48/55, 7/55, 27/55, 28/55
        q = np.array([[0.8, 0.2], [0.6, 0.4]])
        p = target_distribution(q)
        np.testing.assert_allclose(
            p, [[48.0 / 55.0, 7.0 / 55.0], [27.0 / 55.0, 28.0 / 55.0]], atol=1e-9)
        np.testing.assert_allclose(p, [[0.8727, 0.1273], [0.4909, 0.5091]], atol=1e-3)

    def test_uniform_stays_uniform(self):
        q = np.full((6, 4), 0.25)
        np.testing.assert_allclose(target_distribution(q), 0.25, atol=1e-12)

    def test_empty_cluster_raises(self):
        q = np.array([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(DegenerateClusterError):
            target_distribution(q)

    def test_sharpens_under_equal_frequencies(self):
        # rows arranged so every column sums to the same frequency
        q = np.array([[0.6, 0.4], [0.4, 0.6]])
        p = target_distribution(q)
        assert p[0, 0] > p[0, 1]
        assert p[0, 0] > q[0, 0]  # confident entries get sharper

    def test_rows_sum_to_one(self):
        q = RNG.dirichlet(np.ones(5), size=30)
        p = target_distribution(q)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


class TestLosses:
    def test_reconstruction_zero_for_equal(self):
        x = RNG.normal(size=(4, 6, 5))
        assert reconstruction_loss(x, x.copy()) == 0.0

    def test_reconstruction_single_clip_unit_residual(self):
        x = np.zeros((1, 4))
        x_rec = np.ones((1, 4))
        assert reconstruction_loss(x, x_rec) == pytest.approx(4.0)

    def test_reconstruction_against_naive_loop(self):
        x = RNG.normal(size=(3, 4, 5))
        x_rec = RNG.normal(size=(3, 4, 5))
        total = 0.0
        for i in range(3):
            for a in range(4):
                for b in range(5):
                    total += (x_rec[i, a, b] - x[i, a, b]) ** 2
        np.testing.assert_allclose(reconstruction_loss(x, x_rec), total / 3.0, atol=1e-6)

    def test_reconstruction_shape_mismatch(self):
        with pytest.raises(DimensionError):
            reconstruction_loss(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_kl_zero_for_identical(self):
        p = RNG.dirichlet(np.ones(4), size=10)
        assert clustering_loss(p, p.copy()) == pytest.approx(0.0, abs=1e-12)

    def test_kl_hand_oracle_log2(self):
        val = clustering_loss(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))
        assert val == pytest.approx(np.log(2.0), abs=1e-12)

    def test_kl_nonnegative(self):
        for _ in range(20):
            p = RNG.dirichlet(np.ones(5), size=8)
            q = RNG.dirichlet(np.ones(5), size=8)
            assert clustering_loss(p, q) >= 0.0

    def test_kl_infinite_divergence_error(self):
        with pytest.raises(InfiniteDivergenceError):
            clustering_loss(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]))

    def test_kl_zero_iff_equal(self):
        p = RNG.dirichlet(np.ones(3), size=5)
        q = p.copy()
        q[0] = [0.5, 0.3, 0.2]
        if not np.allclose(p, q, atol=1e-9):
            assert clustering_loss(p, q) > 0.0

    def test_joint_loss_combinations(self):
        assert joint_loss(1.0, 2.0, 0.5) == pytest.approx(2.0)
        assert joint_loss(3.0, 99.0, 0.0) == pytest.approx(3.0)  # pretraining objective
        with pytest.raises(ConfigurationError):
            joint_loss(1.0, 1.0, -0.1)


class TestClusteringGradients:
    """KL loss gradients w.r.t. embeddings and centers vs finite differences."""

    @pytest.mark.parametrize("which", [0, 1])
    def test_grad_clustering_loss(self, which):
        rng = np.random.default_rng(97)
        z0 = rng.normal(size=(12, 5))
        c0 = rng.normal(size=(3, 5))
        p = target_distribution(soft_assign(z0, c0))  # fixed target

        def f(z, centers):
            zt = Tensor(z, dtype=np.float64, requires_grad=(which == 0))
            ct = Tensor(centers, dtype=np.float64, requires_grad=(which == 1))
            loss = clustering_loss(p, soft_assign(zt, ct))
            loss.backward()
            return loss.item(), (zt if which == 0 else ct).grad

        fd_check(f, [z0, c0], which, rng)

    def test_grad_reconstruction_loss(self):
        rng = np.random.default_rng(98)
        x = rng.normal(size=(4, 5, 3))
        x0 = rng.normal(size=(4, 5, 3))

        def f(x_rec):
            xt = Tensor(x_rec, dtype=np.float64, requires_grad=True)
            loss = reconstruction_loss(Tensor(x0, dtype=np.float64), xt)
            loss.backward()
            return loss.item(), xt.grad

        fd_check(f, [x], 0, rng)


class TestKMeans:
    def test_n_equals_k_returns_the_points(self):
        pts = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
        res = kmeans(pts, 3, restarts=5, seed=0)
        # centers are the points themselves, in some order
        matched = sorted(tuple(c) for c in res.centers)
        expected = sorted(tuple(p) for p in pts)
        np.testing.assert_allclose(matched, expected, atol=1e-12)
        assert sorted(res.labels.tolist()) == [0, 1, 2]

    def test_separated_blobs_recovered_exactly(self):
        rng = np.random.default_rng(5)
        blob_a = rng.normal(size=(50, 4)) + np.array([20, 0, 0, 0])
        blob_b = rng.normal(size=(50, 4)) - np.array([20, 0, 0, 0])
        z = np.vstack([blob_a, blob_b])
        truth = np.array([0] * 50 + [1] * 50)
        res = kmeans(z, 2, restarts=5, seed=1)
        # labels match blob identity up to a swap
        agreement = max(np.mean(res.labels == truth), np.mean(res.labels == 1 - truth))
        assert agreement == 1.0

    def test_wcss_non_increasing_across_lloyd_iterations(self):
        rng = np.random.default_rng(9)
        z = rng.normal(size=(60, 3))
        history = []
        _lloyd(z, z[rng.choice(60, 4, replace=False)].copy(), max_iter=50, history=history)
        assert all(a >= b - 1e-9 for a, b in zip(history, history[1:]))

    def test_fewer_points_than_k_rejected(self):
        with pytest.raises(InputError):
            kmeans(np.zeros((2, 3)), 5)

    def test_deterministic_given_seed(self):
        z = RNG.normal(size=(30, 4))
        a = kmeans(z, 3, restarts=3, seed=7)
        b = kmeans(z, 3, restarts=3, seed=7)
        np.testing.assert_array_equal(a.centers, b.centers)
        np.testing.assert_array_equal(a.labels, b.labels)


class TestClusterState:
    def test_from_embeddings_invariants(self):
        z = RNG.normal(size=(25, 10))
        centers = RNG.normal(size=(9, 10))
        state = ClusterState.from_embeddings(z, centers)
        assert state.validate()
        assert state.q.shape == (25, 9)
        assert state.p.shape == (25, 9)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (6, 4), elements=st.floats(-5, 5)),
       arrays(np.float64, (3, 4), elements=st.floats(-5, 5)))
def test_soft_assign_rows_sum_to_one_property(z, centers):
    # distinct-enough centers; degenerate duplicates are fine too
    q = soft_assign(z, centers)
    np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(q > 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_target_distribution_rows_sum_to_one_property(seed):
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(4), size=12)
    p = target_distribution(q)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
