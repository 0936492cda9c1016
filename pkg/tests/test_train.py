import numpy as np
import pytest

from dscan.clustering import kmeans, reconstruction_loss
from dscan.errors import ConfigurationError, InputError, TrainingDivergedError
from dscan.model import DscanAutoencoder
from dscan.tensor import Tensor, backward
from dscan.train import (
    STREAM_INIT,
    STREAM_KMEANS,
    TrainingConfig,
    _BatchSampler,
    stream_rng,
    train,
)
from toydata import make_toy_dataset


@pytest.fixture(scope="module")
def tiny_toy():
    return make_toy_dataset(n_per_class=8, seed=2)  # 24 clips


class TestTrainingConfig:
    def test_defaults_mirror_published_settings(self):
        cfg = TrainingConfig()
        assert cfg.lr == 0.001
        assert cfg.batch_size == 32
        assert cfg.pretrain_iters == 200
        assert cfg.max_iters == 4000
        assert cfg.epsilon == 0.05
        assert cfg.k == 9
        assert cfg.alpha == 1.0

    @pytest.mark.parametrize("field,value", [
        ("beta", -0.1), ("epsilon", 0.0), ("epsilon", 1.0), ("lr", 0.0),
        ("batch_size", 0), ("k", 0), ("target_update_interval", 0),
        ("pretrain_iters", -1), ("max_iters", -1), ("alpha", 0.0),
    ])
    def test_invalid_values_rejected(self, field, value):
        cfg = TrainingConfig(**{field: value})
        with pytest.raises(ConfigurationError):
            cfg.validate()


class TestBatchSampler:
    def test_epochs_cover_all_indices(self):
        sampler = _BatchSampler(10, 5, np.random.default_rng(0))
        seen = np.concatenate([sampler.next(), sampler.next()])
        assert sorted(seen.tolist()) == list(range(10))

    def test_batch_capped_at_population(self):
        sampler = _BatchSampler(3, 8, np.random.default_rng(0))
        assert len(sampler.next()) == 3

    def test_deterministic_given_rng_seed(self):
        a = _BatchSampler(20, 6, np.random.default_rng(7))
        b = _BatchSampler(20, 6, np.random.default_rng(7))
        for _ in range(5):
            np.testing.assert_array_equal(a.next(), b.next())


class TestTrain:
    def test_max_iters_zero_returns_kmeans_initialization(self, tiny_toy):
        x, labels, _ = tiny_toy
        cfg = TrainingConfig(pretrain_iters=4, max_iters=0, k=3, batch_size=8,
                             kmeans_restarts=4, seed=3, target_update_interval=2)
        model = DscanAutoencoder(rng=stream_rng(cfg.seed, STREAM_INIT))
        result = train(model, x, cfg)
        # the returned state must match running K-means on the same embeddings
        z = model.embed_all(x[..., None], batch_size=cfg.batch_size)
        km = kmeans(z, 3, restarts=4, rng=stream_rng(cfg.seed, STREAM_KMEANS))
        np.testing.assert_allclose(result.state.centers, km.centers, atol=1e-12)
        np.testing.assert_array_equal(result.state.hard_labels, km.labels)
        assert result.iterations_run == 0
        assert not result.stopped_early

    def test_history_rows_have_pinned_keys(self, tiny_toy):
        x, _, _ = tiny_toy
        cfg = TrainingConfig(pretrain_iters=3, max_iters=2, k=3, batch_size=8,
                             kmeans_restarts=2, seed=0, target_update_interval=2)
        result = train(DscanAutoencoder(rng=stream_rng(0, STREAM_INIT)), x, cfg)
        assert result.history, "history must not be empty"
        for row in result.history:
            assert set(row) == {"iter", "L_r", "L_c", "L_J", "label_change_fraction"}
        # pretraining rows carry no label-change fraction
        assert result.history[0]["label_change_fraction"] is None
        assert result.history[0]["L_c"] == 0.0

    def test_centers_are_trained_in_joint_phase(self, tiny_toy):
        x, _, _ = tiny_toy
        cfg = TrainingConfig(pretrain_iters=2, max_iters=6, k=3, batch_size=8,
                             kmeans_restarts=2, seed=1, target_update_interval=100,
                             beta=0.5)
        model = DscanAutoencoder(rng=stream_rng(cfg.seed, STREAM_INIT))
        result = train(model, x, cfg)
        z = model.embed_all(x[..., None], batch_size=8)
        km = kmeans(z, 3, restarts=2, rng=stream_rng(cfg.seed, STREAM_KMEANS))
        # centers were updated by backprop, so they differ from a fresh K-means
        assert not np.allclose(result.state.centers, km.centers, atol=1e-7)

    def test_nan_features_raise_diverged(self, tiny_toy):
        x, _, _ = tiny_toy
        bad = x.copy()
        bad[0, 0, 0] = np.nan
        cfg = TrainingConfig(pretrain_iters=5, max_iters=0, k=3, batch_size=24,
                             kmeans_restarts=1, seed=0)
        with pytest.raises(TrainingDivergedError):
            train(DscanAutoencoder(seed=0), bad, cfg)

    def test_fewer_clips_than_k_rejected(self, tiny_toy):
        x, _, _ = tiny_toy
        cfg = TrainingConfig(k=50)
        with pytest.raises(InputError):
            train(DscanAutoencoder(seed=0), x[:5], cfg)

    def test_same_seed_same_assignments(self, tiny_toy):
        x, _, _ = tiny_toy
        cfg = TrainingConfig(pretrain_iters=3, max_iters=4, k=3, batch_size=8,
                             kmeans_restarts=2, seed=9, target_update_interval=2)
        runs = []
        for _ in range(2):
            model = DscanAutoencoder(rng=stream_rng(cfg.seed, STREAM_INIT))
            runs.append(train(model, x, cfg))
        np.testing.assert_array_equal(runs[0].state.hard_labels, runs[1].state.hard_labels)
        np.testing.assert_array_equal(runs[0].state.centers, runs[1].state.centers)


def test_full_batch_pretraining_strictly_decreases_reconstruction_loss():
    # the pretraining update (Adam) at lr=1e-4 on a full batch of 10 clips
    from dscan.optim import Adam

    x_data, _, _ = make_toy_dataset(n_per_class=4, seed=6)  # 12 clips
    x_data = x_data[:10]
    model = DscanAutoencoder(seed=4)
    opt = Adam(model.parameters(), lr=1e-4)
    x = Tensor(x_data[..., None])
    losses = []
    for _ in range(10):
        _, x_rec = model.forward(x, train=True)
        loss = reconstruction_loss(x, x_rec)
        losses.append(loss.item())
        backward(loss)
        opt.step()
        opt.zero_grad()
    assert all(a > b for a, b in zip(losses, losses[1:])), losses
