import numpy as np
import pytest

from fairrobust.data import MixtureSampleConfig, sample_mixture
from fairrobust.losses import DefenseConfig, FairnessConfig
from fairrobust.models import Architecture, init_params
from fairrobust.population import GaussianMixtureSpec
from fairrobust.training import TrainConfig, TrainingDivergedError, WarmStartPhase, train

DATA = sample_mixture(MixtureSampleConfig(GaussianMixtureSpec(-1, 1, 3), 1000, seed=0, dims=2))


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule="cosine")
    cfg = TrainConfig(warm_start=[{"loss": "ramp", "epochs": 1, "lr": 0.5}])
    assert cfg.warm_start == (WarmStartPhase("ramp", 1, 0.5),)


def test_training_reduces_loss_and_leaves_input_untouched():
    m = init_params(Architecture(2, 2, (8,)), 0)
    before = m.params.copy()
    res = train(m, DATA, "cross_entropy", cfg=TrainConfig(lr=0.1, batch_size=32, epochs=5))
    assert np.array_equal(m.params, before)
    assert res.epoch_losses[-1] < res.epoch_losses[0]
    assert res.final_loss == res.epoch_losses[-1]


def test_training_is_deterministic():
    m = init_params(Architecture(2, 2, (4,)), 1)
    cfg = TrainConfig(lr=0.05, batch_size=50, epochs=2, seed=4, lr_schedule="linear",
                      warm_start=[{"loss": "cross_entropy", "epochs": 1, "lr": 0.1}])
    args = (m, DATA, "ramp", FairnessConfig("penalty", lam=1.0), DefenseConfig(0.1, pgd_steps=2), cfg)
    a, b = train(*args), train(*args)
    assert np.array_equal(a.model.params, b.model.params)
    assert a.final_loss == b.final_loss


def test_divergence_raises():
    m = init_params(Architecture(2, 2), 0)
    with pytest.raises(TrainingDivergedError):
        train(m, DATA, "exp_loss", cfg=TrainConfig(lr=1e6, batch_size=10, epochs=3))
