import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairrobust.attacks import AttackConfig, attack, attack_batch
from fairrobust.losses import loss_and_grad
from fairrobust.models import Architecture, forward, init_params, predict, threshold_model

UNBOUNDED = dict(clip_lo=-math.inf, clip_hi=math.inf)


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(method="fgsm")
    with pytest.raises(ValueError):
        AttackConfig(norm_order="1")
    with pytest.raises(ValueError):
        AttackConfig(clip_lo=1.0, clip_hi=0.0)
    with pytest.raises(ValueError):
        AttackConfig(epsilon=-1)
    with pytest.raises(ValueError):
        AttackConfig(loss="zero_one")
    assert AttackConfig(epsilon=0.2, steps=10).effective_step == pytest.approx(0.05)
    assert AttackConfig(method="rfgsm", epsilon=0.2).effective_step == pytest.approx(0.1)


def test_zero_budget_is_identity():
    m = init_params(Architecture(3, 2, (4,)), 0)
    x = np.random.default_rng(0).random((5, 3))
    for method in ("pgd", "rfgsm"):
        out = attack_batch(m, x, np.zeros(5, int), AttackConfig(method, epsilon=0.0))
        assert np.array_equal(out, x)


def test_input_outside_clip_box_rejected():
    m = init_params(Architecture(2, 2), 0)
    with pytest.raises(ValueError, match="clip box"):
        attack(m, np.array([2.0, 0.5]), 0, AttackConfig(epsilon=0.1))


@pytest.mark.parametrize("norm", ["inf", "2"])
def test_one_dimensional_flip_geometry(norm):
    m = threshold_model(0.0)
    cfg = AttackConfig("pgd", norm, epsilon=0.3, random_start=False, **UNBOUNDED)
    # correctly classified class-1 points at distance 0.5 survive, at 0.2 flip
    far = attack(m, np.array([0.5]), 1, cfg)
    near = attack(m, np.array([0.2]), 1, cfg)
    assert predict(m, far) == 1
    assert predict(m, near) == 0


def test_zero_gradient_means_no_movement():
    m = init_params(Architecture(2, 2), 0)
    m.params[:] = 0.0
    x = np.array([0.4, 0.6])
    out = attack(m, x, 0, AttackConfig("pgd", "2", epsilon=0.1, random_start=False))
    assert np.array_equal(out, x)


def test_determinism_and_seed_sensitivity():
    m = init_params(Architecture(3, 3, (6,)), 1)
    rng = np.random.default_rng(2)
    x = rng.random((10, 3))
    y = rng.integers(0, 3, 10)
    a = attack_batch(m, x, y, AttackConfig("rfgsm", epsilon=0.1, seed=5))
    b = attack_batch(m, x, y, AttackConfig("rfgsm", epsilon=0.1, seed=5))
    c = attack_batch(m, x, y, AttackConfig("rfgsm", epsilon=0.1, seed=6))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("norm", ["inf", "2"])
def test_batch_and_per_sample_agree(norm):
    m = init_params(Architecture(3, 2, (5,)), 3)
    rng = np.random.default_rng(4)
    x = rng.random((12, 3))
    y = rng.integers(0, 2, 12)
    cfg = AttackConfig("pgd", norm, epsilon=0.1, seed=9)
    batch = attack_batch(m, x, y, cfg)
    single = np.array([attack(m, x[i], y[i], cfg, index=i) for i in range(12)])
    chunks = np.vstack([attack_batch(m, x[i:i + 5], y[i:i + 5], cfg, indices=np.arange(i, min(i + 5, 12)))
                        for i in range(0, 12, 5)])
    assert np.allclose(batch, single, atol=1e-12, rtol=0)
    assert np.allclose(batch, chunks, atol=1e-12, rtol=0)


def _norm(delta, norm):
    return np.abs(delta).max(axis=1) if norm == "inf" else np.linalg.norm(delta, axis=1)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["pgd", "rfgsm"]), st.sampled_from(["inf", "2"]),
       st.floats(0.0, 0.5), st.integers(0, 2**31 - 1), st.booleans())
def test_budget_and_box_property(method, norm, eps, seed, random_start):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 6))
    m = init_params(Architecture(d, 3, (4,)), seed)
    x = rng.random((8, d))
    y = rng.integers(0, 3, 8)
    cfg = AttackConfig(method, norm, eps, steps=3, seed=seed, random_start=random_start)
    out = attack_batch(m, x, y, cfg)
    assert np.all(_norm(out - x, norm) <= eps + 1e-9)
    assert np.all((out >= 0.0) & (out <= 1.0))


@pytest.mark.parametrize("norm", ["inf", "2"])
def test_pgd_does_not_decrease_loss_on_linear_model(norm):
    rng = np.random.default_rng(8)
    for trial in range(20):
        m = init_params(Architecture(4, 3), trial)
        x = rng.normal(size=(6, 4))
        y = rng.integers(0, 3, 6)
        cfg = AttackConfig("pgd", norm, epsilon=0.2, random_start=False, steps=5, **UNBOUNDED)
        out = attack_batch(m, x, y, cfg)
        before, _ = loss_and_grad("cross_entropy", forward(m, x), y)
        after, _ = loss_and_grad("cross_entropy", forward(m, out), y)
        assert np.all(after >= before - 1e-12)
