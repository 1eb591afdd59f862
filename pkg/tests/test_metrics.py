import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairrobust import mixture_theory as mt
from fairrobust.attacks import AttackConfig
from fairrobust.data import LabeledDataset, MixtureSampleConfig, sample_mixture
from fairrobust.metrics import REPORT_COLUMNS, evaluate, fairness_violation, margin_proxy
from fairrobust.models import Architecture, forward, init_params, threshold_model
from fairrobust.population import GaussianMixtureSpec

UNBOUNDED = dict(clip_lo=-math.inf, clip_hi=math.inf)


def test_fairness_violation_examples():
    assert fairness_violation({0: 0.3, 1: 0.3}, 0.3) == 0.0
    assert fairness_violation({0: 0.2, 1: 0.6}, 0.4) == pytest.approx(0.2)
    assert fairness_violation({0: 0.25}, 0.25) == 0.0


def test_zero_budget_report():
    ds = sample_mixture(MixtureSampleConfig(GaussianMixtureSpec(-1, 1, 3), 500, seed=1))
    rep = evaluate(threshold_model(0.2), ds, AttackConfig(epsilon=0.0, **UNBOUNDED))
    assert rep.boundary_error == 0.0
    assert rep.robust_error == rep.natural_error


def test_separable_data_all_errors_zero():
    x = np.array([[-2.0], [-1.5], [1.5], [2.0]])
    ds = LabeledDataset(x, [0, 0, 1, 1], [0, 0, 1, 1], 2, 2)
    rep = evaluate(threshold_model(0.0), ds, AttackConfig("pgd", epsilon=0.7, **UNBOUNDED))
    assert rep.natural_error == rep.robust_error == rep.boundary_error == 0.0
    assert rep.fairness_violation == 0.0


def test_empty_group_rejected():
    ds = LabeledDataset(np.zeros((3, 1)), [0, 0, 0], [0, 1, 0], 2, 2)
    with pytest.raises(ValueError, match="no samples"):
        evaluate(threshold_model(0.0), ds, AttackConfig(**UNBOUNDED))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 0.5), st.sampled_from(["pgd", "rfgsm"]))
def test_decomposition_identity_exact(seed, eps, method):
    ds = sample_mixture(MixtureSampleConfig(GaussianMixtureSpec(-1, 1, 4), 200, seed=seed, dims=3))
    m = init_params(Architecture(3, 2, (5,)), seed)
    rep = evaluate(m, ds, AttackConfig(method, epsilon=eps, steps=3, seed=seed, **UNBOUNDED))
    assert rep.robust_error == rep.natural_error + rep.boundary_error
    assert rep.fairness_violation == max(abs(e - rep.natural_error) for e in rep.per_group_error.values())
    weights = {a: np.mean(ds.groups == a) for a in rep.per_group_error}
    recon = sum(weights[a] * e for a, e in rep.per_group_error.items())
    assert abs(recon - rep.natural_error) <= 1e-12


def test_margin_proxy_shift_invariant():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(50, 4))
    assert np.allclose(margin_proxy(s + 12.5), margin_proxy(s), atol=1e-12)
    assert np.all(margin_proxy(s) >= 0)


def test_threshold_model_matches_closed_forms():
    spec = GaussianMixtureSpec(-1.0, 1.0, 5.0)
    ds = sample_mixture(MixtureSampleConfig(spec, 100_000, seed=12))
    theta, eps = 0.3, 0.1
    rep = evaluate(threshold_model(theta), ds,
                   AttackConfig("pgd", epsilon=eps, steps=2, random_start=False, **UNBOUNDED))
    n = len(ds)
    for got, exact in ((rep.natural_error, mt.natural_error(spec, theta)),
                       (rep.robust_error, mt.robust_error(spec, theta, eps)),
                       (rep.boundary_error, mt.boundary_error(spec, theta, eps))):
        se = math.sqrt(exact * (1 - exact) / n)
        assert abs(got - exact) <= 4 * se


def test_report_serialization():
    ds = sample_mixture(MixtureSampleConfig(GaussianMixtureSpec(-1, 1, 3), 300, seed=1))
    rep = evaluate(threshold_model(0.0), ds, AttackConfig(epsilon=0.1, **UNBOUNDED))
    assert rep.columns()[:len(REPORT_COLUMNS)] == list(REPORT_COLUMNS)
    assert len(rep.columns()) == len(rep.csv_row()) == len(REPORT_COLUMNS) + 4
    d = json.loads(rep.to_json())
    assert d["per_group_error"].keys() == {"0", "1"}
    assert d["robust_error"] == rep.robust_error
