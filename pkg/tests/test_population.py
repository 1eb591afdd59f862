import math

import numpy as np
import pytest

from fairrobust.population import GaussianMixtureSpec, ThresholdClassifier, TheoryBudget


@pytest.mark.parametrize("args", [(1.0, -1.0, 2.0), (0.0, 0.0, 2.0), (-1.0, 1.0, 1.0),
                                  (-1.0, 1.0, 0.5), (-1.0, 1.0, 2.0, 1.5),
                                  (-math.inf, 1.0, 2.0), (-1.0, math.nan, 2.0)])
def test_spec_rejects_invalid(args):
    with pytest.raises(ValueError):
        GaussianMixtureSpec(*args)


def test_spec_properties():
    s = GaussianMixtureSpec(-1.0, 2.0, 3.0)
    assert s.gap == 3.0 and s.balanced
    assert not GaussianMixtureSpec(-1.0, 2.0, 3.0, 0.3).balanced


def test_ties_go_to_negative_class():
    clf = ThresholdClassifier(0.5)
    assert clf.predict(np.array([0.4, 0.5, 0.6])).tolist() == [-1, -1, 1]


def test_budget_must_be_nonnegative():
    with pytest.raises(ValueError):
        TheoryBudget(-0.1)
    with pytest.raises(ValueError):
        TheoryBudget(math.nan)
