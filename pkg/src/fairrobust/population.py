"""Value types describing the two-Gaussian population and 1-D threshold rules.

Class ``-1`` is ``N(mu_minus, 1)``, class ``+1`` is ``N(mu_plus, k_ratio**2)``.
These types are shared by the closed-form theory and the numerical oracle so
that neither has to import the other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianMixtureSpec:
    mu_minus: float
    mu_plus: float
    k_ratio: float
    prior_plus: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.mu_minus) and math.isfinite(self.mu_plus)):
            raise ValueError("class means must be finite")
        if not self.mu_minus < self.mu_plus:
            raise ValueError(
                f"mu_minus ({self.mu_minus}) must be < mu_plus ({self.mu_plus})")
        if not self.k_ratio > 1:
            raise ValueError(f"k_ratio must be > 1, got {self.k_ratio}")
        if not 0.0 <= self.prior_plus <= 1.0:
            raise ValueError(f"prior_plus must lie in [0, 1], got {self.prior_plus}")

    @property
    def gap(self) -> float:
        """Distance between the class means."""
        return self.mu_plus - self.mu_minus

    @property
    def balanced(self) -> bool:
        return self.prior_plus == 0.5


@dataclass(frozen=True)
class ThresholdClassifier:
    """Predicts +1 iff ``x > theta``; ``x == theta`` goes to -1.

    ``clamped`` records that a closed form left ``[mu_minus, mu_plus]`` and the
    value was pulled back onto the interval.
    """

    theta: float
    clamped: bool = False

    def predict(self, x):
        return np.where(np.asarray(x) > self.theta, 1, -1)


@dataclass(frozen=True)
class TheoryBudget:
    epsilon: float = 0.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError(f"perturbation budget must be >= 0, got {self.epsilon}")
