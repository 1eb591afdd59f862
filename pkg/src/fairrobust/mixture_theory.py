"""Closed-form optimal thresholds and exact error functionals for the
two-Gaussian population (class -1 ~ N(mu_minus, 1), class +1 ~ N(mu_plus, K^2)).

Every functional accepts the threshold either as a :class:`ThresholdClassifier`,
a float, or a numpy array of thresholds, and budgets either as a
:class:`TheoryBudget` or a plain float.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .population import GaussianMixtureSpec, ThresholdClassifier, TheoryBudget

__all__ = [
    "GaussianMixtureSpec",
    "ThresholdClassifier",
    "TheoryBudget",
    "RegimeError",
    "RegimeBounds",
    "InequalityRecord",
    "TheoremReport",
    "normal_cdf",
    "normal_pdf",
    "natural_error",
    "group_errors",
    "robust_error",
    "boundary_error",
    "avg_boundary_distance",
    "natural_error_derivative",
    "robust_error_derivative",
    "boundary_error_derivative",
    "avg_distance_derivative",
    "robust_threshold_eps_derivative",
    "aux_g",
    "aux_p",
    "aux_q",
    "optimal_natural_threshold",
    "fair_threshold",
    "robust_threshold",
    "penalized_fair_threshold",
    "penalty_breakpoint",
    "phi",
    "phi_inverse",
    "regime_bounds",
    "verify_theorems",
]

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
SLACK = 1e-12


class RegimeError(ValueError):
    """A closed form was requested outside the parameter regime it is proven for."""


# --------------------------------------------------------------------------
# standard normal primitives

_erfc = np.vectorize(math.erfc, otypes=[float])


def normal_cdf(z):
    """Standard normal CDF via the complementary error function."""
    if np.ndim(z) == 0:
        return 0.5 * math.erfc(-float(z) / _SQRT2)
    return 0.5 * _erfc(-np.asarray(z, dtype=float) / _SQRT2)


def normal_pdf(z):
    if np.ndim(z) == 0:
        z = float(z)
        return math.exp(-0.5 * z * z) / _SQRT2PI
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / _SQRT2PI


# --------------------------------------------------------------------------
# argument helpers

def _theta(clf):
    if isinstance(clf, ThresholdClassifier):
        return clf.theta
    if np.ndim(clf) == 0:
        return float(clf)
    return np.asarray(clf, dtype=float)


def _eps(budget):
    eps = budget.epsilon if isinstance(budget, TheoryBudget) else float(budget)
    if not eps >= 0:
        raise ValueError(f"perturbation budget must be >= 0, got {eps}")
    return eps


def _require_balanced(spec: GaussianMixtureSpec):
    if not spec.balanced:
        raise ValueError(
            "closed forms assume a balanced population (prior_plus = 0.5), "
            f"got prior_plus = {spec.prior_plus}")


def _clamp(spec: GaussianMixtureSpec, theta: float) -> ThresholdClassifier:
    if theta < spec.mu_minus:
        return ThresholdClassifier(spec.mu_minus, clamped=True)
    if theta > spec.mu_plus:
        return ThresholdClassifier(spec.mu_plus, clamped=True)
    return ThresholdClassifier(float(theta))


# --------------------------------------------------------------------------
# error functionals

def group_errors(spec: GaussianMixtureSpec, clf):
    """Per-class misclassification rates ``(err_plus, err_minus)``."""
    t = _theta(clf)
    err_plus = normal_cdf((t - spec.mu_plus) / spec.k_ratio)
    err_minus = normal_cdf(spec.mu_minus - t)
    return err_plus, err_minus


def natural_error(spec: GaussianMixtureSpec, clf):
    _require_balanced(spec)
    err_plus, err_minus = group_errors(spec, clf)
    return 0.5 * err_plus + 0.5 * err_minus


def robust_error(spec: GaussianMixtureSpec, clf, budget):
    """Worst case over ``|tau| <= eps``; in 1-D the adversary shifts toward theta."""
    _require_balanced(spec)
    t, eps = _theta(clf), _eps(budget)
    return (0.5 * normal_cdf((t + eps - spec.mu_plus) / spec.k_ratio)
            + 0.5 * normal_cdf(spec.mu_minus - (t - eps)))


def boundary_error(spec: GaussianMixtureSpec, clf, budget):
    """Mass of correctly classified points lying within ``eps`` of theta."""
    _require_balanced(spec)
    t, eps = _theta(clf), _eps(budget)
    k, mp, mm = spec.k_ratio, spec.mu_plus, spec.mu_minus
    plus = normal_cdf((t + eps - mp) / k) - normal_cdf((t - mp) / k)
    minus = normal_cdf(t - mm) - normal_cdf(t - eps - mm)
    return 0.5 * plus + 0.5 * minus


def _mean_abs_dev(mu, sigma, c):
    # E|Z - c| for Z ~ N(mu, sigma^2)
    z = (c - mu) / sigma
    return sigma * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z))


def avg_boundary_distance(spec: GaussianMixtureSpec, clf):
    """``E|X - theta|``: exact mean distance to a 1-D threshold boundary."""
    t = _theta(clf)
    p = spec.prior_plus
    return ((1.0 - p) * _mean_abs_dev(spec.mu_minus, 1.0, t)
            + p * _mean_abs_dev(spec.mu_plus, spec.k_ratio, t))


# --------------------------------------------------------------------------
# derivatives in theta and auxiliary functions of the boundary-error argument

def natural_error_derivative(spec: GaussianMixtureSpec, clf):
    return robust_error_derivative(spec, clf, 0.0)


def robust_error_derivative(spec: GaussianMixtureSpec, clf, budget):
    t, eps, k = _theta(clf), _eps(budget), spec.k_ratio
    return (np.exp(-((t + eps - spec.mu_plus) ** 2) / (2 * k * k))
            - k * np.exp(-((t - eps - spec.mu_minus) ** 2) / 2)) / (2 * k * _SQRT2PI)


def aux_g(spec: GaussianMixtureSpec, clf, budget):
    t, eps, k = _theta(clf), _eps(budget), spec.k_ratio
    return (np.exp(-((t + eps - spec.mu_plus) ** 2) / (2 * k * k)) / k
            - np.exp(-((t - eps - spec.mu_minus) ** 2) / 2))


def boundary_error_derivative(spec: GaussianMixtureSpec, clf, budget):
    return (aux_g(spec, clf, budget) - aux_g(spec, clf, 0.0)) / (2 * _SQRT2PI)


def aux_p(spec: GaussianMixtureSpec, clf, budget):
    t, eps, k = _theta(clf), _eps(budget), spec.k_ratio
    return (np.log((t - eps - spec.mu_minus) ** 2)
            - np.log((spec.mu_plus - t - eps) ** 2 / (k * k)))


def aux_q(spec: GaussianMixtureSpec, clf, budget):
    t, eps, k = _theta(clf), _eps(budget), spec.k_ratio
    return (t - eps - spec.mu_minus) ** 2 - (spec.mu_plus - t - eps) ** 2 / (k * k)


def avg_distance_derivative(spec: GaussianMixtureSpec, clf):
    """d/dtheta of E|X - theta| for the balanced mixture.

    Zero exactly at the fair threshold, negative left of it, positive right.
    """
    _require_balanced(spec)
    t = _theta(clf)
    return normal_cdf(t - spec.mu_minus) - normal_cdf((spec.mu_plus - t) / spec.k_ratio)


def robust_threshold_eps_derivative(spec: GaussianMixtureSpec, budget) -> float:
    """d theta_r / d eps of the unclamped closed form."""
    eps, k = _eps(budget), spec.k_ratio
    r = spec.gap - 2 * eps
    root = math.sqrt(r * r + 2 * (k * k - 1) * math.log(k))
    return (k * k + 1 - 2 * r * k / root) / (k * k - 1)


# --------------------------------------------------------------------------
# optimal thresholds

def _bayes_like(spec: GaussianMixtureSpec, log_term: float, eps: float = 0.0) -> float:
    k, d = spec.k_ratio, spec.gap
    k2m1 = k * k - 1
    return (spec.mu_minus - (d - (k * k + 1) * eps) / k2m1
            + k / k2m1 * math.sqrt(2 * k2m1 * log_term + (d - 2 * eps) ** 2))


def optimal_natural_threshold(spec: GaussianMixtureSpec) -> ThresholdClassifier:
    """Bayes threshold theta*, clamped to [mu_minus, mu_plus]."""
    _require_balanced(spec)
    return _clamp(spec, _bayes_like(spec, math.log(spec.k_ratio)))


def fair_threshold(spec: GaussianMixtureSpec) -> ThresholdClassifier:
    """The unique threshold equalizing the two class error rates."""
    _require_balanced(spec)
    return ThresholdClassifier(spec.mu_minus + spec.gap / (spec.k_ratio + 1))


def robust_threshold(spec: GaussianMixtureSpec, budget, strict: bool = True) -> ThresholdClassifier:
    """Minimizer of the robust error at radius ``eps``.

    With ``strict`` the regime ``eps <= gap/2``, ``K <= B_K`` is enforced;
    otherwise the closed form is evaluated anyway and clamped.
    """
    _require_balanced(spec)
    eps = _eps(budget)
    if strict:
        if eps > spec.gap / 2:
            raise RegimeError(
                f"epsilon={eps} exceeds (mu_plus - mu_minus)/2 = {spec.gap / 2}")
        b_k = regime_bounds(spec, eps).b_k
        if spec.k_ratio > b_k:
            raise RegimeError(f"k_ratio={spec.k_ratio} exceeds B_K = {b_k}")
    return _clamp(spec, _bayes_like(spec, math.log(spec.k_ratio), eps))


def penalty_breakpoint(spec: GaussianMixtureSpec) -> float:
    """Penalty weight above which the penalized optimum is exactly the fair threshold."""
    k = spec.k_ratio
    return (k - 1) / (k + 1)


def penalized_fair_threshold(spec: GaussianMixtureSpec, lam: float) -> ThresholdClassifier:
    """Minimizer of ``err_plus + err_minus + lam * |err_plus - err_minus|``.

    Equivalently ``natural_error + (lam / 2) * |err_plus - err_minus|`` for the
    balanced mixture; the breakpoint is ``(K-1)/(K+1)`` in this scaling.
    """
    _require_balanced(spec)
    if not lam >= 0:
        raise ValueError(f"penalty weight must be >= 0, got {lam}")
    if lam > penalty_breakpoint(spec):
        return fair_threshold(spec)
    log_term = math.log((1 - lam) / (1 + lam) * spec.k_ratio)
    # rounding near the breakpoint can push the log a hair below zero
    log_term = max(log_term, 0.0)
    return _clamp(spec, _bayes_like(spec, log_term))


# --------------------------------------------------------------------------
# regime bounds

def phi(x):
    return x + 1.0 / x


def phi_inverse(y):
    """Inverse of ``x + 1/x`` on ``[1, inf) -> [2, inf)``."""
    if np.ndim(y) == 0:
        y = float(y)
        if y < 2:
            raise ValueError(f"phi_inverse is defined on [2, inf), got {y}")
        if math.isinf(y):
            return math.inf
        return (y + math.sqrt(y * y - 4.0)) / 2.0
    y = np.asarray(y, dtype=float)
    if np.any(y < 2):
        raise ValueError("phi_inverse is defined on [2, inf)")
    return (y + np.sqrt(y * y - 4.0)) / 2.0


class RegimeBounds(NamedTuple):
    b_k: float
    b_k_bar: float


def regime_bounds(spec: GaussianMixtureSpec, budget) -> RegimeBounds:
    """Upper bounds on K for the ordering results (``b_k``) and the
    boundary-error ordering (``b_k_bar``; NaN when ``eps > gap/4``)."""
    eps, d = _eps(budget), spec.gap
    r = d - 2 * eps
    tail = math.exp(r * r / 2) if r * r / 2 < 700 else math.inf
    if eps == 0:
        return RegimeBounds(tail, tail)
    b_k = min(tail, d / eps - 1)
    y = d / eps - 2
    b_k_bar = min(tail, phi_inverse(y)) if y >= 2 else math.nan
    return RegimeBounds(b_k, b_k_bar)


# --------------------------------------------------------------------------
# theorem report

@dataclass
class InequalityRecord:
    """``lhs <= rhs`` checked with a 1e-12 slack."""

    name: str
    lhs: float
    rhs: float
    passed: bool
    regime_ok: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "lhs": self.lhs, "rhs": self.rhs,
                "pass": self.passed, "regime_ok": self.regime_ok}


@dataclass
class TheoremReport:
    spec: GaussianMixtureSpec
    epsilon: float
    bounds: RegimeBounds
    thresholds: dict
    clamped: dict
    records: list = field(default_factory=list)

    @property
    def in_regime(self) -> bool:
        return any(r.regime_ok for r in self.records)

    @property
    def all_passed(self) -> bool:
        """True iff every in-regime inequality holds."""
        return all(r.passed for r in self.records if r.regime_ok)

    def failures(self) -> list:
        return [r for r in self.records if r.regime_ok and not r.passed]

    def get(self, name: str) -> InequalityRecord:
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "spec": asdict(self.spec),
            "epsilon": self.epsilon,
            "b_k": self.bounds.b_k,
            "b_k_bar": None if math.isnan(self.bounds.b_k_bar) else self.bounds.b_k_bar,
            "thresholds": dict(self.thresholds),
            "clamped": dict(self.clamped),
            "status": ("pass" if self.all_passed else "fail") if self.in_regime
            else "out of regime",
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def verify_theorems(spec: GaussianMixtureSpec, budget) -> TheoremReport:
    """Evaluate every ordering claim for the three optimal thresholds.

    Inputs outside the proven regime still produce a full report; those
    records carry ``regime_ok=False`` and do not count against ``all_passed``.
    """
    _require_balanced(spec)
    eps, d = _eps(budget), spec.gap
    bounds = regime_bounds(spec, eps)
    k = spec.k_ratio
    main_ok = eps <= d / 2 and k <= bounds.b_k
    bdy_ok = main_ok and eps <= d / 4 and k <= bounds.b_k_bar

    fair = fair_threshold(spec)
    nat = optimal_natural_threshold(spec)
    rob = robust_threshold(spec, eps, strict=False)
    tf, ts, tr = fair.theta, nat.theta, rob.theta

    records = []

    def le(name, lhs, rhs, ok):
        lhs, rhs = float(lhs), float(rhs)
        records.append(InequalityRecord(name, lhs, rhs, lhs <= rhs + SLACK, ok))

    le("thresholds.margin_below_fair", spec.mu_minus + eps, tf, main_ok)
    le("thresholds.fair_le_natural", tf, ts, main_ok)
    le("thresholds.natural_le_robust", ts, tr, main_ok)
    le("thresholds.robust_below_margin", tr, spec.mu_plus - eps, main_ok)
    if eps < d / 2:
        # increasing in eps <=> -d theta_r / d eps <= 0, required strictly
        slope = robust_threshold_eps_derivative(spec, eps)
        records.append(InequalityRecord(
            "thresholds.robust_increasing_in_eps", -slope, 0.0, slope > 0, main_ok))

    le("robust_error.natural_le_fair",
       robust_error(spec, ts, eps), robust_error(spec, tf, eps), main_ok)
    le("robust_error.robust_le_natural",
       robust_error(spec, tr, eps), robust_error(spec, ts, eps), main_ok)

    le("boundary_error.natural_le_fair",
       boundary_error(spec, ts, eps), boundary_error(spec, tf, eps), bdy_ok)
    le("boundary_error.robust_le_natural",
       boundary_error(spec, tr, eps), boundary_error(spec, ts, eps), bdy_ok)

    le("distance.fair_le_natural",
       avg_boundary_distance(spec, tf), avg_boundary_distance(spec, ts), main_ok)
    le("distance.natural_le_robust",
       avg_boundary_distance(spec, ts), avg_boundary_distance(spec, tr), main_ok)

    return TheoremReport(
        spec=spec,
        epsilon=eps,
        bounds=bounds,
        thresholds={"fair": tf, "natural": ts, "robust": tr},
        clamped={"fair": fair.clamped, "natural": nat.clamped, "robust": rob.clamped},
        records=records,
    )
