"""Brute-force numerical machinery used to check the closed forms.

Nothing here imports :mod:`fairrobust.mixture_theory`. Error curves use
``scipy.special.ndtr`` (Cephes) or adaptive quadrature of the raw density,
never the theory module's erfc-based CDF, and all population functionals
accept an arbitrary class prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize, special

from .population import GaussianMixtureSpec, ThresholdClassifier, TheoryBudget

_SQRT2PI = math.sqrt(2.0 * math.pi)
_MAX_GRID_POINTS = 10**8


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"grid step must be > 0, got {self.step}")
        if not self.lo < self.hi:
            raise ValueError(f"grid needs lo < hi, got [{self.lo}, {self.hi}]")
        if (self.hi - self.lo) / self.step > _MAX_GRID_POINTS:
            raise ValueError("grid would exceed 1e8 points")

    def points(self) -> np.ndarray:
        n = int(math.floor((self.hi - self.lo) / self.step + 1e-9))
        return self.lo + self.step * np.arange(n + 1)


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-13
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.abs_tol >= 1e-14:
            raise ValueError(f"abs_tol must be >= 1e-14, got {self.abs_tol}")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be positive")


def _theta(clf) -> float:
    return clf.theta if isinstance(clf, ThresholdClassifier) else float(clf)


def _eps(budget) -> float:
    eps = budget.epsilon if isinstance(budget, TheoryBudget) else float(budget)
    if eps < 0:
        raise ValueError("perturbation budget must be >= 0")
    return eps


# --------------------------------------------------------------------------
# quadrature

def _std_pdf(z):
    return math.exp(-0.5 * z * z) / _SQRT2PI


def integrate_gaussian_event(mu: float, sigma: float, lo: float, hi: float,
                             quad: QuadratureConfig = QuadratureConfig()) -> float:
    """Probability that ``N(mu, sigma^2)`` falls in ``[lo, hi]``, by adaptive quadrature."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if lo > hi:
        raise ValueError(f"interval is empty: lo={lo} > hi={hi}")
    # standardize, then drop tails below double precision
    a = max((lo - mu) / sigma, -40.0)
    b = min((hi - mu) / sigma, 40.0)
    if a >= b:
        return 0.0
    cuts = [a] + [c for c in (-8.0, -4.0, -1.0, 0.0, 1.0, 4.0, 8.0) if a < c < b] + [b]
    tol = quad.abs_tol / len(cuts)
    total = 0.0
    for left, right in zip(cuts[:-1], cuts[1:]):
        val, _ = integrate.quad(_std_pdf, left, right, epsabs=tol, epsrel=0.0,
                                limit=quad.max_subdivisions)
        total += val
    return total


def quad_natural_error(spec: GaussianMixtureSpec, clf,
                       quad: QuadratureConfig = QuadratureConfig()) -> float:
    t, p = _theta(clf), spec.prior_plus
    err_plus = integrate_gaussian_event(spec.mu_plus, spec.k_ratio, -math.inf, t, quad)
    err_minus = integrate_gaussian_event(spec.mu_minus, 1.0, t, math.inf, quad)
    return p * err_plus + (1 - p) * err_minus


def quad_robust_error(spec: GaussianMixtureSpec, clf, budget,
                      quad: QuadratureConfig = QuadratureConfig()) -> float:
    t, eps, p = _theta(clf), _eps(budget), spec.prior_plus
    err_plus = integrate_gaussian_event(spec.mu_plus, spec.k_ratio, -math.inf, t + eps, quad)
    err_minus = integrate_gaussian_event(spec.mu_minus, 1.0, t - eps, math.inf, quad)
    return p * err_plus + (1 - p) * err_minus


def quad_boundary_error(spec: GaussianMixtureSpec, clf, budget,
                        quad: QuadratureConfig = QuadratureConfig()) -> float:
    t, eps, p = _theta(clf), _eps(budget), spec.prior_plus
    plus = integrate_gaussian_event(spec.mu_plus, spec.k_ratio, t, t + eps, quad) if eps else 0.0
    minus = integrate_gaussian_event(spec.mu_minus, 1.0, t - eps, t, quad) if eps else 0.0
    return p * plus + (1 - p) * minus


def quad_avg_distance(spec: GaussianMixtureSpec, clf,
                      quad: QuadratureConfig = QuadratureConfig()) -> float:
    """``E|X - theta|`` by integrating ``|x - theta|`` against each class density."""
    t, p = _theta(clf), spec.prior_plus

    def component(mu, sigma):
        f = lambda x: abs(x - t) * math.exp(-0.5 * ((x - mu) / sigma) ** 2) / (sigma * _SQRT2PI)
        lo, hi = mu - 40 * sigma, mu + 40 * sigma
        cuts = sorted({lo, hi, *(c for c in (t, mu) if lo < c < hi)})
        return sum(integrate.quad(f, a, b, epsabs=quad.abs_tol, epsrel=0.0,
                                  limit=quad.max_subdivisions)[0]
                   for a, b in zip(cuts[:-1], cuts[1:]))

    return (1 - p) * component(spec.mu_minus, 1.0) + p * component(spec.mu_plus, spec.k_ratio)


# --------------------------------------------------------------------------
# vectorized error curves (Cephes ndtr), used to sweep dense grids

def curve_group_errors(spec: GaussianMixtureSpec, theta):
    t = np.asarray(theta, dtype=float)
    return special.ndtr((t - spec.mu_plus) / spec.k_ratio), special.ndtr(spec.mu_minus - t)


def curve_natural_error(spec: GaussianMixtureSpec, theta):
    e_plus, e_minus = curve_group_errors(spec, theta)
    return spec.prior_plus * e_plus + (1 - spec.prior_plus) * e_minus


def curve_robust_error(spec: GaussianMixtureSpec, theta, budget):
    t, eps = np.asarray(theta, dtype=float), _eps(budget)
    p = spec.prior_plus
    return (p * special.ndtr((t + eps - spec.mu_plus) / spec.k_ratio)
            + (1 - p) * special.ndtr(spec.mu_minus - t + eps))


def curve_penalized_error(spec: GaussianMixtureSpec, theta, lam: float):
    """``e_plus + e_minus + lam * |e_plus - e_minus|`` on a threshold grid.

    This is the class-error sum whose minimizer has the ``(K-1)/(K+1)``
    breakpoint. Writing the same trade-off as ``natural + lam * |gap|`` with
    ``natural = (e_plus + e_minus) / 2`` halves the effective ``lam``.
    """
    e_plus, e_minus = curve_group_errors(spec, theta)
    return e_plus + e_minus + lam * np.abs(e_plus - e_minus)


# --------------------------------------------------------------------------
# 1-D search

def grid_minimize(objective, grid: GridSpec, vectorized: bool = False):
    """Grid point of minimum objective value; ties go to the lowest point.

    With ``vectorized`` the objective is called once on the whole grid array.
    """
    xs = grid.points()
    if vectorized:
        vals = np.asarray(objective(xs), dtype=float)
    else:
        vals = np.array([objective(float(x)) for x in xs], dtype=float)
    bad = np.flatnonzero(np.isnan(vals))
    if bad.size:
        raise ValueError(f"objective is NaN at grid point x={xs[bad[0]]!r}")
    i = int(np.argmin(vals))
    return float(xs[i]), float(vals[i])


def bisect_root(f, lo: float, hi: float, xtol: float = 1e-13) -> float:
    """Root of ``f`` bracketed by a sign change on ``[lo, hi]``."""
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    return optimize.bisect(f, lo, hi, xtol=xtol, maxiter=400)


def grid_natural_threshold(spec: GaussianMixtureSpec, step: float = 1e-5):
    grid = GridSpec(spec.mu_minus, spec.mu_plus, step)
    return grid_minimize(lambda t: curve_natural_error(spec, t), grid, vectorized=True)


def grid_robust_threshold(spec: GaussianMixtureSpec, budget, step: float = 1e-5):
    grid = GridSpec(spec.mu_minus, spec.mu_plus, step)
    return grid_minimize(lambda t: curve_robust_error(spec, t, budget), grid, vectorized=True)


def grid_penalized_threshold(spec: GaussianMixtureSpec, lam: float, step: float = 1e-5):
    grid = GridSpec(spec.mu_minus, spec.mu_plus, step)
    return grid_minimize(lambda t: curve_penalized_error(spec, t, lam), grid, vectorized=True)


def grid_fair_threshold(spec: GaussianMixtureSpec, step: float = 1e-5):
    grid = GridSpec(spec.mu_minus, spec.mu_plus, step)

    def gap(t):
        e_plus, e_minus = curve_group_errors(spec, t)
        return np.abs(e_plus - e_minus)

    return grid_minimize(gap, grid, vectorized=True)


# --------------------------------------------------------------------------
# Monte Carlo

def monte_carlo_error(spec: GaussianMixtureSpec, clf, budget, n_samples: int, seed: int,
                      chunk: int = 1_000_000):
    """Sampled robust error of a threshold rule, with its binomial standard error.

    A sample is an error if shifting it by eps toward theta misclassifies it
    (``eps = 0`` gives the natural error).
    """
    if n_samples < 1000:
        raise ValueError("monte_carlo_error needs n_samples >= 1000")
    t, eps = _theta(clf), _eps(budget)
    rng = np.random.default_rng(seed)
    errors = 0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        plus = rng.random(m) < spec.prior_plus
        z = rng.standard_normal(m)
        x = np.where(plus, spec.mu_plus + spec.k_ratio * z, spec.mu_minus + z)
        wrong = np.where(plus, x - eps <= t, x + eps > t)
        errors += int(np.count_nonzero(wrong))
        done += m
    est = errors / n_samples
    return est, math.sqrt(est * (1 - est) / n_samples)


# --------------------------------------------------------------------------
# erf from first principles (for hand-checkable expected values)

def erf_series(x: float) -> float:
    """erf from the positive-term series
    ``2/sqrt(pi) * exp(-x^2) * sum_n 2^n x^(2n+1) / (2n+1)!!`` for |x| <= 4,
    the Laplace continued fraction for erfc beyond."""
    x = float(x)
    ax = abs(x)
    if ax <= 4.0:
        term = ax
        total = ax
        n = 0
        while term > 1e-17 * total:
            n += 1
            term *= 2.0 * ax * ax / (2 * n + 1)
            total += term
        val = 2.0 / math.sqrt(math.pi) * math.exp(-ax * ax) * total
    else:
        frac = 0.0
        for k in range(80, 0, -1):
            frac = (k / 2.0) / (ax + frac)
        val = 1.0 - math.exp(-ax * ax) / math.sqrt(math.pi) / (ax + frac)
    return math.copysign(val, x)


def normal_cdf_series(z: float) -> float:
    return 0.5 * (1.0 + erf_series(z / math.sqrt(2.0)))
