"""RFGSM and PGD under l-inf and l2 budgets.

Random draws come from a counter-based hash of ``(seed, sample index,
coordinate, stream)``, so attacking a batch in one call, in chunks, or one
sample at a time draws the same noise; results then agree up to BLAS rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .losses import LossKind, loss_and_grad
from .models import SmallModel, backward_batch, forward_cache


@dataclass(frozen=True)
class AttackConfig:
    """``step_size`` defaults: PGD ``2.5 * epsilon / steps``; RFGSM random
    step ``epsilon / 2`` (the gradient step then uses what is left of the budget)."""

    method: str = "pgd"
    norm_order: str = "inf"
    epsilon: float = 0.0
    step_size: float | None = None
    steps: int = 10
    random_start: bool = True
    seed: int = 0
    clip_lo: float = 0.0
    clip_hi: float = 1.0
    loss: LossKind = LossKind.CROSS_ENTROPY

    def __post_init__(self):
        if self.method not in ("rfgsm", "pgd"):
            raise ValueError(f"method must be 'rfgsm' or 'pgd', got {self.method!r}")
        object.__setattr__(self, "norm_order", str(self.norm_order))
        if self.norm_order not in ("inf", "2"):
            raise ValueError(f"norm_order must be 'inf' or '2', got {self.norm_order!r}")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be >= 0")
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError("step_size must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if not self.clip_lo < self.clip_hi:
            raise ValueError("clip_lo must be < clip_hi")
        loss = LossKind.parse(self.loss)
        if loss is LossKind.ZERO_ONE:
            raise ValueError("attacks need a differentiable loss")
        object.__setattr__(self, "loss", loss)

    @property
    def effective_step(self) -> float:
        if self.step_size is not None:
            return self.step_size
        if self.method == "rfgsm":
            return self.epsilon / 2
        return 2.5 * self.epsilon / self.steps


# --------------------------------------------------------------------------
# counter-based randomness (splitmix64 finalizer)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _uniforms(seed: int, indices, dim: int, stream: int):
    """(n, dim) uniforms in [0, 1), a pure function of every coordinate's address."""
    key = _mix(np.uint64(int(seed) & _MASK))
    key = _mix(key ^ np.uint64(stream))
    idx = np.asarray(indices, dtype=np.uint64)[:, None]
    col = np.arange(dim, dtype=np.uint64)[None, :]
    with np.errstate(over="ignore"):
        z = _mix(_mix(key ^ idx) + col)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def _normals(seed, indices, dim, stream):
    u1 = _uniforms(seed, indices, dim, 2 * stream)
    u2 = _uniforms(seed, indices, dim, 2 * stream + 1)
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)


# --------------------------------------------------------------------------
# geometry

def _l2_norms(v):
    return np.sqrt((v * v).sum(axis=1, keepdims=True))


def _direction(grad, norm_order):
    if norm_order == "inf":
        return np.sign(grad)
    norms = _l2_norms(grad)
    return np.divide(grad, norms, out=np.zeros_like(grad), where=norms > 0)


def _project(x_adv, x, eps, norm_order, lo, hi):
    delta = x_adv - x
    if norm_order == "inf":
        delta = np.clip(delta, -eps, eps)
    else:
        norms = _l2_norms(delta)
        scale = np.minimum(1.0, np.divide(eps, norms, out=np.ones_like(norms), where=norms > 0))
        delta = delta * scale
    # clipping toward a box that contains x can only shrink |delta|
    return np.clip(x + delta, lo, hi)


def _random_unit(cfg, indices, dim, stream, radius_law):
    if cfg.norm_order == "inf":
        u = _uniforms(cfg.seed, indices, dim, stream)
        return 2.0 * u - 1.0 if radius_law else np.where(u < 0.5, -1.0, 1.0)
    z = _normals(cfg.seed, indices, dim, stream)
    z /= np.maximum(_l2_norms(z), 1e-300)
    if radius_law:
        r = _uniforms(cfg.seed, indices, 1, stream + 7) ** (1.0 / dim)
        z *= r
    return z


def input_gradient(model: SmallModel, X, labels, loss=LossKind.CROSS_ENTROPY):
    scores, cache = forward_cache(model, X)
    _, dscores = loss_and_grad(loss, scores, labels)
    _, gx = backward_batch(model, cache, dscores)
    return gx


# --------------------------------------------------------------------------
# attacks

def attack_batch(model: SmallModel, X, labels, cfg: AttackConfig, indices=None):
    """Adversarial counterparts of every row of ``X``.

    ``indices`` name each row for the random streams (default ``0..n-1``).
    """
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if X.ndim != 2:
        raise ValueError("attack_batch expects a 2-D batch")
    n, d = X.shape
    if cfg.epsilon == 0 or n == 0:
        return X.copy()
    if np.any(X < cfg.clip_lo) or np.any(X > cfg.clip_hi):
        raise ValueError(f"inputs must lie inside the clip box [{cfg.clip_lo}, {cfg.clip_hi}]")
    indices = np.arange(n) if indices is None else np.asarray(indices)
    eps, lo, hi = cfg.epsilon, cfg.clip_lo, cfg.clip_hi

    if cfg.method == "rfgsm":
        alpha = min(cfg.effective_step, eps)
        x_adv = np.clip(X + alpha * _random_unit(cfg, indices, d, 0, False), lo, hi)
        g = input_gradient(model, x_adv, labels, cfg.loss)
        x_adv = x_adv + (eps - alpha) * _direction(g, cfg.norm_order)
        return _project(x_adv, X, eps, cfg.norm_order, lo, hi)

    x_adv = X.copy()
    if cfg.random_start:
        x_adv = np.clip(X + eps * _random_unit(cfg, indices, d, 0, True), lo, hi)
    step = cfg.effective_step
    for _ in range(cfg.steps):
        g = input_gradient(model, x_adv, labels, cfg.loss)
        x_adv = _project(x_adv + step * _direction(g, cfg.norm_order), X, eps,
                         cfg.norm_order, lo, hi)
    return x_adv


def attack(model: SmallModel, x, label: int, cfg: AttackConfig, index: int = 0):
    """Adversarial example for one input vector."""
    x = np.asarray(x, dtype=float)
    return attack_batch(model, x[None, :], np.array([label]), cfg, indices=[index])[0]
