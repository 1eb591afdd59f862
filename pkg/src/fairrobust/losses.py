"""Per-sample surrogate losses and the batch training objectives.

Margin losses use ``m = s[label] - max_{j != label} s[j]``; with two classes
this is exactly ``Y * f(X)`` for ``f = s_1 - s_0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .models import SmallModel, backward_batch, forward_cache


class LossKind(str, Enum):
    CROSS_ENTROPY = "cross_entropy"
    LOG = "log_loss"
    EXP = "exp_loss"
    RAMP = "ramp"
    ZERO_ONE = "zero_one"

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown loss {value!r}; choose from {names}") from None


class FairnessMode(str, Enum):
    NONE = "none"
    PENALTY = "penalty"
    GROUP_Q = "group_q"


@dataclass(frozen=True)
class FairnessConfig:
    """``lam`` weights the accuracy-parity penalty, ``q`` the group-loss exponent.

    ``penalty_group`` restricts the penalty to a single group (the
    single-group reading of the joint fair+robust objective); ``None`` sums
    over every group in the batch.
    """

    mode: FairnessMode = FairnessMode.NONE
    lam: float = 0.0
    q: float = 0.0
    alpha_target: float = 0.0
    penalty_group: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", FairnessMode(self.mode))
        if self.lam < 0 or self.q < 0 or self.alpha_target < 0:
            raise ValueError("lam, q and alpha_target must all be >= 0")


@dataclass(frozen=True)
class DefenseConfig:
    """PGD adversarial training margin; ``epsilon_star = 0`` trains on clean data.

    ``attack_loss`` drives the inner PGD; ``None`` reuses the training loss.
    Cross-entropy is the default because the ramp loss has no gradient
    outside its margin band, which leaves PGD stalled.
    """

    epsilon_star: float = 0.0
    norm_order: str = "inf"
    pgd_steps: int = 10
    pgd_step_size: float | None = None
    clip_lo: float = -math.inf
    clip_hi: float = math.inf
    attack_loss: LossKind | None = LossKind.CROSS_ENTROPY

    def __post_init__(self):
        if self.attack_loss is not None:
            object.__setattr__(self, "attack_loss", LossKind.parse(self.attack_loss))
        if self.epsilon_star < 0:
            raise ValueError("epsilon_star must be >= 0")
        if str(self.norm_order) not in ("inf", "2"):
            raise ValueError(f"norm_order must be 'inf' or '2', got {self.norm_order!r}")
        object.__setattr__(self, "norm_order", str(self.norm_order))
        if self.pgd_steps < 1:
            raise ValueError("pgd_steps must be positive")
        if self.pgd_step_size is not None and not self.pgd_step_size > 0:
            raise ValueError("pgd_step_size must be > 0")

    @property
    def active(self) -> bool:
        return self.epsilon_star > 0

    def attack_config(self, loss, seed: int):
        from .attacks import AttackConfig

        return AttackConfig(method="pgd", norm_order=self.norm_order,
                            epsilon=self.epsilon_star, step_size=self.pgd_step_size,
                            steps=self.pgd_steps, random_start=True, seed=seed,
                            clip_lo=self.clip_lo, clip_hi=self.clip_hi,
                            loss=self.attack_loss or loss)


class EmptyGroupError(ValueError):
    def __init__(self, group):
        super().__init__(f"group {group} has no samples in this batch")
        self.group = group


# --------------------------------------------------------------------------
# per-sample losses

def margins(scores, labels):
    """Margin and the index of the strongest competing class, per row."""
    scores = np.asarray(scores, dtype=float)
    rows = np.arange(scores.shape[0])
    others = scores.copy()
    others[rows, labels] = -np.inf
    rival = np.argmax(others, axis=1)
    return scores[rows, labels] - scores[rows, rival], rival


def loss_and_grad(kind, scores, labels):
    """Per-row loss values and ``d loss / d scores`` for a batch of logits."""
    kind = LossKind.parse(kind)
    scores = np.atleast_2d(np.asarray(scores, dtype=float))
    labels = np.asarray(labels, dtype=int)
    n, c = scores.shape
    if labels.shape != (n,) or np.any(labels < 0) or np.any(labels >= c):
        raise ValueError(f"labels must be integers in [0, {c})")
    rows = np.arange(n)

    if kind is LossKind.CROSS_ENTROPY:
        shifted = scores - scores.max(axis=1, keepdims=True)
        log_z = np.log(np.exp(shifted).sum(axis=1))
        values = log_z - shifted[rows, labels]
        grad = np.exp(shifted - log_z[:, None])
        grad[rows, labels] -= 1.0
        return values, grad

    if kind is LossKind.ZERO_ONE:
        values = (np.argmax(scores, axis=1) != labels).astype(float)
        return values, None

    m, rival = margins(scores, labels)
    if kind is LossKind.LOG:
        values = np.logaddexp(0.0, -m)
        dm = -np.exp(-np.logaddexp(0.0, m))  # -sigmoid(-m)
    elif kind is LossKind.EXP:
        values = np.exp(-m)
        dm = -values
    else:  # ramp
        values = np.clip(1.0 - m, 0.0, 1.0)
        dm = np.where((m >= 0.0) & (m <= 1.0), -1.0, 0.0)
    grad = np.zeros_like(scores)
    grad[rows, labels] += dm
    grad[rows, rival] -= dm
    return values, grad


def sample_loss(kind, scores, label: int) -> float:
    scores = np.asarray(scores, dtype=float)
    if not 0 <= int(label) < scores.shape[-1]:
        raise ValueError(f"label {label} out of range for {scores.shape[-1]} classes")
    values, _ = loss_and_grad(kind, scores[None, :], np.array([int(label)]))
    return float(values[0])


# --------------------------------------------------------------------------
# batch objectives

def _group_index(groups, only=None):
    present = np.unique(groups)
    if only is not None:
        if only not in present:
            raise EmptyGroupError(only)
        present = np.array([only])
    return [(int(a), np.flatnonzero(groups == a)) for a in present]


def batch_objective(model: SmallModel, batch, kind, fairness: FairnessConfig = FairnessConfig(),
                    defense: DefenseConfig = DefenseConfig(), seed: int = 0, indices=None):
    """Objective value and parameter gradient on one batch.

    ``batch`` is any object with ``features``, ``labels`` and ``groups``
    arrays (e.g. a :class:`~fairrobust.data.LabeledDataset`). With an active
    defense the data term uses PGD examples (treated as constants) while the
    accuracy-parity penalty is evaluated on the clean inputs.
    """
    kind = LossKind.parse(kind)
    if kind is LossKind.ZERO_ONE:
        raise ValueError("zero_one loss is evaluation-only")
    X = np.asarray(batch.features, dtype=float)
    y = np.asarray(batch.labels, dtype=int)
    g = np.asarray(batch.groups, dtype=int)
    n = len(y)
    if n == 0:
        raise ValueError("empty batch")

    X_data = X
    if defense.active:
        from .attacks import attack_batch

        X_data = attack_batch(model, X, y, defense.attack_config(kind, seed), indices=indices)

    scores, cache = forward_cache(model, X_data)
    losses, dscores = loss_and_grad(kind, scores, y)

    if fairness.mode is FairnessMode.GROUP_Q:
        q = fairness.q
        weights = np.zeros(n)
        value = 0.0
        for _, idx in _group_index(g):
            la = losses[idx].mean()
            value += la ** (q + 1) / (q + 1)
            weights[idx] = la ** q / len(idx)
        grad, _ = backward_batch(model, cache, dscores * weights[:, None])
        return float(value), grad

    value = float(losses.mean())
    weights = np.full(n, 1.0 / n)
    if fairness.mode is FairnessMode.NONE or fairness.lam == 0:
        grad, _ = backward_batch(model, cache, dscores * weights[:, None])
        return value, grad

    if defense.active:
        c_scores, c_cache = forward_cache(model, X)
        c_losses, c_dscores = loss_and_grad(kind, c_scores, y)
    else:
        c_cache, c_losses, c_dscores = cache, losses, dscores

    overall = c_losses.mean()
    pen_w = np.zeros(n)
    penalty = 0.0
    for _, idx in _group_index(g, fairness.penalty_group):
        diff = c_losses[idx].mean() - overall
        penalty += abs(diff)
        s = np.sign(diff)  # subgradient 0 exactly at the kink
        pen_w -= s / n
        pen_w[idx] += s / len(idx)
    value += fairness.lam * penalty
    pen_w *= fairness.lam

    if defense.active:
        grad, _ = backward_batch(model, cache, dscores * weights[:, None])
        grad += backward_batch(model, c_cache, c_dscores * pen_w[:, None])[0]
    else:
        grad, _ = backward_batch(model, cache, dscores * (weights + pen_w)[:, None])
    return value, grad
