"""Minibatch SGD over :func:`fairrobust.losses.batch_objective`."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data import LabeledDataset
from .losses import DefenseConfig, FairnessConfig, LossKind, batch_objective
from .models import SmallModel


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch, step, value):
        super().__init__(f"objective became {value} at epoch {epoch}, step {step}")
        self.epoch, self.step, self.value = epoch, step, value


@dataclass(frozen=True)
class WarmStartPhase:
    """Plain ERM epochs run before the main objective (no penalty, no defense)."""

    loss: LossKind
    epochs: int
    lr: float

    def __post_init__(self):
        object.__setattr__(self, "loss", LossKind.parse(self.loss))
        if self.epochs < 0 or not self.lr > 0:
            raise ValueError("warm-start phases need epochs >= 0 and lr > 0")

    @classmethod
    def from_dict(cls, d) -> "WarmStartPhase":
        return cls(d["loss"], int(d["epochs"]), float(d["lr"]))

    def to_dict(self) -> dict:
        return {"loss": self.loss.value, "epochs": self.epochs, "lr": self.lr}


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    warm_start: tuple = field(default=())
    lr_schedule: str = "constant"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.lr_schedule not in ("constant", "linear"):
            raise ValueError("lr_schedule must be 'constant' or 'linear'")
        phases = tuple(p if isinstance(p, WarmStartPhase) else WarmStartPhase.from_dict(p)
                       for p in self.warm_start)
        object.__setattr__(self, "warm_start", phases)


@dataclass
class TrainResult:
    model: SmallModel
    final_loss: float
    epoch_losses: list


def _batches(n, batch_size, rng):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _run_epochs(model, data, kind, fairness, defense, epochs, lr, batch_size, rng,
                seed, epoch_offset, history, schedule="constant"):
    steps_per_epoch = -(-len(data) // batch_size)
    total_steps = epochs * steps_per_epoch
    for epoch in range(epochs):
        total, count = 0.0, 0
        for step, idx in enumerate(_batches(len(data), batch_size, rng)):
            batch = data.subset(idx)
            # attack noise depends on (seed, epoch, step) and the global sample index
            attack_seed = int(np.random.SeedSequence([seed, epoch_offset + epoch, step])
                              .generate_state(1)[0])
            # overflow shows up as a non-finite value, checked just below
            with np.errstate(over="ignore", invalid="ignore"):
                value, grad = batch_objective(model, batch, kind, fairness, defense,
                                              seed=attack_seed, indices=idx)
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                raise TrainingDivergedError(epoch_offset + epoch, step, value)
            rate = lr
            if schedule == "linear":
                rate = lr * (1.0 - (epoch * steps_per_epoch + step) / total_steps)
            model.params -= rate * grad
            total += value * len(idx)
            count += len(idx)
        history.append(total / count)


def train(model: SmallModel, data: LabeledDataset, loss, fairness: FairnessConfig = FairnessConfig(),
          defense: DefenseConfig = DefenseConfig(), cfg: TrainConfig = TrainConfig()) -> TrainResult:
    """Train a copy of ``model``; ``final_loss`` is the last epoch's mean objective.

    Raises :class:`TrainingDivergedError` on a non-finite objective or gradient.
    """
    model = model.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    history: list = []
    offset = 0
    for phase in cfg.warm_start:
        _run_epochs(model, data, phase.loss, FairnessConfig(), DefenseConfig(), phase.epochs,
                    phase.lr, cfg.batch_size, rng, cfg.seed, offset, history)
        offset += phase.epochs
    _run_epochs(model, data, LossKind.parse(loss), fairness, defense, cfg.epochs, cfg.lr,
                cfg.batch_size, rng, cfg.seed, offset, history, cfg.lr_schedule)
    final = history[-1] if history else float("nan")
    return TrainResult(model, float(final), history)
