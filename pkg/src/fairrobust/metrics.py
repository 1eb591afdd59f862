"""Empirical error estimators and the softmax-gap margin proxy."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .attacks import AttackConfig, attack_batch
from .data import LabeledDataset
from .models import SmallModel, forward, softmax

# Column order of :meth:`EvalReport.csv_row`; per-group columns follow,
# ``group_<a>_error`` then ``group_<a>_margin_proxy`` for a = 0, 1, ...
REPORT_COLUMNS = ("natural_error", "robust_error", "boundary_error", "fairness_violation",
                  "avg_margin_proxy")


def fairness_violation(per_group_error, overall_error: float) -> float:
    """Largest ``|err_a - err_overall|``; 0 for no groups."""
    values = per_group_error.values() if isinstance(per_group_error, dict) else per_group_error
    return max((abs(float(e) - overall_error) for e in values), default=0.0)


@dataclass(frozen=True)
class EvalReport:
    natural_error: float
    robust_error: float
    boundary_error: float
    fairness_violation: float
    per_group_error: dict
    avg_margin_proxy: float
    per_group_margin_proxy: dict

    def columns(self) -> list:
        cols = list(REPORT_COLUMNS)
        for a in sorted(self.per_group_error):
            cols += [f"group_{a}_error", f"group_{a}_margin_proxy"]
        return cols

    def csv_row(self) -> list:
        row = [self.natural_error, self.robust_error, self.boundary_error,
               self.fairness_violation, self.avg_margin_proxy]
        for a in sorted(self.per_group_error):
            row += [self.per_group_error[a], self.per_group_margin_proxy[a]]
        return row

    def to_dict(self) -> dict:
        return {"natural_error": self.natural_error, "robust_error": self.robust_error,
                "boundary_error": self.boundary_error,
                "fairness_violation": self.fairness_violation,
                "avg_margin_proxy": self.avg_margin_proxy,
                "per_group_error": {str(a): v for a, v in sorted(self.per_group_error.items())},
                "per_group_margin_proxy": {str(a): v for a, v in
                                           sorted(self.per_group_margin_proxy.items())}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def margin_proxy(scores) -> np.ndarray:
    """Top-1 minus top-2 softmax probability per row."""
    p = np.sort(softmax(np.atleast_2d(scores)), axis=1)
    return p[:, -1] - p[:, -2]


def evaluate(model: SmallModel, dataset: LabeledDataset, cfg: AttackConfig) -> EvalReport:
    """Clean, boundary and robust error of ``model`` under the attack ``cfg``.

    Robust error counts a sample if it is misclassified clean or after the
    attack, so robust = natural + boundary holds exactly for the counts.
    """
    groups = dataset.groups
    present = np.unique(groups)
    missing = sorted(set(range(dataset.num_groups)) - set(present.tolist()))
    if missing:
        raise ValueError(f"group(s) {missing} have no samples")
    X, y = dataset.features, dataset.labels
    n = len(y)
    scores = forward(model, X)
    clean_wrong = np.argmax(scores, axis=1) != y
    if cfg.epsilon > 0:
        X_adv = attack_batch(model, X, y, cfg)
        adv_wrong = np.argmax(forward(model, X_adv), axis=1) != y
    else:
        adv_wrong = clean_wrong
    boundary = ~clean_wrong & adv_wrong
    n_nat = int(clean_wrong.sum())
    n_bdy = int(boundary.sum())
    proxy = margin_proxy(scores)

    per_err, per_proxy = {}, {}
    for a in present.tolist():
        mask = groups == a
        per_err[a] = float(clean_wrong[mask].mean())
        per_proxy[a] = float(proxy[mask].mean())
    natural, bdy = n_nat / n, n_bdy / n
    # summing the two rates (not dividing the joint count) keeps the identity bit-exact
    return EvalReport(natural_error=natural, robust_error=natural + bdy, boundary_error=bdy,
                      fairness_violation=fairness_violation(per_err, natural),
                      per_group_error=per_err, avg_margin_proxy=float(proxy.mean()),
                      per_group_margin_proxy=per_proxy)
