"""Binary metrics over claim verdicts.

False is the positive class throughout: a true positive is a false
claim predicted false. Macro F1 averages the F1 of the False and True
classes with equal weight regardless of class balance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "MetricBundle",
    "SweepPoint",
    "compute_metrics",
    "threshold_sweep",
    "DEFAULT_SWEEP_LIMIT",
]

logger = logging.getLogger(__name__)

DEFAULT_SWEEP_LIMIT = 200


@dataclass(frozen=True)
class MetricBundle:
    accuracy: float
    f1_false: float
    f1_true: float
    f1_macro: float
    tp: int
    fp: int
    fn: int
    tn: int
    n: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "f1_false": self.f1_false,
            "f1_true": self.f1_true,
            "f1_macro": self.f1_macro,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "n": self.n,
        }


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    fn: int
    fp: int
    metrics: MetricBundle

    @property
    def accuracy(self) -> float:
        return self.metrics.accuracy

    @property
    def f1_macro(self) -> float:
        return self.metrics.f1_macro

    @property
    def f1_false(self) -> float:
        return self.metrics.f1_false


def _f1(tp: int, fp: int, fn: int, label: str) -> float:
    denom = 2 * tp + fp + fn
    if denom == 0:
        logger.info("F1 for class %s undefined (no predictions or gold); using 0.0", label)
        return 0.0
    return 2 * tp / denom


def compute_metrics(gold: Sequence[bool], pred: Sequence[bool]) -> MetricBundle:
    """Confusion counts and derived metrics, False as positive class."""
    if len(gold) != len(pred):
        raise ValueError(f"gold and pred lengths differ: {len(gold)} vs {len(pred)}")
    if not gold:
        raise ValueError("cannot compute metrics on zero items")
    for name, values in (("gold", gold), ("pred", pred)):
        for v in values:
            if not isinstance(v, (bool, np.bool_)):
                raise ValueError(f"{name} labels must be booleans, got {v!r}")
    tp = fp = fn = tn = 0
    for g, p in zip(gold, pred):
        if not p and not g:
            tp += 1
        elif not p and g:
            fp += 1
        elif p and not g:
            fn += 1
        else:
            tn += 1
    n = len(gold)
    f1_false = _f1(tp, fp, fn, "False")
    # For the True class the confusion cells swap roles.
    f1_true = _f1(tn, fn, fp, "True")
    return MetricBundle(
        accuracy=(tp + tn) / n,
        f1_false=f1_false,
        f1_true=f1_true,
        f1_macro=(f1_false + f1_true) / 2.0,
        tp=tp,
        fp=fp,
        fn=fn,
        tn=tn,
        n=n,
    )


def default_threshold_grid(ppls: Sequence[float], limit: int = DEFAULT_SWEEP_LIMIT) -> list[float]:
    """Integer thresholds from 1 to max(ppl)+1, evenly subsampled to the limit."""
    top = int(max(ppls)) + 1
    grid = [float(t) for t in range(1, top + 1)]
    if len(grid) > limit:
        idx = np.unique(np.linspace(0, len(grid) - 1, limit).round().astype(int))
        grid = [grid[i] for i in idx]
    return grid


def threshold_sweep(ppls: Sequence[float], gold: Sequence[bool],
                    thresholds: Sequence[float] | None = None) -> list[SweepPoint]:
    """Confusion behaviour across thresholds, ascending.

    A claim is predicted False exactly when its perplexity exceeds the
    threshold, so as the threshold rises, missed false claims (fn) never
    decrease and wrongly flagged true claims (fp) never increase.
    """
    if len(ppls) != len(gold):
        raise ValueError(f"ppls and gold lengths differ: {len(ppls)} vs {len(gold)}")
    if not ppls:
        raise ValueError("cannot sweep on zero items")
    for p in ppls:
        if not np.isfinite(p) or p <= 0:
            raise ValueError(f"perplexity must be finite and positive: {p}")
    if thresholds is None:
        thresholds = default_threshold_grid(ppls)
    points = []
    for th in sorted(thresholds):
        pred = [ppl <= th for ppl in ppls]
        bundle = compute_metrics(gold, pred)
        points.append(SweepPoint(threshold=float(th), fn=bundle.fn, fp=bundle.fp,
                                 metrics=bundle))
    return points
