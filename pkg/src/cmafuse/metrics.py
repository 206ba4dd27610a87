"""Confusion-matrix classification metrics and multi-seed aggregation.

Hate is the positive class. ACC is unbiased accuracy (mean of class-wise
recalls), M-F1 the mean of per-class F1 scores. Any metric whose denominator
is zero is defined as 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    m_f1: float
    f1_h: float
    p_h: float
    r_h: float
    p_m: float
    r_m: float

    FIELDS = ("acc", "m_f1", "f1_h", "p_h", "r_h", "p_m", "r_m")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def confusion(preds, labels) -> ConfusionCounts:
    """Exact counts over parallel prediction/label sequences (hate = 1)."""
    preds, labels = list(preds), list(labels)
    if len(preds) != len(labels):
        raise ValueError(f"length mismatch: {len(preds)} preds vs {len(labels)} labels")
    if not preds:
        raise ValueError("need at least one sample")
    tp = fp = tn = fn = 0
    for p, y in zip(preds, labels):
        if p not in (0, 1) or y not in (0, 1):
            raise ValueError("labels and predictions must be 0 or 1")
        if y == 1:
            if p == 1:
                tp += 1
            else:
                fn += 1
        else:
            if p == 1:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _safe_div(num, den) -> float:
    return num / den if den else 0.0


def _f1(p, r) -> float:
    return _safe_div(2.0 * p * r, p + r)


def compute_report(c: ConfusionCounts) -> MetricsReport:
    if c.total < 1:
        raise ValueError("empty confusion matrix")
    r_h = _safe_div(c.tp, c.tp + c.fn)
    p_h = _safe_div(c.tp, c.tp + c.fp)
    r_n = _safe_div(c.tn, c.tn + c.fp)
    p_n = _safe_div(c.tn, c.tn + c.fn)
    f1_h = _f1(p_h, r_h)
    f1_n = _f1(p_n, r_n)
    return MetricsReport(
        acc=(r_h + r_n) / 2.0,
        m_f1=(f1_h + f1_n) / 2.0,
        f1_h=f1_h,
        p_h=p_h,
        r_h=r_h,
        p_m=(p_h + p_n) / 2.0,
        r_m=(r_h + r_n) / 2.0,
    )


def report_from_predictions(preds, labels) -> MetricsReport:
    return compute_report(confusion(preds, labels))


@dataclass(frozen=True)
class AggregateReport:
    mean: MetricsReport
    std: MetricsReport
    n_runs: int

    def cell(self, name: str) -> str:
        return format_mean_std(getattr(self.mean, name), getattr(self.std, name))


def aggregate_runs(reports) -> AggregateReport:
    """Per-metric mean and sample std (n-1 denominator; 0 for a single run)."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    n = len(reports)
    means, stds = {}, {}
    for name in MetricsReport.FIELDS:
        values = [getattr(r, name) for r in reports]
        mu = sum(values) / n
        means[name] = mu
        stds[name] = math.sqrt(sum((v - mu) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    return AggregateReport(mean=MetricsReport(**means), std=MetricsReport(**stds), n_runs=n)


def format_mean_std(mean: float, std: float) -> str:
    """Render one table cell the way the result tables print it: '.874 (.009)'."""
    def fmt(x):
        s = f"{x:.3f}"
        return s[1:] if s.startswith("0.") else s

    return f"{fmt(mean)} ({fmt(std)})"
