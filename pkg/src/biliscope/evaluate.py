"""Confusion-matrix metrics, ROC/AUC, and stratified k-fold evaluation."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import classify
from .classify import LabeledDataset, ModelSpec
from .errors import StratificationError, UndefinedAucError

__all__ = [
    "ConfusionCounts",
    "Metrics",
    "EvalReport",
    "metrics",
    "roc_auc",
    "stratified_folds",
    "cross_validate",
    "report_to_dict",
    "reports_to_json",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class Metrics:
    sensitivity: float
    precision: float
    specificity: float
    f1: float
    accuracy: float
    degenerate: tuple[str, ...] = ()


def _ratio(num: float, den: float, name: str, flags: list[str]) -> float:
    """num/den with the 0/0 convention: report 0 and flag the metric."""
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(c: ConfusionCounts) -> Metrics:
    flags: list[str] = []
    sens = _ratio(c.tp, c.tp + c.fn, "sensitivity", flags)
    prec = _ratio(c.tp, c.tp + c.fp, "precision", flags)
    spec = _ratio(c.tn, c.tn + c.fp, "specificity", flags)
    f1 = _ratio(2.0 * prec * sens, prec + sens, "f1", flags)
    acc = _ratio(c.tp + c.tn, c.total, "accuracy", flags)
    return Metrics(sens, prec, spec, f1, acc, tuple(flags))


def _positive_mask(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.dtype.kind in ("U", "S", "O"):
        return labels == classify.LABEL_DILATED
    return labels.astype(np.int64) == 1


def roc_auc(scores, labels) -> tuple[float, list[tuple[float, float]]]:
    """ROC points over all distinct score thresholds and trapezoidal AUC.

    Ties in score produce diagonal ROC jumps, so tied positive/negative
    pairs contribute one half, matching the rank-sum statistic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positive = _positive_mask(labels)
    n_pos = int(positive.sum())
    n_neg = int(positive.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAucError("both classes required for a ROC curve")

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positive[order].astype(np.int64)

    # index of the last element of each distinct-score group
    last_of_group = np.nonzero(np.diff(sorted_scores))[0]
    cut_points = np.concatenate([last_of_group, [scores.size - 1]])
    tp_cum = np.cumsum(sorted_pos)[cut_points]
    total_cum = cut_points + 1
    fp_cum = total_cum - tp_cum

    tpr = np.concatenate([[0.0], tp_cum / n_pos])
    fpr = np.concatenate([[0.0], fp_cum / n_neg])
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1])) / 2.0)
    return auc, list(zip(fpr.tolist(), tpr.tolist()))


def stratified_folds(labels, folds: int, rng_seed: int = 0) -> list[np.ndarray]:
    """Shuffled per-class round-robin fold assignment; folds = n is leave-one-out."""
    labels = np.asarray(labels)
    n = labels.shape[0]
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if folds == n:
        return [np.array([i]) for i in range(n)]
    if folds > n:
        raise StratificationError(f"{folds} folds for {n} rows")
    rng = np.random.default_rng(rng_seed)
    positive = _positive_mask(labels)
    assignment = np.empty(n, dtype=np.int64)
    for mask in (positive, ~positive):
        idx = np.nonzero(mask)[0]
        if idx.size < folds:
            raise StratificationError(
                f"class of {idx.size} rows cannot fill {folds} folds")
        shuffled = idx[rng.permutation(idx.size)]
        assignment[shuffled] = np.arange(shuffled.size) % folds
    return [np.nonzero(assignment == f)[0] for f in range(folds)]


@dataclass(frozen=True)
class EvalReport:
    kind: str
    folds: int
    counts: ConfusionCounts
    metrics: Metrics
    auc: float
    roc: list[tuple[float, float]]


def cross_validate(spec: ModelSpec, data: LabeledDataset, folds: int = 10,
                   rng_seed: int = 0, fold_preprocess=None) -> EvalReport:
    """Stratified k-fold CV; metrics on pooled counts, AUC on pooled scores.

    fold_preprocess, when given, is fit on each fold's training rows and
    returns a transform applied to both training and test rows (e.g. a
    scaler refit per fold instead of on the whole dataset).
    """
    fold_sets = stratified_folds(data.labels, folds, rng_seed)
    n = data.rows.shape[0]
    pooled_scores = np.empty(n)
    assigned = np.zeros(n, dtype=bool)
    for test_idx in fold_sets:
        train_mask = np.ones(n, dtype=bool)
        train_mask[test_idx] = False
        train_rows = data.rows[train_mask]
        test_rows = data.rows[test_idx]
        if fold_preprocess is not None:
            transform = fold_preprocess(train_rows)
            train_rows = transform(train_rows)
            test_rows = transform(test_rows)
        model = classify.train(spec, LabeledDataset(
            rows=train_rows,
            labels=data.labels[train_mask],
            feature_names=data.feature_names,
        ))
        pooled_scores[test_idx] = classify.predict_scores(model, test_rows)
        assigned[test_idx] = True
    assert assigned.all()

    predicted = pooled_scores >= 0.5
    actual = data.labels == 1
    counts = ConfusionCounts(
        tp=int(np.sum(predicted & actual)),
        tn=int(np.sum(~predicted & ~actual)),
        fp=int(np.sum(predicted & ~actual)),
        fn=int(np.sum(~predicted & actual)),
    )
    auc, roc = roc_auc(pooled_scores, data.labels)
    return EvalReport(kind=spec.kind, folds=len(fold_sets), counts=counts,
                      metrics=metrics(counts), auc=auc, roc=roc)


# ---------------------------------------------------------------------------
# Report serialization
# ---------------------------------------------------------------------------

def report_to_dict(report: EvalReport) -> dict:
    return {
        "kind": report.kind,
        "folds": report.folds,
        "counts": {"tp": report.counts.tp, "tn": report.counts.tn,
                   "fp": report.counts.fp, "fn": report.counts.fn},
        "sensitivity": report.metrics.sensitivity,
        "precision": report.metrics.precision,
        "specificity": report.metrics.specificity,
        "f1": report.metrics.f1,
        "accuracy": report.metrics.accuracy,
        "degenerate_metrics": list(report.metrics.degenerate),
        "auc": report.auc,
        "roc": [[fpr, tpr] for fpr, tpr in report.roc],
    }


def reports_to_json(reports: list[EvalReport]) -> str:
    return json.dumps({"models": [report_to_dict(r) for r in reports]},
                      indent=2, sort_keys=True)
