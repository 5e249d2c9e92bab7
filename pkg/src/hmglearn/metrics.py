"""Evaluation metrics: ranking (ROC-AUC, AP), thresholded (F1, accuracy),
and regression errors."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np


class DegenerateLabels(ValueError):
    pass


def _check_binary(labels, scores):
    labels = np.asarray(labels, dtype=float)
    scores = np.asarray(scores, dtype=float)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValueError("labels and scores must be 1-D arrays of equal length")
    if not set(np.unique(labels)) <= {0.0, 1.0}:
        raise ValueError("labels must be binary")
    return labels, scores


def roc_auc(labels, scores) -> float:
    """Mann-Whitney rank statistic with midranks for tied scores."""
    labels, scores = _check_binary(labels, scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels("ROC-AUC needs both classes")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(labels.size)
    sorted_scores = scores[order]
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # midrank, 1-based
        i = j + 1
    pos_rank_sum = ranks[labels == 1.0].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def average_precision(labels, scores) -> float:
    """Area under the precision-recall curve by step interpolation over
    descending unique score thresholds."""
    labels, scores = _check_binary(labels, scores)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise DegenerateLabels("average precision needs both classes")
    order = np.argsort(-scores, kind="stable")
    sorted_labels = labels[order]
    sorted_scores = scores[order]
    ap = 0.0
    tp = 0
    seen = 0
    prev_recall = 0.0
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        tp += int(sorted_labels[i : j + 1].sum())
        seen = j + 1
        recall = tp / n_pos
        precision = tp / seen
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j + 1
    return float(ap)


def f1_score(labels, scores, threshold: float = 0.5) -> float:
    labels, scores = _check_binary(labels, scores)
    predicted = scores >= threshold
    tp = float(np.sum(predicted & (labels == 1.0)))
    fp = float(np.sum(predicted & (labels == 0.0)))
    fn = float(np.sum(~predicted & (labels == 1.0)))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def accuracy(labels, scores, threshold: float = 0.5) -> float:
    labels, scores = _check_binary(labels, scores)
    return float(np.mean((scores >= threshold) == (labels == 1.0)))


def mse(labels, predictions) -> float:
    labels = np.asarray(labels, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    return float(np.mean((labels - predictions) ** 2))


def rmse(labels, predictions) -> float:
    return float(np.sqrt(mse(labels, predictions)))


@dataclass
class MetricReport:
    roc_auc: float | None = None
    average_precision: float | None = None
    f1: float | None = None
    accuracy: float | None = None
    rmse: float | None = None
    mse: float | None = None

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}


def metrics(labels, scores, kind: str) -> MetricReport:
    """Classification reports ranking + thresholded metrics on probabilities;
    regression reports squared errors."""
    if kind == "binary-classification":
        return MetricReport(
            roc_auc=roc_auc(labels, scores),
            average_precision=average_precision(labels, scores),
            f1=f1_score(labels, scores),
            accuracy=accuracy(labels, scores),
        )
    if kind == "regression":
        return MetricReport(rmse=rmse(labels, scores), mse=mse(labels, scores))
    raise ValueError(f"unknown task kind '{kind}'")


def aggregate_reports(reports: list[MetricReport]) -> dict:
    """Per-fold values plus mean and standard deviation of each metric."""
    out = {"folds": [r.as_dict() for r in reports], "mean": {}, "std": {}}
    keys = sorted({k for r in reports for k in r.as_dict()})
    for key in keys:
        values = [r.as_dict()[key] for r in reports if key in r.as_dict()]
        out["mean"][key] = float(np.mean(values))
        out["std"][key] = float(np.std(values))
    return out
