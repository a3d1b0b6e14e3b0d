"""Thresholding, point adjustment, and precision/recall/F1 reporting."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import DataError


@dataclass
class ThresholdPolicy:
    kind: str           # "topk" (value = flagged ratio) or "fixed" (value = cut)
    value: float

    def validate(self) -> None:
        if self.kind not in ("topk", "fixed"):
            raise DataError(f"unknown threshold policy '{self.kind}'")
        if self.kind == "topk" and not (0.0 < self.value <= 1.0):
            raise DataError(f"top-k ratio must lie in (0, 1], got {self.value}")


@dataclass
class EvalReport:
    precision: float
    recall: float
    f1: float
    adjusted_precision: float
    adjusted_recall: float
    adjusted_f1: float
    threshold: float
    n_flagged: int
    degenerate_labels: bool = False

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def apply_threshold(scores: np.ndarray, policy: ThresholdPolicy
                    ) -> tuple[np.ndarray, float]:
    """Binary predictions plus the effective cut value.

    topk flags the round(ratio*T) highest scores (ties broken by position,
    earliest first); fixed flags scores >= value.
    """
    policy.validate()
    scores = np.asarray(scores, dtype=np.float64)
    if policy.kind == "fixed":
        preds = (scores >= policy.value).astype(np.int8)
        return preds, float(policy.value)
    count = int(round(policy.value * scores.size))
    count = min(max(count, 1), scores.size)
    order = np.argsort(-scores, kind="stable")
    preds = np.zeros(scores.size, dtype=np.int8)
    preds[order[:count]] = 1
    return preds, float(scores[order[count - 1]])


def point_adjust(preds: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Detecting any point of a labeled segment counts the whole segment."""
    adjusted = preds.copy()
    total = labels.size
    i = 0
    while i < total:
        if labels[i] == 1:
            j = i
            while j < total and labels[j] == 1:
                j += 1
            if adjusted[i:j].any():
                adjusted[i:j] = 1
            i = j
        else:
            i += 1
    return adjusted


def _prf(preds: np.ndarray, labels: np.ndarray) -> tuple[float, float, float]:
    tp = int(((preds == 1) & (labels == 1)).sum())
    fp = int(((preds == 1) & (labels == 0)).sum())
    fn = int(((preds == 0) & (labels == 1)).sum())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return precision, recall, f1


def evaluate(scores: np.ndarray, labels: np.ndarray,
             policy: ThresholdPolicy) -> EvalReport:
    """Raw and point-adjusted P/R/F1 under the given threshold policy."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise DataError(
            f"scores length {scores.shape} and labels length {labels.shape} differ"
        )
    preds, threshold = apply_threshold(scores, policy)
    degenerate = bool(labels.min() == labels.max())
    p, r, f1 = _prf(preds, labels)
    ap, ar, af1 = _prf(point_adjust(preds, labels), labels)
    return EvalReport(precision=p, recall=r, f1=f1,
                      adjusted_precision=ap, adjusted_recall=ar, adjusted_f1=af1,
                      threshold=threshold, n_flagged=int(preds.sum()),
                      degenerate_labels=degenerate)


def zscore_detector(values: np.ndarray, train_values: np.ndarray) -> np.ndarray:
    """Per-timestep max absolute z-score across features.

    The classic context-free baseline: standardize by training statistics
    and take the worst feature deviation at each step.
    """
    mean = train_values.mean(axis=0)
    std = np.where(train_values.std(axis=0) > 1e-8, train_values.std(axis=0), 1.0)
    return np.abs((values - mean) / std).max(axis=1)
