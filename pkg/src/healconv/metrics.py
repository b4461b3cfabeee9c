"""Classification and segmentation metrics.

Label 255 is the ignore value for segmentation; ignored pixels are excluded
from every count.  Mean IoU averages over the classes present in the truth.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError

IGNORE_LABEL = 255


def accuracy(pred, truth) -> float:
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ContractError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ContractError("empty evaluation set")
    return float((pred == truth).mean())


def pixel_accuracy(pred, truth, ignore_label: int = IGNORE_LABEL) -> float:
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ContractError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    keep = truth != ignore_label
    if not keep.any():
        raise ContractError("every pixel carries the ignore label")
    return float((pred[keep] == truth[keep]).mean())


def iou_per_class(pred, truth, ignore_label: int = IGNORE_LABEL) -> dict:
    """IoU for each class present in the truth."""
    pred = np.asarray(pred).ravel()
    truth = np.asarray(truth).ravel()
    if pred.shape != truth.shape:
        raise ContractError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    keep = truth != ignore_label
    if not keep.any():
        raise ContractError("every pixel carries the ignore label")
    pred = pred[keep]
    truth = truth[keep]
    scores = {}
    for cls in np.unique(truth):
        p = pred == cls
        t = truth == cls
        union = (p | t).sum()
        scores[int(cls)] = float((p & t).sum() / union)
    return scores


def miou(pred, truth, ignore_label: int = IGNORE_LABEL) -> float:
    scores = iou_per_class(pred, truth, ignore_label)
    return float(np.mean(list(scores.values())))
