"""Segmentation metrics, prior-estimation error and the superpixel bound."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SegMetrics:
    f1: float
    precision: float
    recall: float
    tp: int
    fp: int
    fn: int


def _from_counts(tp: int, fp: int, fn: int) -> SegMetrics:
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return SegMetrics(f1, precision, recall, tp, fp, fn)


def seg_metrics(pred: list[np.ndarray], gt: list[np.ndarray]) -> SegMetrics:
    """Pixel counts pooled over the whole sequence (micro-average)."""
    if len(pred) != len(gt):
        raise ValueError("prediction/ground-truth frame counts differ")
    tp = fp = fn = 0
    for p, g in zip(pred, gt):
        if p.shape != g.shape:
            raise ValueError("prediction/ground-truth dimensions differ")
        p = p.astype(bool)
        g = g.astype(bool)
        tp += int(np.sum(p & g))
        fp += int(np.sum(p & ~g))
        fn += int(np.sum(~p & g))
    return _from_counts(tp, fp, fn)


def per_frame_metrics(pred: list[np.ndarray], gt: list[np.ndarray]) -> list[SegMetrics]:
    return [seg_metrics([p], [g]) for p, g in zip(pred, gt)]


def prior_mae(est: np.ndarray, truth: np.ndarray) -> float:
    """Mean absolute error between estimated and true per-frame priors."""
    est = np.asarray(est, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if est.shape != truth.shape:
        raise ValueError("prior vectors must have equal length")
    return float(np.mean(np.abs(est - truth)))


def max_sp_bound(superpixels, gt: list[np.ndarray]) -> SegMetrics:
    """Best score achievable by labeling whole superpixels.

    A superpixel counts as positive iff more than half of its pixels are
    foreground in the ground truth.
    """
    pred = [np.zeros(g.shape, dtype=bool) for g in gt]
    for sp in superpixels:
        flat = gt[sp.frame].ravel()
        if flat[sp.pixels].mean() > 0.5:
            pred[sp.frame].ravel()[sp.pixels] = True
    return seg_metrics(pred, gt)


def write_metrics_csv(path: str | Path, rows: list[dict]) -> None:
    """One row per (sequence, method, eta) evaluation."""
    fieldnames = [
        "sequence", "method", "eta", "f1", "precision", "recall",
        "prior_mae", "stopping_epoch",
    ]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key in ("f1", "precision", "recall", "prior_mae"):
                if key in out and out[key] is not None and out[key] != "":
                    out[key] = f"{float(out[key]):.6f}"
            writer.writerow(out)
