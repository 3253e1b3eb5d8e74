"""Whole-dataset accuracy and false-positive percentages, plus gap reports.

FP is normalized by the full sample count M, not by the negatives, so it is
directly comparable to a mission-level false-positive budget.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .model import DetectorModel, StatsMode, forward


def _check_pair(predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(predictions)
    lab = np.asarray(labels)
    if pred.ndim != 1 or lab.ndim != 1 or pred.shape != lab.shape:
        raise ValueError(f"mismatched shapes {pred.shape} vs {lab.shape}")
    if pred.size == 0:
        raise ValueError("empty prediction list")
    for arr, what in ((pred, "predictions"), (lab, "labels")):
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{what} must be 0/1")
    return pred, lab


def accuracy(predictions, labels) -> float:
    """100 * matches / M."""
    pred, lab = _check_pair(predictions, labels)
    return 100.0 * int(np.count_nonzero(pred == lab)) / pred.size


def false_positive_rate(predictions, labels) -> float:
    """100 * |{pred=1 and label=0}| / M, normalized by all M samples."""
    pred, lab = _check_pair(predictions, labels)
    return 100.0 * int(np.count_nonzero((pred == 1) & (lab == 0))) / pred.size


@dataclass
class MetricsReport:
    acc_percent: float
    fp_percent: float
    n: int
    dataset_name: str = ""
    model_name: str = ""

    def to_dict(self) -> dict:
        return {
            "acc_percent": self.acc_percent,
            "fp_percent": self.fp_percent,
            "n": self.n,
            "dataset_name": self.dataset_name,
            "model_name": self.model_name,
        }


@dataclass
class GapReport:
    source_test: MetricsReport
    target_test: MetricsReport
    gap_acc: float
    gap_fp: float

    def to_dict(self) -> dict:
        return {
            "source_test": self.source_test.to_dict(),
            "target_test": self.target_test.to_dict(),
            "gap_acc": self.gap_acc,
            "gap_fp": self.gap_fp,
        }


def evaluate_model(
    model: DetectorModel,
    dataset: LabeledDataset,
    stats_mode: StatsMode = StatsMode.EVAL_STATS,
    batch_size: int | None = None,
    model_name: str = "",
) -> MetricsReport:
    """Predict every item and score it.

    batch_size only matters under TRAIN_STATS, where normalization couples
    items within a batch; the default scores the whole set as one batch.
    The final short batch, if any, is still scored.
    """
    x, y = dataset.stacked()
    if batch_size is None:
        batch_size = len(dataset)
    preds = []
    for start in range(0, len(dataset), batch_size):
        probs = forward(model, x[start : start + batch_size], stats_mode)
        preds.append((probs[:, 1] > probs[:, 0]).astype(np.uint8))
    pred = np.concatenate(preds)
    return MetricsReport(
        acc_percent=accuracy(pred, y),
        fp_percent=false_positive_rate(pred, y),
        n=len(dataset),
        dataset_name=dataset.name,
        model_name=model_name,
    )


def gap_report(
    model: DetectorModel,
    source_test: LabeledDataset,
    target_test: LabeledDataset,
    model_name: str = "",
) -> GapReport:
    """Source-vs-target scores in EVAL_STATS mode; gaps are absolute."""
    src = evaluate_model(model, source_test, StatsMode.EVAL_STATS, model_name=model_name)
    tgt = evaluate_model(model, target_test, StatsMode.EVAL_STATS, model_name=model_name)
    return GapReport(
        source_test=src,
        target_test=tgt,
        gap_acc=abs(src.acc_percent - tgt.acc_percent),
        gap_fp=abs(src.fp_percent - tgt.fp_percent),
    )
