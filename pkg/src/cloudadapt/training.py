"""Two-stage supervised pretraining of the source detector.

Stage 1 fits the conv feature extractor on the 30%-threshold labeling with
the classifier frozen at its initialization; stage 2 fits the FC classifier
on the 70%-threshold labeling with the extractor and the BN running
statistics frozen.  The optimizer is plain mini-batch gradient descent with
an optional step-decay schedule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .model import (
    CLASSIFIER_KINDS,
    EXTRACTOR_KINDS,
    DetectorModel,
    ParamKind,
    StatsMode,
    _backward,
    _forward_full,
    update_running_stats,
)

# Probabilities are clamped to [PROB_EPS, 1 - PROB_EPS] before any log.
PROB_EPS = 1e-7

SCHEDULES = ("constant", "step")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    epochs: int = 20
    batch_size: int = 16
    seed: int = 0
    lr_schedule: str = "constant"
    lr_decay_factor: float = 0.5
    lr_decay_period: int = 8

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr_schedule not in SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {SCHEDULES}")
        if self.lr_schedule == "step" and (
            self.lr_decay_factor <= 0 or self.lr_decay_period < 1
        ):
            raise ValueError("step schedule needs positive factor and period")

    def lr_at(self, epoch: int) -> float:
        if self.lr_schedule == "step":
            return self.learning_rate * self.lr_decay_factor ** (
                epoch // self.lr_decay_period
            )
        return self.learning_rate


def bce_loss(probabilities, label) -> float:
    """Binary cross-entropy -log p_label, mean over the batch when batched.

    Probabilities are clamped to [1e-7, 1 - 1e-7] before the log, so a
    confidently wrong prediction yields a large finite loss rather than inf.
    """
    probs = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    y = np.atleast_1d(np.asarray(label))
    if probs.shape[1] != 2 or probs.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: {probs.shape} probabilities, {y.shape} labels")
    p_label = np.where(y == 1, probs[:, 1], probs[:, 0])
    return float(-np.mean(np.log(np.clip(p_label, PROB_EPS, 1.0 - PROB_EPS))))


def bce_dlogits(probabilities: np.ndarray, label: np.ndarray) -> np.ndarray:
    """Gradient of bce_loss w.r.t. the logits feeding the softmax.

    Where the clamp is active the loss is locally constant, so the gradient
    is zero there.
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(label)
    n = probs.shape[0]
    p_label = np.where(y == 1, probs[:, 1], probs[:, 0])
    active = (p_label > PROB_EPS) & (p_label < 1.0 - PROB_EPS)
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), y.astype(np.int64)] = 1.0
    return np.where(active[:, None], (probs - onehot) / n, 0.0)


def _apply_update(model: DetectorModel, grads, lr: float, kinds) -> None:
    # float64 step on the float64 view, rounded back to the float32 store;
    # lr = 0 therefore reproduces the original bits exactly.
    for rec in model.index_map:
        if rec.kind not in kinds:
            continue
        g = grads.get((rec.layer_id, rec.kind))
        if g is None:
            continue
        p = model.params[(rec.layer_id, rec.kind)]
        p[...] = (p.astype(np.float64) - lr * g).astype(np.float32)


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def _run_stage(
    model: DetectorModel,
    dataset: LabeledDataset,
    cfg: TrainConfig,
    stats_mode: StatsMode,
    scope: str,
    kinds,
    update_stats: bool,
    stage: str,
    log: list | None,
) -> DetectorModel:
    if len(dataset) == 0:
        raise ValueError(f"{stage}: empty dataset")
    x, y = dataset.stacked()
    x64 = np.ascontiguousarray(x, dtype=np.float64)
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        losses = []
        for idx in _epoch_batches(len(dataset), cfg.batch_size, rng):
            xb = np.ascontiguousarray(x64[idx])
            yb = y[idx]
            state = _forward_full(model, xb, stats_mode, capture=True)
            if update_stats:
                update_running_stats(model, state.batch_stats)
            loss = bce_loss(state.probs, yb)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"{stage}: non-finite loss at epoch {epoch}, aborting"
                )
            grads = _backward(model, state, bce_dlogits(state.probs, yb), scope)
            _apply_update(model, grads, lr, kinds)
            losses.append(loss)
        if log is not None:
            log.append(
                {
                    "stage": stage,
                    "epoch": epoch,
                    "lr": lr,
                    "mean_batch_loss": float(np.mean(losses)),
                }
            )
    return model


def train_extractor(
    model: DetectorModel,
    dataset: LabeledDataset,
    cfg: TrainConfig,
    log: list | None = None,
) -> DetectorModel:
    """Stage 1: fit conv-block parameters on the TH30 labeling.

    The classifier stays bit-identical to its initialization; BN running
    statistics update from each batch's statistics.  Mutates and returns
    the model.
    """
    model.mode = StatsMode.TRAIN_STATS
    return _run_stage(
        model,
        dataset,
        cfg,
        StatsMode.TRAIN_STATS,
        scope="extractor",
        kinds=EXTRACTOR_KINDS,
        update_stats=True,
        stage="extractor",
        log=log,
    )


def train_classifier(
    model: DetectorModel,
    dataset: LabeledDataset,
    cfg: TrainConfig,
    log: list | None = None,
) -> DetectorModel:
    """Stage 2: fit FC parameters on the TH70 labeling.

    Runs entirely with the stored running statistics (EVAL_STATS); the
    extractor, BN gamma/beta, and the running statistics stay bit-identical.
    Leaves the model in EVAL_STATS mode for inference.
    """
    model.mode = StatsMode.EVAL_STATS
    return _run_stage(
        model,
        dataset,
        cfg,
        StatsMode.EVAL_STATS,
        scope="classifier",
        kinds=CLASSIFIER_KINDS,
        update_stats=False,
        stage="classifier",
        log=log,
    )


def pretrain_two_stage(
    model: DetectorModel,
    th30_train: LabeledDataset,
    th70_train: LabeledDataset,
    cfg_extractor: TrainConfig,
    cfg_classifier: TrainConfig | None = None,
    log: list | None = None,
) -> DetectorModel:
    """Convenience wrapper running both stages in order."""
    train_extractor(model, th30_train, cfg_extractor, log)
    train_classifier(model, th70_train, cfg_classifier or cfg_extractor, log)
    return model
