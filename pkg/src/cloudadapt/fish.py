"""Bandwidth-efficient supervised adaptation.

Scores every trainable weight by its empirical Fisher information on labeled
target data, keeps the top fraction, fine-tunes only those weights, and
packages the result as a sparse index+value delta small enough to uplink.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .data import LabeledDataset
from .model import (
    DetectorModel,
    StatsMode,
    _backward,
    _forward_full,
    flatten_grads,
    flatten_params,
    unflatten_params,
)
from .training import TrainConfig, _epoch_batches, bce_dlogits, bce_loss
from .uplink import SparseDelta, fingerprint_flat


@dataclass
class FisherScores:
    """Per-weight importance: mean over samples of the squared loss gradient."""

    values: np.ndarray  # float64, length P, nonnegative
    n_samples: int

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("scores must be a flat vector")
        if not np.isfinite(self.values).all() or (self.values < 0).any():
            raise ValueError("scores must be finite and nonnegative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be positive")


@dataclass
class SparseMask:
    """The flat indices selected for fine-tuning, plus the fraction that
    produced them."""

    indices: np.ndarray  # strictly ascending, int64
    sparsity: float  # in (0, 1]

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, dtype=np.int64)
        if self.indices.ndim != 1:
            raise ValueError("mask indices must be a flat vector")
        if self.indices.size == 0:
            raise ValueError("mask must select at least one index")
        if int(self.indices[0]) < 0:
            raise ValueError("mask indices must be nonnegative")
        if self.indices.size > 1 and not (np.diff(self.indices) > 0).all():
            raise ValueError("mask indices must be strictly ascending")
        if not 0.0 < self.sparsity <= 1.0:
            raise ValueError(f"sparsity must be in (0, 1], got {self.sparsity}")

    @property
    def k(self) -> int:
        return int(self.indices.size)


def mask_cardinality(sparsity: float, total_params: int) -> int:
    """ceil(l * P), computed on the exact binary value of l.

    Fraction avoids the float product rounding down (or up) across a ceil
    boundary; l = 0.25 with P = 1,292,546 must give exactly 323,137.
    """
    if not 0.0 < sparsity <= 1.0:
        raise ValueError(f"sparsity must be in (0, 1], got {sparsity}")
    if total_params < 1:
        raise ValueError("total_params must be positive")
    return int(math.ceil(Fraction(sparsity) * total_params))


def fisher_scores(model: DetectorModel, dataset: LabeledDataset) -> FisherScores:
    """Empirical Fisher: square each per-sample loss gradient, then average.

    Per-sample, not batch-summed-then-squared: the mean of squares is what
    ranks weights, and batching must not change it.  Runs with the stored
    running statistics and never touches them.
    """
    if model.mode is not StatsMode.EVAL_STATS:
        raise ValueError("fisher_scores requires the model in EVAL_STATS mode")
    if len(dataset) == 0:
        raise ValueError("fisher_scores: empty dataset")
    x, y = dataset.stacked()
    x64 = np.ascontiguousarray(x, dtype=np.float64)
    p = model.index_map.total_params
    acc = np.zeros(p, dtype=np.float64)
    for j in range(len(dataset)):
        xb = x64[j : j + 1]
        yb = y[j : j + 1]
        state = _forward_full(model, xb, StatsMode.EVAL_STATS, capture=True)
        grads = _backward(model, state, bce_dlogits(state.probs, yb), "all")
        g = flatten_grads(model, grads)
        if not np.isfinite(g).all():
            raise RuntimeError(f"fisher_scores: non-finite gradient at sample {j}")
        acc += g * g
    return FisherScores(values=acc / len(dataset), n_samples=len(dataset))


def select_mask(scores: FisherScores, sparsity: float) -> SparseMask:
    """Indices of the ceil(l*P) largest scores; ties go to the lower index."""
    p = scores.values.size
    k = mask_cardinality(sparsity, p)
    # stable argsort of the negated scores: descending by score, and equal
    # scores keep ascending index order
    order = np.argsort(-scores.values, kind="stable")
    chosen = np.sort(order[:k])
    return SparseMask(indices=chosen, sparsity=sparsity)


def _check_mask(mask: SparseMask, total_params: int) -> None:
    if int(mask.indices[-1]) >= total_params:
        raise ValueError(
            f"mask index {int(mask.indices[-1])} out of range for P={total_params}"
        )
    want = mask_cardinality(mask.sparsity, total_params)
    if mask.k != want:
        raise ValueError(
            f"mask has {mask.k} indices, sparsity {mask.sparsity} over "
            f"P={total_params} implies {want}"
        )


def masked_finetune(
    model: DetectorModel,
    mask: SparseMask,
    dataset: LabeledDataset,
    cfg: TrainConfig,
    log: list | None = None,
) -> DetectorModel:
    """Fine-tune only the masked weights on labeled target data.

    Gradients are computed for every weight, zeroed off-mask, and applied as
    one flat float64 step rounded back to float32, so complement weights
    keep their exact bits and a full mask reproduces unrestricted
    fine-tuning step for step.  BN running statistics stay frozen; they are
    not part of the uplinked payload, so drifting them here would desync the
    ground copy from the deployed one.  Mutates and returns the model.
    """
    p = model.index_map.total_params
    _check_mask(mask, p)
    if len(dataset) == 0:
        raise ValueError("masked_finetune: empty dataset")
    model.mode = StatsMode.EVAL_STATS
    x, y = dataset.stacked()
    x64 = np.ascontiguousarray(x, dtype=np.float64)
    sel = mask.indices
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        losses = []
        for idx in _epoch_batches(len(dataset), cfg.batch_size, rng):
            xb = np.ascontiguousarray(x64[idx])
            yb = y[idx]
            state = _forward_full(model, xb, StatsMode.EVAL_STATS, capture=True)
            loss = bce_loss(state.probs, yb)
            if not np.isfinite(loss):
                raise RuntimeError(
                    f"masked_finetune: non-finite loss at epoch {epoch}, aborting"
                )
            grads = _backward(model, state, bce_dlogits(state.probs, yb), "all")
            gflat = flatten_grads(model, grads)
            flat = flatten_params(model)
            flat[sel] = (flat[sel].astype(np.float64) - lr * gflat[sel]).astype(
                np.float32
            )
            unflatten_params(model, flat)
            losses.append(loss)
        if log is not None:
            log.append(
                {
                    "stage": "masked_finetune",
                    "epoch": epoch,
                    "lr": lr,
                    "mean_batch_loss": float(np.mean(losses)),
                }
            )
    return model


def extract_delta(
    source_flat: np.ndarray, adapted_flat: np.ndarray, mask: SparseMask
) -> SparseDelta:
    """Package the adapted values at the mask indices.

    Refuses if any complement entry differs bitwise between the two vectors:
    that means the mask was violated and a sparse delta cannot represent the
    change.  The fingerprint binds the delta to the source bits.
    """
    s = np.ascontiguousarray(source_flat, dtype=np.float32)
    a = np.ascontiguousarray(adapted_flat, dtype=np.float32)
    if s.shape != a.shape or s.ndim != 1:
        raise ValueError(f"flat vectors disagree: {s.shape} vs {a.shape}")
    _check_mask(mask, s.size)
    keep = np.ones(s.size, dtype=bool)
    keep[mask.indices] = False
    # bitwise comparison: NaN payloads and signed zeros must match exactly
    if not np.array_equal(s.view(np.uint32)[keep], a.view(np.uint32)[keep]):
        bad = np.flatnonzero(s.view(np.uint32) != a.view(np.uint32))
        bad = bad[~np.isin(bad, mask.indices)]
        raise ValueError(
            f"complement differs at {bad.size} indices (first: {int(bad[0])}); "
            "mask was violated"
        )
    return SparseDelta(
        indices=mask.indices.astype(np.uint32),
        values=a[mask.indices].copy(),
        model_fingerprint=fingerprint_flat(s),
        total_params=s.size,
    )


def apply_delta(source_flat: np.ndarray, delta: SparseDelta) -> np.ndarray:
    """Overwrite the delta's indices with its values; everything else keeps
    the source bits."""
    s = np.ascontiguousarray(source_flat, dtype=np.float32)
    if s.ndim != 1 or s.size != delta.total_params:
        raise ValueError(
            f"delta covers {delta.total_params} params, vector has {s.size}"
        )
    fp = fingerprint_flat(s)
    if fp != delta.model_fingerprint:
        raise ValueError(
            f"fingerprint mismatch: delta was built against "
            f"{delta.model_fingerprint:#018x}, vector hashes to {fp:#018x}"
        )
    out = s.copy()
    if delta.k:
        out[delta.indices.astype(np.int64)] = delta.values
    return out
