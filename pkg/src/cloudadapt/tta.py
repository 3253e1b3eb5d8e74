"""Online test-time adaptation: batch-triggered driver plus two adapters.

The driver accumulates an unlabeled stream into fixed-size batches and hands
each full batch to an adapter.  DUA refreshes BN running statistics with a
momentum that decays toward a floor; Tent takes entropy-descent steps on the
BN scale/shift parameters.  Neither sees a label.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    DetectorModel,
    ParamKind,
    StatsMode,
    _backward,
    _forward_full,
)

ROW_SUM_TOL = 1e-4


@dataclass(frozen=True)
class DUAConfig:
    """Momentum-decay schedule for running-statistics refresh.

    Each call decays the momentum by omega and adds delta_floor, so m
    converges to delta_floor / (1 - omega): early batches move the stats a
    lot, later ones fine-tune.  augment_factor > 1 pads every batch with
    seeded flips/rotations of its own samples before taking statistics.
    """

    omega: float = 0.94
    delta_floor: float = 0.005
    m0: float = 0.1
    augment_factor: int = 1

    def __post_init__(self):
        if not 0.0 < self.omega < 1.0:
            raise ValueError(f"omega must be in (0, 1), got {self.omega}")
        if self.delta_floor <= 0.0:
            raise ValueError(f"delta_floor must be positive, got {self.delta_floor}")
        if not 0.0 < self.m0 <= 1.0:
            raise ValueError(f"m0 must be in (0, 1], got {self.m0}")
        if self.delta_floor / (1.0 - self.omega) >= 1.0:
            raise ValueError(
                "momentum fixed point delta_floor/(1-omega) must stay below 1"
            )
        if int(self.augment_factor) != self.augment_factor or self.augment_factor < 1:
            raise ValueError(f"augment_factor must be an integer >= 1")

    def momentum_after(self, k: int) -> float:
        """Closed form for the momentum after k adapter calls."""
        wk = self.omega**k
        return wk * self.m0 + self.delta_floor * (1.0 - wk) / (1.0 - self.omega)


@dataclass(frozen=True)
class TentConfig:
    learning_rate: float = 1e-3
    epochs: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs}")


@dataclass
class DUAState:
    """Mutable per-run state: the current momentum and the augmentation rng."""

    config: DUAConfig
    momentum: float = field(init=False)
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        self.momentum = self.config.m0


@dataclass
class AdaptReport:
    """Accounting for one driver run."""

    batches_processed: int = 0
    samples_consumed: int = 0
    samples_dropped: int = 0
    entropy_trace: list = field(default_factory=list)  # per batch, mean over samples
    momentum_trace: list = field(default_factory=list)  # m after each call

    def to_dict(self) -> dict:
        return {
            "batches_processed": self.batches_processed,
            "samples_consumed": self.samples_consumed,
            "samples_dropped": self.samples_dropped,
            "entropy_trace": [float(h) for h in self.entropy_trace],
            "momentum_trace": [float(m) for m in self.momentum_trace],
        }


def entropy(probabilities) -> float:
    """Batch-summed Shannon entropy, natural log, with p log p := 0 at p = 0.

    The sum (not mean) over the batch matches the loss being descended;
    traces divide by the batch size where a per-sample number reads better.
    """
    p = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    if p.shape[1] < 2:
        raise ValueError(f"need at least two classes, got shape {p.shape}")
    if (p < 0.0).any():
        raise ValueError("probabilities must be nonnegative")
    rows = p.sum(axis=1)
    off = np.abs(rows - 1.0)
    if (off > ROW_SUM_TOL).any():
        j = int(np.argmax(off))
        raise ValueError(f"row {j} sums to {rows[j]:.6f}, not 1")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    return float(-terms.sum())


def entropy_dlogits(probs: np.ndarray) -> np.ndarray:
    """Gradient of the batch-summed entropy w.r.t. the softmax logits.

    dH/dz_k = -p_k (log p_k + H_row); the p_k factor kills the log
    singularity at p_k = 0.
    """
    p = np.asarray(probs, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.where(p > 0.0, np.log(p), 0.0)
    h_row = -(p * logp).sum(axis=1, keepdims=True)
    return np.where(p > 0.0, -p * (logp + h_row), 0.0)


_FLIP_ROT = [(f, r) for f in (0, 1) for r in (0, 1, 2, 3)]


def _augment_batch(x64: np.ndarray, factor: int, rng: np.random.Generator) -> np.ndarray:
    """Append (factor-1) seeded flip/rotation copies of each sample."""
    if x64.shape[1] != x64.shape[2]:
        raise ValueError("rotation augmentation needs square tiles")
    parts = [x64]
    for _ in range(factor - 1):
        picks = rng.integers(0, len(_FLIP_ROT), size=x64.shape[0])
        aug = np.empty_like(x64)
        for j, pick in enumerate(picks):
            flip, rot = _FLIP_ROT[pick]
            img = x64[j]
            if flip:
                img = img[:, ::-1]
            if rot:
                img = np.rot90(img, k=rot)
            aug[j] = img
        parts.append(aug)
    return np.concatenate(parts, axis=0)


def dua_adapt(model: DetectorModel, batch, state: DUAState) -> DetectorModel:
    """One running-statistics refresh from one unlabeled batch.

    Decays the momentum first (m <- m*omega + delta), then blends each BN
    layer's running mean/variance toward the batch statistics observed in a
    batch-normalized forward pass.  No gradients; every trainable parameter
    keeps its exact bits.  Mutates and returns the model.
    """
    x64 = _as_batch_array(model, batch)
    if x64.shape[0] == 0:
        raise ValueError("dua_adapt: empty batch")
    cfg = state.config
    if cfg.augment_factor > 1:
        x64 = _augment_batch(x64, cfg.augment_factor, state.rng)
    m = state.momentum * cfg.omega + cfg.delta_floor
    state.momentum = m
    fwd = _forward_full(model, x64, StatsMode.TRAIN_STATS)
    for lid, (mu_b, var_b) in zip(model.conv_ids, fwd.batch_stats):
        rt = model.bn_runtime[lid]
        rt.running_mean = (1.0 - m) * rt.running_mean + m * mu_b
        rt.running_var = (1.0 - m) * rt.running_var + m * var_b
        rt.momentum = m
    return model


def tent_adapt(
    model: DetectorModel, batch, cfg: TentConfig, trace: list | None = None
) -> DetectorModel:
    """Entropy-descent steps on BN gamma/beta from one unlabeled batch.

    Normalization uses the current batch's own statistics; running
    statistics are read-only here and keep their exact bits, as do all
    conv/FC weights.  One gradient step per epoch.  Appends the batch's
    initial per-sample mean entropy to trace when given.  Mutates and
    returns the model.
    """
    x64 = _as_batch_array(model, batch)
    if x64.shape[0] == 0:
        raise ValueError("tent_adapt: empty batch")
    for epoch in range(cfg.epochs):
        fwd = _forward_full(model, x64, StatsMode.TRAIN_STATS, capture=True)
        h = entropy(fwd.probs)
        if not np.isfinite(h):
            raise RuntimeError(f"tent_adapt: non-finite entropy at epoch {epoch}")
        if epoch == 0 and trace is not None:
            trace.append(h / x64.shape[0])
        grads = _backward(model, fwd, entropy_dlogits(fwd.probs), scope="bn_affine")
        for lid in model.conv_ids:
            for kind in (ParamKind.BN_GAMMA, ParamKind.BN_BETA):
                g = grads.get((lid, kind))
                if g is None:
                    continue
                p = model.params[(lid, kind)]
                p[...] = (p.astype(np.float64) - cfg.learning_rate * g).astype(
                    np.float32
                )
    return model


def _as_batch_array(model: DetectorModel, batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        x = batch
    else:
        x = np.stack([np.asarray(getattr(c, "pixels", c)) for c in batch])
    return np.ascontiguousarray(x, dtype=np.float64)


def _iter_stream(stream):
    if hasattr(stream, "items"):  # labeled dataset: adapt on its cubes
        for cube, _ in stream.items:
            yield np.asarray(cube.pixels)
        return
    if isinstance(stream, np.ndarray):
        if stream.ndim != 4:
            raise ValueError(f"array stream must be (N, H, W, C), got {stream.shape}")
        yield from stream
        return
    for c in stream:
        yield np.asarray(getattr(c, "pixels", c))


def run_tta(
    model: DetectorModel,
    stream,
    n_B: int,
    adapter,
    aug_seed: int = 0,
) -> tuple[DetectorModel, AdaptReport]:
    """Drive an adapter over an ordered unlabeled stream.

    Starts from a copy of the model (the source weights stay untouched),
    fills a batch of n_B samples, adapts, clears, repeats.  A tail shorter
    than n_B is dropped, not processed, and reported.  adapter is a
    DUAConfig or TentConfig; the config type selects the method.
    """
    if int(n_B) != n_B or n_B < 1:
        raise ValueError(f"n_B must be a positive integer, got {n_B}")
    n_B = int(n_B)
    if isinstance(adapter, DUAConfig):
        dua_state = DUAState(config=adapter, rng=np.random.default_rng(aug_seed))
        tent_cfg = None
    elif isinstance(adapter, TentConfig):
        dua_state = None
        tent_cfg = adapter
    else:
        raise TypeError(f"adapter must be a DUAConfig or TentConfig, got {adapter!r}")
    target = model.copy()
    report = AdaptReport()
    buf: list[np.ndarray] = []
    for sample in _iter_stream(stream):
        buf.append(sample)
        if len(buf) < n_B:
            continue
        x64 = np.ascontiguousarray(np.stack(buf), dtype=np.float64)
        buf.clear()
        if dua_state is not None:
            dua_adapt(target, x64, dua_state)
            report.momentum_trace.append(dua_state.momentum)
        else:
            tent_adapt(target, x64, tent_cfg, trace=report.entropy_trace)
        report.batches_processed += 1
        report.samples_consumed += n_B
    report.samples_dropped = len(buf)
    return target, report
