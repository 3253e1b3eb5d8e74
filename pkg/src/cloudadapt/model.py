"""Compact convolutional cloud detector with explicit parameter bookkeeping.

The network is a stack of Conv -> BatchNorm -> ReLU -> MaxPool blocks followed
by fully connected layers ending in a two-way softmax (clear / cloudy).  All
trainable parameters live in float32 buffers addressed through a deterministic
flat index map; arithmetic runs in float64 so gradients can be checked against
finite differences at tight tolerance.

Statistics handling is explicit: TRAIN_STATS normalizes by the current batch,
EVAL_STATS by the stored running estimates.  No forward pass mutates the
running estimates; updating them is always an explicit caller action.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator

import numpy as np

from . import kernels

CHECKPOINT_MAGIC = b"CDET"
CHECKPOINT_VERSION = 1

N_CLASSES = 2


class StatsMode(Enum):
    TRAIN_STATS = "train_stats"
    EVAL_STATS = "eval_stats"


class ParamKind(Enum):
    CONV_W = "conv_w"
    CONV_B = "conv_b"
    BN_GAMMA = "bn_gamma"
    BN_BETA = "bn_beta"
    FC_W = "fc_w"
    FC_B = "fc_b"


EXTRACTOR_KINDS = frozenset(
    {ParamKind.CONV_W, ParamKind.CONV_B, ParamKind.BN_GAMMA, ParamKind.BN_BETA}
)
CLASSIFIER_KINDS = frozenset({ParamKind.FC_W, ParamKind.FC_B})
BN_AFFINE_KINDS = frozenset({ParamKind.BN_GAMMA, ParamKind.BN_BETA})

# Gradient scopes: which parameter kinds receive gradients.
GRAD_SCOPES = {
    "all": EXTRACTOR_KINDS | CLASSIFIER_KINDS,
    "extractor": EXTRACTOR_KINDS,
    "classifier": CLASSIFIER_KINDS,
    "bn_affine": BN_AFFINE_KINDS,
}


@dataclass(frozen=True)
class ConvBlock:
    filters: int
    kernel: int
    pool: int


@dataclass(frozen=True)
class ArchConfig:
    """Static description of a detector architecture."""

    name: str
    input_shape: tuple[int, int, int]  # (H, W, C)
    conv_blocks: tuple[ConvBlock, ...]
    fc_sizes: tuple[int, ...]  # hidden sizes ending with the 2 output units
    bn_epsilon: float = 1e-5

    def __post_init__(self):
        h, w, c = self.input_shape
        if h <= 0 or w <= 0 or c <= 0:
            raise ValueError(f"bad input shape {self.input_shape}")
        if not self.conv_blocks:
            raise ValueError("need at least one conv block")
        if not self.fc_sizes or self.fc_sizes[-1] != N_CLASSES:
            raise ValueError(f"fc_sizes must end with {N_CLASSES}, got {self.fc_sizes}")
        if self.bn_epsilon <= 0:
            raise ValueError("bn_epsilon must be positive")
        for blk in self.conv_blocks:
            if blk.filters <= 0 or blk.pool <= 0:
                raise ValueError(f"bad conv block {blk}")
            if blk.kernel <= 0 or blk.kernel % 2 == 0:
                # Same padding with a symmetric border needs an odd kernel.
                raise ValueError(f"conv kernel must be odd, got {blk.kernel}")
            if h % blk.pool != 0 or w % blk.pool != 0:
                raise ValueError(
                    f"pool {blk.pool} does not divide feature map {h}x{w}"
                )
            h //= blk.pool
            w //= blk.pool

    def feature_walk(self) -> list[tuple[int, int, int]]:
        """Feature-map shape after each conv block."""
        h, w, _ = self.input_shape
        shapes = []
        for blk in self.conv_blocks:
            h //= blk.pool
            w //= blk.pool
            shapes.append((h, w, blk.filters))
        return shapes

    @property
    def feature_dim(self) -> int:
        h, w, c = self.feature_walk()[-1]
        return h * w * c

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "conv_blocks": [[b.filters, b.kernel, b.pool] for b in self.conv_blocks],
            "fc_sizes": list(self.fc_sizes),
            "bn_epsilon": self.bn_epsilon,
        }

    @staticmethod
    def from_dict(d: dict) -> "ArchConfig":
        return ArchConfig(
            name=d["name"],
            input_shape=tuple(d["input_shape"]),
            conv_blocks=tuple(ConvBlock(*b) for b in d["conv_blocks"]),
            fc_sizes=tuple(d["fc_sizes"]),
            bn_epsilon=d["bn_epsilon"],
        )


def preset_arch(name: str, bands: int = 3) -> ArchConfig:
    """Named desk-scale architectures.

    cloudscout-mini: four conv blocks at growing width, one hidden FC layer.
    resnet-mini: a deeper, narrower stack standing in for a large residual
    backbone at desk scale; every block is still Conv-BN-ReLU-Pool.
    """
    if bands <= 0:
        raise ValueError("bands must be positive")
    if name == "cloudscout-mini":
        return ArchConfig(
            name=name,
            input_shape=(32, 32, bands),
            conv_blocks=(
                ConvBlock(8, 3, 2),
                ConvBlock(16, 3, 2),
                ConvBlock(32, 3, 2),
                ConvBlock(64, 3, 2),
            ),
            fc_sizes=(64, N_CLASSES),
        )
    if name == "resnet-mini":
        return ArchConfig(
            name=name,
            input_shape=(32, 32, bands),
            conv_blocks=(
                ConvBlock(16, 3, 2),
                ConvBlock(16, 3, 1),
                ConvBlock(32, 3, 2),
                ConvBlock(32, 3, 1),
                ConvBlock(64, 3, 2),
                ConvBlock(64, 3, 2),
            ),
            fc_sizes=(32, N_CLASSES),
        )
    raise ValueError(f"unknown architecture preset {name!r}")


@dataclass(frozen=True)
class IndexRecord:
    layer_id: str
    kind: ParamKind
    shape: tuple[int, ...]
    offset: int
    size: int

    @property
    def partition(self) -> str:
        return "extractor" if self.kind in EXTRACTOR_KINDS else "classifier"


class ParamIndexMap:
    """Deterministic mapping between flat indices and (layer, kind, shape).

    Record order is fixed: for each conv block CONV_W, CONV_B, BN_GAMMA,
    BN_BETA, then for each fully connected layer FC_W, FC_B.  Running
    statistics are not parameters and never appear here.
    """

    def __init__(self, records: list[IndexRecord]):
        self.records: tuple[IndexRecord, ...] = tuple(records)
        self.total_params: int = sum(r.size for r in self.records)
        self._by_key = {(r.layer_id, r.kind): r for r in self.records}
        self._offsets = np.array([r.offset for r in self.records], dtype=np.int64)

    def __iter__(self) -> Iterator[IndexRecord]:
        return iter(self.records)

    def record(self, layer_id: str, kind: ParamKind) -> IndexRecord:
        return self._by_key[(layer_id, kind)]

    def locate(self, flat_index: int) -> tuple[IndexRecord, int]:
        """Map a flat coordinate to its record and the offset inside it."""
        if not 0 <= flat_index < self.total_params:
            raise IndexError(f"flat index {flat_index} out of range")
        pos = int(np.searchsorted(self._offsets, flat_index, side="right")) - 1
        rec = self.records[pos]
        return rec, flat_index - rec.offset

    def kind_mask(self, kinds: frozenset[ParamKind]) -> np.ndarray:
        """Boolean flat mask selecting every parameter of the given kinds."""
        mask = np.zeros(self.total_params, dtype=bool)
        for rec in self.records:
            if rec.kind in kinds:
                mask[rec.offset : rec.offset + rec.size] = True
        return mask


def _conv_id(i: int) -> str:
    return f"conv{i + 1}"


def _fc_id(j: int) -> str:
    return f"fc{j + 1}"


def build_index_map(arch: ArchConfig) -> ParamIndexMap:
    records = []
    offset = 0

    def add(layer_id: str, kind: ParamKind, shape: tuple[int, ...]):
        nonlocal offset
        size = int(np.prod(shape))
        records.append(IndexRecord(layer_id, kind, shape, offset, size))
        offset += size

    cin = arch.input_shape[2]
    for i, blk in enumerate(arch.conv_blocks):
        lid = _conv_id(i)
        add(lid, ParamKind.CONV_W, (blk.kernel, blk.kernel, cin, blk.filters))
        add(lid, ParamKind.CONV_B, (blk.filters,))
        add(lid, ParamKind.BN_GAMMA, (blk.filters,))
        add(lid, ParamKind.BN_BETA, (blk.filters,))
        cin = blk.filters
    nin = arch.feature_dim
    for j, nout in enumerate(arch.fc_sizes):
        lid = _fc_id(j)
        add(lid, ParamKind.FC_W, (nin, nout))
        add(lid, ParamKind.FC_B, (nout,))
        nin = nout
    return ParamIndexMap(records)


@dataclass
class ParamCounts:
    conv: int
    bn: int
    fc: int
    total: int


def count_params(arch: ArchConfig) -> ParamCounts:
    imap = build_index_map(arch)
    conv = bn = fc = 0
    for rec in imap:
        if rec.kind in (ParamKind.CONV_W, ParamKind.CONV_B):
            conv += rec.size
        elif rec.kind in BN_AFFINE_KINDS:
            bn += rec.size
        else:
            fc += rec.size
    return ParamCounts(conv=conv, bn=bn, fc=fc, total=imap.total_params)


@dataclass
class BNRuntime:
    """Per-layer running statistics; float64 in memory, float32 on disk."""

    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1

    def copy(self) -> "BNRuntime":
        return BNRuntime(
            self.running_mean.copy(), self.running_var.copy(), self.momentum
        )


@dataclass
class BNHandle:
    """Aliasing view of one normalization layer's adjustable state.

    gamma and beta are the model's own float32 arrays, not copies, so
    writing through the handle writes the model.
    """

    layer_id: str
    gamma: np.ndarray
    beta: np.ndarray
    runtime: BNRuntime


@dataclass
class DetectorModel:
    arch: ArchConfig
    params: dict[tuple[str, ParamKind], np.ndarray]
    bn_runtime: dict[str, BNRuntime]
    mode: StatsMode
    seed: int
    index_map: ParamIndexMap

    def copy(self) -> "DetectorModel":
        return DetectorModel(
            arch=self.arch,
            params={k: v.copy() for k, v in self.params.items()},
            bn_runtime={k: v.copy() for k, v in self.bn_runtime.items()},
            mode=self.mode,
            seed=self.seed,
            index_map=self.index_map,
        )

    @property
    def conv_ids(self) -> list[str]:
        return [_conv_id(i) for i in range(len(self.arch.conv_blocks))]


def bn_layers(model: DetectorModel) -> list[BNHandle]:
    return [
        BNHandle(
            layer_id=lid,
            gamma=model.params[(lid, ParamKind.BN_GAMMA)],
            beta=model.params[(lid, ParamKind.BN_BETA)],
            runtime=model.bn_runtime[lid],
        )
        for lid in model.conv_ids
    ]


def build_model(arch: ArchConfig, seed: int = 0) -> DetectorModel:
    """Initialize a model deterministically from a seed.

    Weights draw from a uniform fan-in scaled range in index-map order;
    biases and beta start at zero, gamma at one, running stats at (0, 1).
    """
    imap = build_index_map(arch)
    rng = np.random.default_rng(seed)
    params: dict[tuple[str, ParamKind], np.ndarray] = {}
    for rec in imap:
        if rec.kind in (ParamKind.CONV_W, ParamKind.FC_W):
            if rec.kind is ParamKind.CONV_W:
                kh, kw, cin, _ = rec.shape
                fan_in = kh * kw * cin
            else:
                fan_in = rec.shape[0]
            limit = float(np.sqrt(6.0 / fan_in))
            arr = rng.uniform(-limit, limit, rec.shape)
        elif rec.kind is ParamKind.BN_GAMMA:
            arr = np.ones(rec.shape)
        else:
            arr = np.zeros(rec.shape)
        params[(rec.layer_id, rec.kind)] = arr.astype(np.float32)
    bn_runtime = {}
    for i, blk in enumerate(arch.conv_blocks):
        bn_runtime[_conv_id(i)] = BNRuntime(
            running_mean=np.zeros(blk.filters, dtype=np.float64),
            running_var=np.ones(blk.filters, dtype=np.float64),
        )
    return DetectorModel(
        arch=arch,
        params=params,
        bn_runtime=bn_runtime,
        mode=StatsMode.TRAIN_STATS,
        seed=seed,
        index_map=imap,
    )


def flatten_params(model: DetectorModel) -> np.ndarray:
    """All parameters as one float32 vector in index-map order."""
    return np.concatenate(
        [model.params[(r.layer_id, r.kind)].ravel() for r in model.index_map]
    )


def unflatten_params(model: DetectorModel, flat: np.ndarray) -> None:
    """Write a flat float32 vector back into the model's parameter buffers."""
    if flat.shape != (model.index_map.total_params,):
        raise ValueError(
            f"expected {model.index_map.total_params} values, got {flat.shape}"
        )
    flat = np.asarray(flat, dtype=np.float32)
    for rec in model.index_map:
        chunk = flat[rec.offset : rec.offset + rec.size]
        model.params[(rec.layer_id, rec.kind)][...] = chunk.reshape(rec.shape)


def flatten_grads(
    model: DetectorModel, grads: dict[tuple[str, ParamKind], np.ndarray]
) -> np.ndarray:
    """Gradients as a float64 flat vector; missing entries are zero."""
    out = np.zeros(model.index_map.total_params, dtype=np.float64)
    for rec in model.index_map:
        g = grads.get((rec.layer_id, rec.kind))
        if g is not None:
            out[rec.offset : rec.offset + rec.size] = g.ravel()
    return out


@dataclass
class _BlockCache:
    layer_id: str
    xp: np.ndarray  # padded block input
    xhat: np.ndarray
    inv: np.ndarray
    relu_mask: np.ndarray
    arg: np.ndarray
    pre_pool_hw: tuple[int, int]
    in_hw: tuple[int, int]
    train_mode: bool


@dataclass
class _ForwardState:
    logits: np.ndarray
    probs: np.ndarray
    batch_stats: list[tuple[np.ndarray, np.ndarray]]  # (mean, var) per BN layer
    block_caches: list[_BlockCache] | None
    fc_caches: list[tuple[np.ndarray, np.ndarray | None]] | None


def _softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def _check_batch(model: DetectorModel, batch) -> np.ndarray:
    # Accepts a stacked (N, H, W, C) array or a sequence of cubes, where a
    # cube is anything exposing .pixels (or a bare (H, W, C) array).
    if isinstance(batch, (list, tuple)):
        if not batch:
            raise ValueError("empty batch")
        batch = np.stack([np.asarray(getattr(c, "pixels", c)) for c in batch])
    x = np.asarray(batch)
    if x.ndim != 4 or x.shape[1:] != model.arch.input_shape or x.shape[0] == 0:
        raise ValueError(
            f"batch shape {x.shape} does not match input {model.arch.input_shape}"
        )
    if not np.isfinite(x).all():
        raise ValueError("batch contains non-finite values")
    return np.ascontiguousarray(x, dtype=np.float64)


def _forward_full(
    model: DetectorModel,
    x64: np.ndarray,
    stats_mode: StatsMode,
    capture: bool = False,
) -> _ForwardState:
    arch = model.arch
    if x64.ndim != 4 or x64.shape[1:] != arch.input_shape:
        raise ValueError(
            f"batch shape {x64.shape} does not match input {arch.input_shape}"
        )
    train = stats_mode is StatsMode.TRAIN_STATS
    h = x64
    block_caches: list[_BlockCache] | None = [] if capture else None
    batch_stats: list[tuple[np.ndarray, np.ndarray]] = []
    for i, blk in enumerate(arch.conv_blocks):
        lid = _conv_id(i)
        w = model.params[(lid, ParamKind.CONV_W)].astype(np.float64)
        b = model.params[(lid, ParamKind.CONV_B)].astype(np.float64)
        gamma = model.params[(lid, ParamKind.BN_GAMMA)].astype(np.float64)
        beta = model.params[(lid, ParamKind.BN_BETA)].astype(np.float64)
        pad = blk.kernel // 2
        xp = np.pad(h, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
        z = kernels.conv2d_forward(xp, w) + b
        if train:
            mu = z.mean(axis=(0, 1, 2))
            var = z.var(axis=(0, 1, 2))  # biased, matches the running estimate
        else:
            rt = model.bn_runtime[lid]
            mu = rt.running_mean.copy()
            var = rt.running_var.copy()
        batch_stats.append((mu, var))
        inv = 1.0 / np.sqrt(var + arch.bn_epsilon)
        xhat = (z - mu) * inv
        a = gamma * xhat + beta
        relu = np.maximum(a, 0.0)
        y, arg = kernels.maxpool_forward(relu, blk.pool)
        if capture:
            block_caches.append(
                _BlockCache(
                    layer_id=lid,
                    xp=xp,
                    xhat=xhat,
                    inv=inv,
                    relu_mask=a > 0,
                    arg=arg,
                    pre_pool_hw=(relu.shape[1], relu.shape[2]),
                    in_hw=(h.shape[1], h.shape[2]),
                    train_mode=train,
                )
            )
        h = y
    n = h.shape[0]
    flat = h.reshape(n, -1)
    fc_caches: list[tuple[np.ndarray, np.ndarray | None]] | None = (
        [] if capture else None
    )
    n_fc = len(arch.fc_sizes)
    for j in range(n_fc):
        lid = _fc_id(j)
        w = model.params[(lid, ParamKind.FC_W)].astype(np.float64)
        b = model.params[(lid, ParamKind.FC_B)].astype(np.float64)
        z = np.einsum("nk,km->nm", flat, w, optimize=False) + b
        last = j == n_fc - 1
        mask = None if last else z > 0
        if capture:
            fc_caches.append((flat, mask))
        flat = z if last else np.maximum(z, 0.0)
    logits = flat
    return _ForwardState(
        logits=logits,
        probs=_softmax(logits),
        batch_stats=batch_stats,
        block_caches=block_caches,
        fc_caches=fc_caches,
    )


def forward(
    model: DetectorModel, batch, stats_mode: StatsMode | None = None
) -> np.ndarray:
    """Class probabilities, shape (N, 2); never mutates running statistics.

    batch may be a list of cubes or a stacked (N, H, W, C) array.
    """
    x64 = _check_batch(model, batch)
    mode = model.mode if stats_mode is None else stats_mode
    return _forward_full(model, x64, mode).probs


def predict(
    model: DetectorModel, cube, stats_mode: StatsMode | None = None
) -> int:
    """Hard label for one cube; a tied probability pair resolves to class 0."""
    x = np.asarray(getattr(cube, "pixels", cube))
    if x.ndim != 3:
        raise ValueError(f"predict expects one cube, got shape {x.shape}")
    probs = forward(model, x[None], stats_mode)
    return int(probs[0, 1] > probs[0, 0])


def predict_batch(
    model: DetectorModel, batch, stats_mode: StatsMode | None = None
) -> np.ndarray:
    """Hard labels, shape (N,) uint8, with the same tie rule as predict."""
    probs = forward(model, batch, stats_mode)
    return (probs[:, 1] > probs[:, 0]).astype(np.uint8)


def _backward(
    model: DetectorModel,
    state: _ForwardState,
    dlogits: np.ndarray,
    scope: str = "all",
) -> dict[tuple[str, ParamKind], np.ndarray]:
    """Gradients for the parameter kinds selected by scope.

    The chain into the conv stack is skipped entirely for scope
    "classifier"; scope "bn_affine" walks the stack but skips the conv
    weight gradients themselves.
    """
    if scope not in GRAD_SCOPES:
        raise ValueError(f"unknown scope {scope!r}")
    kinds = GRAD_SCOPES[scope]
    if state.block_caches is None or state.fc_caches is None:
        raise ValueError("backward requires a capture=True forward state")
    arch = model.arch
    grads: dict[tuple[str, ParamKind], np.ndarray] = {}

    d = dlogits
    n_fc = len(arch.fc_sizes)
    dflat = None
    for j in range(n_fc - 1, -1, -1):
        lid = _fc_id(j)
        h_in, _ = state.fc_caches[j]
        if ParamKind.FC_W in kinds:
            grads[(lid, ParamKind.FC_W)] = np.einsum(
                "nk,nm->km", h_in, d, optimize=False
            )
            grads[(lid, ParamKind.FC_B)] = d.sum(axis=0)
        w = model.params[(lid, ParamKind.FC_W)].astype(np.float64)
        dh = np.einsum("nm,km->nk", d, w, optimize=False)
        if j > 0:
            _, prev_mask = state.fc_caches[j - 1]
            d = dh * prev_mask
        else:
            dflat = dh
    if kinds <= CLASSIFIER_KINDS:
        return grads

    n = dflat.shape[0]
    fh, fw, fc = arch.feature_walk()[-1]
    dy = dflat.reshape(n, fh, fw, fc)
    for i in range(len(arch.conv_blocks) - 1, -1, -1):
        blk = arch.conv_blocks[i]
        c = state.block_caches[i]
        lid = c.layer_id
        gamma = model.params[(lid, ParamKind.BN_GAMMA)].astype(np.float64)
        hp, wp = c.pre_pool_hw
        dr = kernels.maxpool_backward(dy, c.arg, blk.pool, hp, wp)
        da = dr * c.relu_mask
        if ParamKind.BN_GAMMA in kinds:
            grads[(lid, ParamKind.BN_GAMMA)] = (da * c.xhat).sum(axis=(0, 1, 2))
            grads[(lid, ParamKind.BN_BETA)] = da.sum(axis=(0, 1, 2))
        dxhat = da * gamma
        if c.train_mode:
            m = float(da.shape[0] * da.shape[1] * da.shape[2])
            s1 = dxhat.sum(axis=(0, 1, 2))
            s2 = (dxhat * c.xhat).sum(axis=(0, 1, 2))
            dz = (c.inv / m) * (m * dxhat - s1 - c.xhat * s2)
        else:
            dz = dxhat * c.inv
        if ParamKind.CONV_W in kinds:
            grads[(lid, ParamKind.CONV_W)] = kernels.conv2d_grad_w(
                c.xp, dz, blk.kernel, blk.kernel
            )
            grads[(lid, ParamKind.CONV_B)] = dz.sum(axis=(0, 1, 2))
        if i > 0:
            # Input gradient: correlate the padded upstream gradient with the
            # spatially flipped, channel-transposed filter bank.
            k = blk.kernel
            pad = k // 2
            w = model.params[(lid, ParamKind.CONV_W)].astype(np.float64)
            wr = np.ascontiguousarray(w[::-1, ::-1].transpose(0, 1, 3, 2))
            dzp = np.pad(dz, ((0, 0), (k - 1, k - 1), (k - 1, k - 1), (0, 0)))
            dxp = kernels.conv2d_forward(dzp, wr)
            ih, iw = c.in_hw
            dy = dxp[:, pad : pad + ih, pad : pad + iw, :]
    return grads


def update_running_stats(
    model: DetectorModel, batch_stats: list[tuple[np.ndarray, np.ndarray]]
) -> None:
    """Blend captured batch statistics into the running estimates.

    new = (1 - momentum) * old + momentum * batch, per layer, using each
    layer's own momentum setting.
    """
    if len(batch_stats) != len(model.conv_ids):
        raise ValueError("batch_stats length does not match BN layer count")
    for lid, (mu, var) in zip(model.conv_ids, batch_stats):
        rt = model.bn_runtime[lid]
        m = rt.momentum
        rt.running_mean[...] = (1.0 - m) * rt.running_mean + m * mu
        rt.running_var[...] = (1.0 - m) * rt.running_var + m * var


def save_checkpoint(model: DetectorModel, path, extra: dict | None = None) -> None:
    """Single-file checkpoint: header, JSON manifest, float32 payload.

    Layout (little endian): magic "CDET", u8 version, 3 zero bytes, u32
    manifest length, manifest JSON, all parameters in index-map order,
    then running mean and variance per BN layer.  Serialization is
    deterministic so identical models produce identical bytes.
    """
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "arch": model.arch.to_dict(),
        "seed": model.seed,
        "mode": model.mode.value,
        "bn_momentum": [model.bn_runtime[lid].momentum for lid in model.conv_ids],
        "extra": {} if extra is None else extra,
    }
    mjson = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    buf = bytearray()
    buf += CHECKPOINT_MAGIC
    buf += struct.pack("<B3xI", CHECKPOINT_VERSION, len(mjson))
    buf += mjson
    buf += flatten_params(model).astype("<f4").tobytes()
    for lid in model.conv_ids:
        rt = model.bn_runtime[lid]
        buf += rt.running_mean.astype("<f4").tobytes()
        buf += rt.running_var.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(buf))


def load_checkpoint(path) -> DetectorModel:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 12 or raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a detector checkpoint")
    version, mlen = struct.unpack_from("<B3xI", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 12
    manifest = json.loads(raw[pos : pos + mlen].decode())
    pos += mlen
    arch = ArchConfig.from_dict(manifest["arch"])
    imap = build_index_map(arch)
    expected = pos + 4 * imap.total_params + 8 * sum(
        b.filters for b in arch.conv_blocks
    )
    if len(raw) != expected:
        raise ValueError(
            f"checkpoint payload is {len(raw)} bytes, expected {expected}"
        )
    flat = np.frombuffer(raw, dtype="<f4", count=imap.total_params, offset=pos).copy()
    pos += 4 * imap.total_params
    params: dict[tuple[str, ParamKind], np.ndarray] = {}
    for rec in imap:
        chunk = flat[rec.offset : rec.offset + rec.size]
        params[(rec.layer_id, rec.kind)] = chunk.reshape(rec.shape).copy()
    bn_runtime = {}
    for i, blk in enumerate(arch.conv_blocks):
        mean = np.frombuffer(raw, dtype="<f4", count=blk.filters, offset=pos)
        pos += 4 * blk.filters
        var = np.frombuffer(raw, dtype="<f4", count=blk.filters, offset=pos)
        pos += 4 * blk.filters
        bn_runtime[_conv_id(i)] = BNRuntime(
            running_mean=mean.astype(np.float64),
            running_var=var.astype(np.float64),
            momentum=manifest["bn_momentum"][i],
        )
    return DetectorModel(
        arch=arch,
        params=params,
        bn_runtime=bn_runtime,
        mode=StatsMode(manifest["mode"]),
        seed=manifest["seed"],
        index_map=imap,
    )
