"""Sparse-delta wire format, FP16 quantization, and uplink budget accounting.

UDLT v1 layout, little-endian throughout:
  bytes 0-3   magic "UDLT"
  byte  4     version (1)
  byte  5     dtype code (0 = FP32, 1 = FP16)
  bytes 6-7   reserved, zero
  bytes 8-15  u64 K (entry count)
  bytes 16-23 u64 total parameter count P
  bytes 24-31 u64 FNV-1a-64 fingerprint of the base model's flat FP32 bytes
  then K strictly ascending u32 indices, then K values in dtype.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .kernels import fnv1a64

MAGIC = b"UDLT"
VERSION = 1
FP32 = "fp32"
FP16 = "fp16"
_DTYPE_CODE = {FP32: 0, FP16: 1}
_CODE_DTYPE = {v: k for k, v in _DTYPE_CODE.items()}
_VALUE_SIZE = {FP32: 4, FP16: 2}
HEADER_BYTES = 32

FP16_MAX = 65504.0


@dataclass
class SparseDelta:
    """New parameter values at selected flat indices of a known base model."""

    indices: np.ndarray  # strictly ascending, < total_params
    values: np.ndarray  # float32, aligned with indices
    model_fingerprint: int  # FNV-1a-64 of the base flat FP32 byte stream
    total_params: int

    def __post_init__(self):
        self.indices = np.ascontiguousarray(self.indices, dtype=np.uint32)
        self.values = np.ascontiguousarray(self.values, dtype=np.float32)
        if self.indices.ndim != 1 or self.indices.shape != self.values.shape:
            raise ValueError("indices/values must be 1-D and the same length")
        if self.indices.size:
            if int(self.indices[-1]) >= self.total_params:
                raise ValueError("delta index out of range")
            if not (np.diff(self.indices.astype(np.int64)) > 0).all():
                raise ValueError("delta indices must be strictly ascending")
        if not 0 <= self.model_fingerprint < 2**64:
            raise ValueError("fingerprint must fit in 64 bits")

    @property
    def k(self) -> int:
        return int(self.indices.size)


def fingerprint_flat(flat: np.ndarray) -> int:
    """FNV-1a-64 over the little-endian FP32 byte stream of a flat vector."""
    return fnv1a64(np.ascontiguousarray(flat, dtype="<f4").tobytes())


def quantize_fp16(values: np.ndarray) -> np.ndarray:
    """IEEE binary16 with round-to-nearest-even; finite overflow saturates.

    A finite input past the FP16 range clamps to +/-65504 (an uplinked
    infinity would brick the detector); NaN passes through as NaN.
    """
    v32 = np.asarray(values, dtype=np.float32)
    with np.errstate(over="ignore"):
        out = v32.astype(np.float16)
    over = np.isinf(out.astype(np.float32)) & np.isfinite(v32)
    if over.any():
        out = np.where(
            over, np.copysign(np.float32(FP16_MAX), v32), out.astype(np.float32)
        ).astype(np.float16)
    return out


def dequantize(values: np.ndarray) -> np.ndarray:
    """Exact widening back to FP32."""
    return np.asarray(values, dtype=np.float16).astype(np.float32)


def write_delta(delta: SparseDelta, dtype: str, path) -> None:
    """Serialize; dtype FP16 quantizes the values at write time."""
    if dtype not in _DTYPE_CODE:
        raise ValueError(f"dtype must be {FP32!r} or {FP16!r}, got {dtype!r}")
    header = struct.pack(
        "<4sBB2xQQQ",
        MAGIC,
        VERSION,
        _DTYPE_CODE[dtype],
        delta.k,
        delta.total_params,
        delta.model_fingerprint,
    )
    if dtype == FP16:
        payload = quantize_fp16(delta.values).astype("<f2").tobytes()
    else:
        payload = delta.values.astype("<f4").tobytes()
    with open(path, "wb") as f:
        f.write(header + delta.indices.astype("<u4").tobytes() + payload)


def read_delta(path) -> SparseDelta:
    """Parse and validate a UDLT v1 file.

    FP16 values come back widened to FP32 (exact), so applying a read delta
    equals applying the quantized values.
    """
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < HEADER_BYTES:
        raise ValueError(f"delta file truncated: {len(raw)} bytes")
    magic, version, code, k, total, fp = struct.unpack_from("<4sBB2xQQQ", raw, 0)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported delta version {version}")
    if code not in _CODE_DTYPE:
        raise ValueError(f"unknown dtype code {code}")
    if raw[6:8] != b"\x00\x00":
        raise ValueError("reserved header bytes must be zero")
    dtype = _CODE_DTYPE[code]
    expected = HEADER_BYTES + k * 4 + k * _VALUE_SIZE[dtype]
    if len(raw) != expected:
        raise ValueError(f"delta file is {len(raw)} bytes, layout implies {expected}")
    indices = np.frombuffer(raw, dtype="<u4", count=k, offset=HEADER_BYTES)
    vals_off = HEADER_BYTES + k * 4
    if dtype == FP16:
        values = dequantize(np.frombuffer(raw, dtype="<f2", count=k, offset=vals_off))
    else:
        values = np.frombuffer(raw, dtype="<f4", count=k, offset=vals_off).copy()
    # SparseDelta's own validation enforces ascending order and index range.
    return SparseDelta(
        indices=indices.copy(),
        values=values,
        model_fingerprint=fp,
        total_params=total,
    )


def payload_bytes(k: int, dtype: str) -> int:
    """Exact UDLT file size for K entries."""
    if dtype not in _VALUE_SIZE:
        raise ValueError(f"dtype must be {FP32!r} or {FP16!r}, got {dtype!r}")
    return HEADER_BYTES + k * 4 + k * _VALUE_SIZE[dtype]


@dataclass
class BudgetReport:
    payload_bytes: int
    full_model_bytes: int
    fraction: float
    fits_budget: bool
    k: int
    total_params: int
    dtype: str
    budget_bytes: int

    def to_dict(self) -> dict:
        return {
            "payload_bytes": self.payload_bytes,
            "full_model_bytes": self.full_model_bytes,
            "fraction": self.fraction,
            "fits_budget": self.fits_budget,
            "k": self.k,
            "total_params": self.total_params,
            "dtype": self.dtype,
            "budget_bytes": self.budget_bytes,
        }


def budget_from_counts(
    k: int, total_params: int, dtype: str, budget_bytes: int
) -> BudgetReport:
    """Closed-form accounting; lets flight-scale sizes be checked without
    building a flight-scale model."""
    payload = payload_bytes(k, dtype)
    full = total_params * _VALUE_SIZE[dtype]
    return BudgetReport(
        payload_bytes=payload,
        full_model_bytes=full,
        fraction=payload / full,
        fits_budget=payload <= budget_bytes,
        k=k,
        total_params=total_params,
        dtype=dtype,
        budget_bytes=budget_bytes,
    )


def budget_report(delta: SparseDelta, model, dtype: str, budget_bytes: int) -> BudgetReport:
    """Uplink accounting for a concrete delta against a concrete model."""
    p = model.index_map.total_params
    if delta.total_params != p:
        raise ValueError(
            f"delta covers {delta.total_params} params, model has {p}"
        )
    return budget_from_counts(delta.k, p, dtype, budget_bytes)
