"""Labeled source/target dataset construction.

Tiles multi-band cubes, derives whole-tile binary labels from cloud-mask
coverage at configurable thresholds, synthesizes controllable domain-shifted
scene pairs, and persists datasets in a simple directory container (JSON
manifest plus one concatenated little-endian float32 tensor file).
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

CONTAINER_VERSION = 1
MANIFEST_NAME = "manifest.json"
PIXELS_NAME = "pixels.bin"

TRAIN = "train"
TEST = "test"


@dataclass(frozen=True)
class BandInfo:
    ident: str
    wavelength_nm: float | None = None


@dataclass
class DataCube:
    """One H x W x C tile of finite reflectance-like values."""

    pixels: np.ndarray
    bands: tuple[BandInfo, ...]

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.float32)
        if self.pixels.ndim != 3 or min(self.pixels.shape) < 1:
            raise ValueError(f"cube must be H x W x C, got {self.pixels.shape}")
        if len(self.bands) != self.pixels.shape[2]:
            raise ValueError(
                f"{len(self.bands)} band descriptors for {self.pixels.shape[2]} channels"
            )
        if not np.isfinite(self.pixels).all():
            raise ValueError("cube contains non-finite values")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.pixels.shape


@dataclass
class CloudMask:
    """Binary cloud map paired with a cube; 1 = cloudy pixel."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2 or min(self.pixels.shape) < 1:
            raise ValueError(f"mask must be H x W, got {self.pixels.shape}")
        if not np.isin(self.pixels, (0, 1)).all():
            raise ValueError("mask entries must be exactly 0 or 1")
        self.pixels = self.pixels.astype(np.uint8)

    @property
    def fraction(self) -> float:
        return float(np.count_nonzero(self.pixels)) / self.pixels.size


def label_by_threshold(mask: CloudMask, tau: float) -> int:
    """1 iff the cloudy-pixel fraction strictly exceeds tau."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return int(mask.fraction > tau)


@dataclass
class LabeledDataset:
    items: list[tuple[DataCube, int]]
    threshold: float
    split: str
    name: str = ""

    def __post_init__(self):
        if self.split not in (TRAIN, TEST):
            raise ValueError(f"split must be {TRAIN!r} or {TEST!r}, got {self.split!r}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        shape = None
        for cube, label in self.items:
            if label not in (0, 1):
                raise ValueError(f"label must be 0 or 1, got {label!r}")
            if shape is None:
                shape = cube.shape
            elif cube.shape != shape:
                raise ValueError(f"mixed cube shapes {shape} vs {cube.shape}")

    def __len__(self) -> int:
        return len(self.items)

    @property
    def cube_shape(self) -> tuple[int, int, int] | None:
        return self.items[0][0].shape if self.items else None

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """(N, H, W, C) float32 pixels and (N,) uint8 labels."""
        if not self.items:
            raise ValueError(f"dataset {self.name!r} is empty")
        x = np.stack([cube.pixels for cube, _ in self.items])
        y = np.array([label for _, label in self.items], dtype=np.uint8)
        return x, y


def tile_cube(
    cube: DataCube, mask: CloudMask, tile: int
) -> list[tuple[DataCube, CloudMask]]:
    """Cut a cube and its mask into non-overlapping tiles, row-major.

    The tile size must divide both spatial dims exactly; there is no padding.
    """
    h, w, _ = cube.shape
    if mask.pixels.shape != (h, w):
        raise ValueError(f"mask shape {mask.pixels.shape} does not match cube {h}x{w}")
    if tile < 1 or h % tile != 0 or w % tile != 0:
        raise ValueError(f"tile {tile} does not divide {h}x{w} exactly")
    out = []
    for ty in range(h // tile):
        for tx in range(w // tile):
            ys = slice(ty * tile, (ty + 1) * tile)
            xs = slice(tx * tile, (tx + 1) * tile)
            out.append(
                (
                    DataCube(cube.pixels[ys, xs].copy(), cube.bands),
                    CloudMask(mask.pixels[ys, xs].copy()),
                )
            )
    return out


def build_threshold_datasets(
    tiles: list[tuple[DataCube, CloudMask]],
    split_ratio: float,
    seed: int,
    taus: tuple[float, float] = (0.3, 0.7),
) -> tuple[
    tuple[LabeledDataset, LabeledDataset], tuple[LabeledDataset, LabeledDataset]
]:
    """TRAIN/TEST datasets at both thresholds over one seeded shuffle.

    Returns ((train, test) at taus[0], (train, test) at taus[1]); membership
    of the splits is identical across thresholds.
    """
    if not tiles:
        raise ValueError("no tiles to build datasets from")
    if not 0.0 < split_ratio < 1.0:
        raise ValueError(f"split_ratio must be in (0, 1), got {split_ratio}")
    order = np.random.default_rng(seed).permutation(len(tiles))
    shuffled = [tiles[i] for i in order]
    n_train = int(len(tiles) * split_ratio)
    out = []
    for tau in taus:
        tag = f"th{int(round(tau * 100))}"
        labeled = [(cube, label_by_threshold(mask, tau)) for cube, mask in shuffled]
        train = LabeledDataset(
            labeled[:n_train], threshold=tau, split=TRAIN, name=f"{tag}-{TRAIN}"
        )
        test = LabeledDataset(
            labeled[n_train:], threshold=tau, split=TEST, name=f"{tag}-{TEST}"
        )
        out.append((train, test))
    return out[0], out[1]


def band_select(cube: DataCube, indices: list[int]) -> DataCube:
    """New cube holding the requested bands in the requested order."""
    c = cube.shape[2]
    if len(set(indices)) != len(indices):
        raise ValueError(f"duplicate band index in {indices}")
    for i in indices:
        if not 0 <= i < c:
            raise ValueError(f"band index {i} out of range for {c} bands")
    sel = list(indices)
    return DataCube(
        cube.pixels[:, :, sel].copy(), tuple(cube.bands[i] for i in sel)
    )


@dataclass(frozen=True)
class ShiftConfig:
    """Per-band affine gain/offset plus additive Gaussian noise."""

    gain: tuple[float, ...]
    offset: tuple[float, ...]
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.gain) != len(self.offset):
            raise ValueError("gain and offset lengths differ")
        if any(g <= 0 for g in self.gain):
            raise ValueError("gain entries must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def is_identity(self) -> bool:
        return (
            all(g == 1.0 for g in self.gain)
            and all(o == 0.0 for o in self.offset)
            and self.noise_sigma == 0.0
        )


def _shift_pixels(x: np.ndarray, shift: ShiftConfig) -> np.ndarray:
    """Apply the shift to a stacked (N, H, W, C) float array, one noise draw."""
    gain = np.asarray(shift.gain, dtype=np.float64)
    offset = np.asarray(shift.offset, dtype=np.float64)
    out = x.astype(np.float64) * gain + offset
    if shift.noise_sigma > 0:
        rng = np.random.default_rng(shift.seed)
        out += rng.normal(0.0, shift.noise_sigma, out.shape)
    return out.astype(np.float32)


def _bilinear_upsample(a: np.ndarray, h: int, w: int) -> np.ndarray:
    m, n = a.shape
    cy = np.linspace(0.0, m - 1.0, h)
    cx = np.linspace(0.0, n - 1.0, w)
    y0 = np.floor(cy).astype(int)
    y1 = np.minimum(y0 + 1, m - 1)
    wy = cy - y0
    x0 = np.floor(cx).astype(int)
    x1 = np.minimum(x0 + 1, n - 1)
    wx = cx - x0
    rows = a[y0] * (1.0 - wy)[:, None] + a[y1] * wy[:, None]
    return rows[:, x0] * (1.0 - wx)[None, :] + rows[:, x1] * wx[None, :]


def _synth_scene(
    ss: np.random.SeedSequence, geometry: tuple[int, int, int], profile: dict
) -> tuple[DataCube, CloudMask]:
    """One procedural scene: bright blob clouds over darker textured ground."""
    h, w, c = geometry
    rng = np.random.default_rng(ss)

    # Draw the intended cloud fraction from a three-bucket mixture so the
    # 30%/70% labelings both end up with a usable class balance.
    u = rng.uniform()
    acc = 0.0
    buckets = profile["cloud_fraction_buckets"]
    for weight, lo, hi in buckets:
        acc += weight
        if u < acc:
            frac = rng.uniform(lo, hi)
            break
    else:  # float-rounding guard: u landed past the last bucket edge
        frac = rng.uniform(buckets[-1][1], buckets[-1][2])

    yy, xx = np.mgrid[0:h, 0:w]
    blob_lo, blob_hi = profile["blob_count"]
    n_blobs = int(rng.integers(blob_lo, blob_hi + 1))
    fld = np.zeros((h, w))
    for _ in range(n_blobs):
        cyx = rng.uniform(0, h), rng.uniform(0, w)
        div_hi, div_lo = profile["blob_scale_div"]
        sigma = rng.uniform(min(h, w) / div_hi, min(h, w) / div_lo)
        amp = rng.uniform(*profile["blob_amp"])
        fld += amp * np.exp(
            -((yy - cyx[0]) ** 2 + (xx - cyx[1]) ** 2) / (2.0 * sigma * sigma)
        )
    # Tiny jitter keeps the quantile cut free of ties.
    fld += rng.normal(0.0, profile["field_jitter"], (h, w))
    mask = (fld >= np.quantile(fld, 1.0 - frac)).astype(np.uint8)

    g = profile["texture_grid"]
    ground_tex = _bilinear_upsample(rng.uniform(0, 1, (g, g)), h, w)
    cloud_tex = _bilinear_upsample(rng.uniform(0, 1, (g, g)), h, w)
    alpha = mask.astype(np.float64)
    pixels = np.empty((h, w, c), dtype=np.float64)
    for b in range(c):
        ground = (
            profile["background_base"]
            + profile["background_band_step"] * (b % 3)
            + profile["background_texture"] * ground_tex
        )
        cloud = (
            profile["cloud_base"]
            + profile["cloud_band_step"] * (b % 2)
            + profile["cloud_texture"] * cloud_tex
        )
        pixels[:, :, b] = ground * (1.0 - alpha) + cloud * alpha
    pixels += rng.normal(0.0, profile["pixel_noise"], pixels.shape)
    np.clip(pixels, 0.0, None, out=pixels)
    bands = tuple(BandInfo(f"b{b + 1}") for b in range(c))
    return DataCube(pixels.astype(np.float32), bands), CloudMask(mask)


def synth_domain_pair(
    n_per_split: int,
    geometry: tuple[int, int, int],
    shift: ShiftConfig,
    seed: int,
    profile: dict | None = None,
):
    """Seeded synthetic source/target pair with a controllable domain shift.

    Generates 2*n_per_split scenes with per-pixel cloud masks; the target
    domain is the same scenes passed through the per-band shift (masks and
    therefore labels are fixed before the shift).  Returns (source, target)
    where each is ((train, test) at threshold 0.3, (train, test) at 0.7).
    """
    if n_per_split < 2:
        raise ValueError("n_per_split must be at least 2")
    h, w, c = geometry
    if min(h, w, c) < 1:
        raise ValueError(f"bad geometry {geometry}")
    if len(shift.gain) != c:
        raise ValueError(
            f"shift is {len(shift.gain)}-band but geometry has {c} channels"
        )
    if profile is None:
        from .presets import SYNTH_PROFILE

        profile = SYNTH_PROFILE
    n_items = 2 * n_per_split
    seeds = np.random.SeedSequence(seed).spawn(n_items)
    src_tiles = [_synth_scene(ss, geometry, profile) for ss in seeds]

    src_x = np.stack([cube.pixels for cube, _ in src_tiles])
    tgt_x = _shift_pixels(src_x, shift)
    tgt_tiles = [
        (DataCube(tgt_x[i], src_tiles[i][0].bands), CloudMask(src_tiles[i][1].pixels))
        for i in range(n_items)
    ]
    source = build_threshold_datasets(src_tiles, 0.5, seed)
    target = build_threshold_datasets(tgt_tiles, 0.5, seed)
    return source, target


def save_dataset(ds: LabeledDataset, dir_path) -> None:
    """Directory container: manifest.json + one concatenated pixel file.

    Pixels are stored little-endian float32, C-order, in item order; the
    round trip is bit-exact.
    """
    os.makedirs(dir_path, exist_ok=True)
    shape = ds.cube_shape
    manifest = {
        "format_version": CONTAINER_VERSION,
        "container": "concat",
        "n_items": len(ds),
        "shape": list(shape) if shape else None,
        "dtype": "<f4",
        "order": "C",
        "pixels_file": PIXELS_NAME,
        "labels": [int(label) for _, label in ds.items],
        "threshold": ds.threshold,
        "split": ds.split,
        "name": ds.name,
        "bands": [
            {"ident": b.ident, "wavelength_nm": b.wavelength_nm}
            for b in (ds.items[0][0].bands if ds.items else ())
        ],
    }
    with open(os.path.join(dir_path, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")
    with open(os.path.join(dir_path, PIXELS_NAME), "wb") as f:
        for cube, _ in ds.items:
            f.write(cube.pixels.astype("<f4").tobytes())


def load_dataset(dir_path) -> LabeledDataset:
    try:
        with open(os.path.join(dir_path, MANIFEST_NAME)) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ValueError(f"unreadable dataset manifest in {dir_path}: {e}") from e
    if manifest.get("format_version") != CONTAINER_VERSION:
        raise ValueError(
            f"unknown container version {manifest.get('format_version')!r}"
        )
    n = manifest["n_items"]
    labels = manifest["labels"]
    if len(labels) != n:
        raise ValueError(f"manifest declares {n} items but lists {len(labels)} labels")
    with open(os.path.join(dir_path, manifest["pixels_file"]), "rb") as f:
        raw = f.read()
    if n == 0:
        if raw:
            raise ValueError("empty dataset with non-empty pixel file")
        return LabeledDataset(
            [],
            threshold=manifest["threshold"],
            split=manifest["split"],
            name=manifest["name"],
        )
    shape = tuple(manifest["shape"])
    item_bytes = int(np.prod(shape)) * 4
    if len(raw) != n * item_bytes:
        raise ValueError(
            f"pixel file holds {len(raw)} bytes, manifest implies {n * item_bytes}"
        )
    bands = tuple(
        BandInfo(b["ident"], b["wavelength_nm"]) for b in manifest["bands"]
    )
    items = []
    for i in range(n):
        arr = np.frombuffer(
            raw, dtype="<f4", count=int(np.prod(shape)), offset=i * item_bytes
        ).reshape(shape)
        items.append((DataCube(arr.copy(), bands), int(labels[i])))
    return LabeledDataset(
        items,
        threshold=manifest["threshold"],
        split=manifest["split"],
        name=manifest["name"],
    )
