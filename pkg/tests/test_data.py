"""Synthetic scenes, thresholded labeling, shifts, and the disk container."""
import json

import numpy as np
import numpy.testing as npt
import pytest

from cloudadapt.data import (
    BandInfo,
    CloudMask,
    DataCube,
    LabeledDataset,
    ShiftConfig,
    band_select,
    build_threshold_datasets,
    label_by_threshold,
    load_dataset,
    save_dataset,
    synth_domain_pair,
    tile_cube,
    _shift_pixels,
)


def _cube(h=8, w=8, c=2, seed=0):
    rng = np.random.default_rng(seed)
    return DataCube(
        rng.uniform(0, 1, (h, w, c)).astype(np.float32),
        tuple(BandInfo(f"b{i}") for i in range(c)),
    )


def test_cube_validation():
    with pytest.raises(ValueError):
        DataCube(np.zeros((4, 4)), (BandInfo("b0"),))
    with pytest.raises(ValueError):
        DataCube(np.zeros((4, 4, 2)), (BandInfo("b0"),))  # band count mismatch
    bad = np.zeros((4, 4, 1))
    bad[0, 0, 0] = np.inf
    with pytest.raises(ValueError):
        DataCube(bad, (BandInfo("b0"),))


def test_mask_validation_and_fraction():
    with pytest.raises(ValueError):
        CloudMask(np.array([[0, 2], [1, 0]]))
    with pytest.raises(ValueError):
        CloudMask(np.zeros(4))
    m = CloudMask(np.array([[1, 0], [1, 1]]))
    assert m.pixels.dtype == np.uint8
    assert m.fraction == 0.75


def test_label_threshold_is_strict():
    # exactly 30 of 100 pixels cloudy: fraction equals tau, label stays 0
    grid = np.zeros((10, 10), dtype=np.uint8)
    grid.flat[:30] = 1
    assert label_by_threshold(CloudMask(grid), 0.3) == 0
    grid.flat[30] = 1
    assert label_by_threshold(CloudMask(grid), 0.3) == 1
    assert label_by_threshold(CloudMask(np.ones((2, 2), dtype=np.uint8)), 1.0) == 0
    assert label_by_threshold(CloudMask(np.zeros((2, 2), dtype=np.uint8)), 0.0) == 0
    with pytest.raises(ValueError):
        label_by_threshold(CloudMask(grid), 1.5)


def test_label_monotone_in_tau():
    rng = np.random.default_rng(1)
    for _ in range(20):
        mask = CloudMask(rng.integers(0, 2, (6, 6)))
        taus = np.sort(rng.uniform(0, 1, 3))
        labels = [label_by_threshold(mask, float(t)) for t in taus]
        assert labels == sorted(labels, reverse=True)


def test_tile_cube_partitions_and_reassembles():
    cube = _cube(12, 8, 3, seed=2)
    mask = CloudMask(np.random.default_rng(3).integers(0, 2, (12, 8)))
    tiles = tile_cube(cube, mask, 4)
    assert len(tiles) == (12 // 4) * (8 // 4)
    recon = np.zeros_like(cube.pixels)
    recon_mask = np.zeros_like(mask.pixels)
    k = 0
    for ty in range(3):
        for tx in range(2):
            tc, tm = tiles[k]
            assert tc.shape == (4, 4, 3)
            recon[ty * 4 : (ty + 1) * 4, tx * 4 : (tx + 1) * 4] = tc.pixels
            recon_mask[ty * 4 : (ty + 1) * 4, tx * 4 : (tx + 1) * 4] = tm.pixels
            k += 1
    npt.assert_array_equal(recon, cube.pixels)
    npt.assert_array_equal(recon_mask, mask.pixels)
    # tiles are copies, not views
    tiles[0][0].pixels[...] = -1.0
    assert (cube.pixels >= 0).all()


def test_tile_cube_rejects_bad_geometry():
    cube = _cube(8, 8, 1)
    mask = CloudMask(np.zeros((8, 8), dtype=np.uint8))
    with pytest.raises(ValueError):
        tile_cube(cube, mask, 3)
    with pytest.raises(ValueError):
        tile_cube(cube, CloudMask(np.zeros((4, 8), dtype=np.uint8)), 4)


def _toy_tiles(n=10, seed=4):
    rng = np.random.default_rng(seed)
    tiles = []
    for i in range(n):
        cube = _cube(4, 4, 1, seed=100 + i)
        mask = CloudMask((rng.uniform(size=(4, 4)) < (i / n)).astype(np.uint8))
        tiles.append((cube, mask))
    return tiles


def test_threshold_datasets_split_law_and_names():
    tiles = _toy_tiles(10)
    (tr30, te30), (tr70, te70) = build_threshold_datasets(tiles, 0.5, seed=0)
    assert (len(tr30), len(te30)) == (5, 5)
    assert tr30.name == "th30-train" and te30.name == "th30-test"
    assert tr70.name == "th70-train" and te70.name == "th70-test"
    assert tr30.threshold == 0.3 and tr70.threshold == 0.7
    # uneven ratio floors the train side
    (tr, te), _ = build_threshold_datasets(tiles, 0.33, seed=0)
    assert (len(tr), len(te)) == (3, 7)


def test_threshold_datasets_same_membership_across_taus():
    tiles = _toy_tiles(12)
    (tr30, te30), (tr70, te70) = build_threshold_datasets(tiles, 0.5, seed=7)
    for a, b in ((tr30, tr70), (te30, te70)):
        assert len(a) == len(b)
        for (cube_a, la), (cube_b, lb) in zip(a.items, b.items):
            assert cube_a is cube_b  # one shuffle, shared across thresholds
            assert lb <= la  # raising tau can only clear the label


def test_threshold_datasets_deterministic():
    tiles = _toy_tiles(8)
    a = build_threshold_datasets(tiles, 0.5, seed=3)
    b = build_threshold_datasets(tiles, 0.5, seed=3)
    c = build_threshold_datasets(tiles, 0.5, seed=4)
    assert [l for _, l in a[0][0].items] == [l for _, l in b[0][0].items]
    npt.assert_array_equal(a[0][0].stacked()[0], b[0][0].stacked()[0])
    assert any(
        (x is not y) for (x, _), (y, _) in zip(a[0][0].items, c[0][0].items)
    )


def test_threshold_datasets_rejects_bad_args():
    with pytest.raises(ValueError):
        build_threshold_datasets([], 0.5, seed=0)
    with pytest.raises(ValueError):
        build_threshold_datasets(_toy_tiles(4), 1.0, seed=0)


def test_band_select():
    cube = _cube(4, 4, 3)
    picked = band_select(cube, [2, 0])
    npt.assert_array_equal(picked.pixels, cube.pixels[:, :, [2, 0]])
    assert [b.ident for b in picked.bands] == ["b2", "b0"]
    picked.pixels[...] = 0.0
    assert cube.pixels.any()  # selection copies
    with pytest.raises(ValueError):
        band_select(cube, [0, 0])
    with pytest.raises(ValueError):
        band_select(cube, [3])


def test_shift_config_validation():
    assert ShiftConfig((1.0, 1.0), (0.0, 0.0)).is_identity
    assert not ShiftConfig((1.0,), (0.1,)).is_identity
    assert not ShiftConfig((1.0,), (0.0,), noise_sigma=0.1).is_identity
    with pytest.raises(ValueError):
        ShiftConfig((1.0,), (0.0, 0.0))
    with pytest.raises(ValueError):
        ShiftConfig((0.0,), (0.0,))
    with pytest.raises(ValueError):
        ShiftConfig((1.0,), (0.0,), noise_sigma=-0.1)


def test_shift_pixels_affine_math():
    rng = np.random.default_rng(5)
    x = rng.uniform(0, 1, (3, 4, 4, 2)).astype(np.float32)
    shift = ShiftConfig((2.0, 0.5), (0.1, -0.2))
    got = _shift_pixels(x, shift)
    want = (
        x.astype(np.float64) * np.array([2.0, 0.5]) + np.array([0.1, -0.2])
    ).astype(np.float32)
    npt.assert_array_equal(got, want)
    # noisy variant is seeded
    noisy = ShiftConfig((2.0, 0.5), (0.1, -0.2), noise_sigma=0.05, seed=9)
    npt.assert_array_equal(_shift_pixels(x, noisy), _shift_pixels(x, noisy))
    assert (_shift_pixels(x, noisy) != got).any()


def _pair(shift, n=6, seed=13):
    return synth_domain_pair(n, (8, 8, 2), shift, seed=seed)


def test_synth_pair_shapes_and_counts():
    source, target = _pair(ShiftConfig((1.3, 1.1), (0.2, 0.1)))
    for domain in (source, target):
        for (tr, te) in domain:
            assert len(tr) == 6 and len(te) == 6
            assert tr.cube_shape == (8, 8, 2)
            x, y = tr.stacked()
            assert x.shape == (6, 8, 8, 2) and y.shape == (6,)


def test_synth_pair_identity_shift_is_bit_exact():
    source, target = _pair(ShiftConfig((1.0, 1.0), (0.0, 0.0)))
    for (s_tr, s_te), (t_tr, t_te) in zip(source, target):
        npt.assert_array_equal(s_tr.stacked()[0], t_tr.stacked()[0])
        npt.assert_array_equal(s_te.stacked()[0], t_te.stacked()[0])


def test_synth_pair_labels_survive_the_shift():
    # masks are fixed before shifting, so labels must match item for item
    source, target = _pair(ShiftConfig((1.9, 1.7), (0.4, 0.3), noise_sigma=0.02))
    for (s_tr, s_te), (t_tr, t_te) in zip(source, target):
        npt.assert_array_equal(s_tr.stacked()[1], t_tr.stacked()[1])
        npt.assert_array_equal(s_te.stacked()[1], t_te.stacked()[1])
        assert (s_tr.stacked()[0] != t_tr.stacked()[0]).any()


def test_synth_pair_deterministic():
    shift = ShiftConfig((1.5, 1.2), (0.3, 0.2), noise_sigma=0.01, seed=2)
    a = _pair(shift)
    b = _pair(shift)
    c = _pair(shift, seed=14)
    npt.assert_array_equal(a[0][0][0].stacked()[0], b[0][0][0].stacked()[0])
    npt.assert_array_equal(a[1][0][1].stacked()[0], b[1][0][1].stacked()[0])
    assert (a[0][0][0].stacked()[0] != c[0][0][0].stacked()[0]).any()


def test_synth_pair_rejects_bad_args():
    with pytest.raises(ValueError):
        synth_domain_pair(1, (8, 8, 2), ShiftConfig((1.0, 1.0), (0.0, 0.0)), seed=0)
    with pytest.raises(ValueError):
        synth_domain_pair(4, (8, 8, 3), ShiftConfig((1.0, 1.0), (0.0, 0.0)), seed=0)


def test_synth_pair_has_both_classes(desk_pair):
    # the documented desk profile must expose a usable class balance at
    # both thresholds or the two training stages degenerate
    source, _ = desk_pair
    for tr, te in source:
        for split in (tr, te):
            labels = split.stacked()[1]
            assert 0 < labels.sum() < len(labels)


def test_dataset_container_round_trip(tmp_path):
    tiles = _toy_tiles(6)
    (tr30, _), _ = build_threshold_datasets(tiles, 0.5, seed=1)
    out = tmp_path / "ds"
    save_dataset(tr30, out)
    loaded = load_dataset(out)
    npt.assert_array_equal(loaded.stacked()[0], tr30.stacked()[0])
    npt.assert_array_equal(loaded.stacked()[1], tr30.stacked()[1])
    assert loaded.threshold == tr30.threshold
    assert loaded.split == tr30.split
    assert loaded.name == tr30.name
    assert [b.ident for b in loaded.items[0][0].bands] == [
        b.ident for b in tr30.items[0][0].bands
    ]
    # second save of the loaded copy is byte identical
    out2 = tmp_path / "ds2"
    save_dataset(loaded, out2)
    assert (out / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()
    assert (out / "pixels.bin").read_bytes() == (out2 / "pixels.bin").read_bytes()


def test_empty_dataset_round_trip(tmp_path):
    empty = LabeledDataset([], threshold=0.3, split="train", name="nil")
    save_dataset(empty, tmp_path / "e")
    loaded = load_dataset(tmp_path / "e")
    assert len(loaded) == 0 and loaded.name == "nil"


def test_load_dataset_rejects_corruption(tmp_path):
    tiles = _toy_tiles(4)
    (tr30, _), _ = build_threshold_datasets(tiles, 0.5, seed=1)
    out = tmp_path / "ds"
    save_dataset(tr30, out)

    with pytest.raises(ValueError):
        load_dataset(tmp_path / "missing")

    truncated = out / "pixels.bin"
    raw = truncated.read_bytes()
    truncated.write_bytes(raw[:-4])
    with pytest.raises(ValueError):
        load_dataset(out)
    truncated.write_bytes(raw)

    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["labels"] = manifest["labels"][:-1]
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError):
        load_dataset(out)

    manifest = json.loads(manifest_path.read_text())
    manifest["format_version"] = 99
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(ValueError):
        load_dataset(out)

    manifest_path.write_text("{not json")
    with pytest.raises(ValueError):
        load_dataset(out)


def test_dataset_validation():
    cube = _cube(4, 4, 1)
    with pytest.raises(ValueError):
        LabeledDataset([(cube, 2)], threshold=0.3, split="train")
    with pytest.raises(ValueError):
        LabeledDataset([(cube, 1)], threshold=0.3, split="validation")
    with pytest.raises(ValueError):
        LabeledDataset(
            [(cube, 1), (_cube(8, 8, 1), 0)], threshold=0.3, split="train"
        )
    with pytest.raises(ValueError):
        LabeledDataset([], threshold=0.3, split="train").stacked()
