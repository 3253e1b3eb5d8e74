"""Architecture bookkeeping, forward determinism, checkpoint format."""
import numpy as np
import numpy.testing as npt
import pytest

from cloudadapt.model import (
    ArchConfig,
    ConvBlock,
    DetectorModel,
    ParamKind,
    StatsMode,
    bn_layers,
    build_index_map,
    build_model,
    count_params,
    flatten_params,
    forward,
    load_checkpoint,
    predict,
    predict_batch,
    preset_arch,
    save_checkpoint,
    unflatten_params,
    update_running_stats,
)

BN_AFFINE = frozenset({ParamKind.BN_GAMMA, ParamKind.BN_BETA})


# hand-computed sizes for the two presets at 3 and 8 input bands
PRESET_TOTALS = {
    ("cloudscout-mini", 3): 41_346,
    ("cloudscout-mini", 8): 41_706,
    ("resnet-mini", 3): 80_818,
    ("resnet-mini", 8): 81_538,
}


@pytest.mark.parametrize("name,bands", sorted(PRESET_TOTALS))
def test_preset_param_totals(name, bands):
    counts = count_params(preset_arch(name, bands))
    assert counts.total == PRESET_TOTALS[(name, bands)]
    assert counts.conv + counts.bn + counts.fc == counts.total


def test_cloudscout_component_breakdown():
    counts = count_params(preset_arch("cloudscout-mini", 3))
    # conv: 3*3*3*8+8, 3*3*8*16+16, 3*3*16*32+32, 3*3*32*64+64
    assert counts.conv == 224 + 1168 + 4640 + 18496
    assert counts.bn == 2 * (8 + 16 + 32 + 64)
    # fc: halving pools take 32x32 to 2x2, so 256 features into 64 then 2
    assert counts.fc == (256 * 64 + 64) + (64 * 2 + 2)


def test_feature_walk_and_dim():
    arch = preset_arch("cloudscout-mini", 3)
    assert arch.feature_walk() == [(16, 16, 8), (8, 8, 16), (4, 4, 32), (2, 2, 64)]
    assert arch.feature_dim == 256
    assert preset_arch("resnet-mini", 3).feature_dim == 2 * 2 * 64


def test_index_map_layout(tiny_arch):
    imap = build_index_map(preset_arch("cloudscout-mini", 3))
    offset = 0
    for rec in imap:
        assert rec.offset == offset
        assert rec.size == int(np.prod(rec.shape))
        offset += rec.size
    assert offset == imap.total_params
    # per-block kind order is fixed
    kinds = [r.kind for r in imap][:4]
    assert kinds == [
        ParamKind.CONV_W,
        ParamKind.CONV_B,
        ParamKind.BN_GAMMA,
        ParamKind.BN_BETA,
    ]
    rng = np.random.default_rng(0)
    for idx in rng.integers(0, imap.total_params, size=50):
        rec, inner = imap.locate(int(idx))
        assert rec.offset + inner == idx
        assert 0 <= inner < rec.size
    with pytest.raises(IndexError):
        imap.locate(imap.total_params)
    with pytest.raises(IndexError):
        imap.locate(-1)


def test_kind_mask_partitions():
    imap = build_index_map(preset_arch("cloudscout-mini", 3))
    bn_mask = imap.kind_mask(BN_AFFINE)
    rest = imap.kind_mask(frozenset(set(ParamKind) - BN_AFFINE))
    assert bn_mask.sum() == count_params(preset_arch("cloudscout-mini", 3)).bn
    npt.assert_array_equal(bn_mask ^ rest, np.ones(imap.total_params, dtype=bool))


def test_build_model_init_state(tiny_arch):
    model = build_model(tiny_arch, seed=3)
    assert model.mode is StatsMode.TRAIN_STATS
    for lid in model.conv_ids:
        npt.assert_array_equal(model.params[(lid, ParamKind.BN_GAMMA)], 1.0)
        npt.assert_array_equal(model.params[(lid, ParamKind.BN_BETA)], 0.0)
        npt.assert_array_equal(model.params[(lid, ParamKind.CONV_B)], 0.0)
        rt = model.bn_runtime[lid]
        npt.assert_array_equal(rt.running_mean, 0.0)
        npt.assert_array_equal(rt.running_var, 1.0)
    for arr in model.params.values():
        assert arr.dtype == np.float32


def test_build_model_seed_determinism(tiny_arch):
    a = flatten_params(build_model(tiny_arch, seed=5))
    b = flatten_params(build_model(tiny_arch, seed=5))
    c = flatten_params(build_model(tiny_arch, seed=6))
    npt.assert_array_equal(a, b)
    assert (a != c).any()


def test_flatten_unflatten_round_trip(tiny_arch):
    model = build_model(tiny_arch, seed=1)
    flat = flatten_params(model)
    assert flat.dtype == np.float32
    assert flat.shape == (model.index_map.total_params,)
    rng = np.random.default_rng(2)
    new = flat + rng.normal(scale=0.01, size=flat.shape).astype(np.float32)
    unflatten_params(model, new)
    npt.assert_array_equal(flatten_params(model), new.astype(np.float32))
    with pytest.raises(ValueError):
        unflatten_params(model, new[:-1])


def test_model_copy_is_deep(tiny_arch, tiny_batch):
    model = build_model(tiny_arch, seed=0)
    clone = model.copy()
    before = flatten_params(model).copy()
    flat = flatten_params(clone)
    flat += 1.0
    unflatten_params(clone, flat)
    clone.bn_runtime[clone.conv_ids[0]].running_mean += 5.0
    npt.assert_array_equal(flatten_params(model), before)
    npt.assert_array_equal(model.bn_runtime[model.conv_ids[0]].running_mean, 0.0)


def test_bn_handles_alias_model(tiny_arch):
    model = build_model(tiny_arch, seed=0)
    handle = bn_layers(model)[0]
    handle.gamma[...] = 2.5
    npt.assert_array_equal(
        model.params[(handle.layer_id, ParamKind.BN_GAMMA)], 2.5
    )
    handle.runtime.running_mean[...] = 0.25
    npt.assert_array_equal(model.bn_runtime[handle.layer_id].running_mean, 0.25)


def test_forward_shapes_and_rows(tiny_arch, tiny_batch):
    model = build_model(tiny_arch, seed=0)
    for mode in StatsMode:
        probs = forward(model, tiny_batch, mode)
        assert probs.shape == (4, 2)
        npt.assert_allclose(probs.sum(axis=1), 1.0, rtol=1e-12)
        assert (probs >= 0).all()


def test_eval_stats_batch_composition_independence(tiny_arch, tiny_batch):
    # frozen statistics make each sample's output independent of its batch
    model = build_model(tiny_arch, seed=0)
    whole = forward(model, tiny_batch, StatsMode.EVAL_STATS)
    singles = np.vstack(
        [forward(model, tiny_batch[i : i + 1], StatsMode.EVAL_STATS) for i in range(4)]
    )
    npt.assert_array_equal(whole, singles)


def test_train_stats_depend_on_batch(tiny_arch, tiny_batch):
    model = build_model(tiny_arch, seed=0)
    whole = forward(model, tiny_batch, StatsMode.TRAIN_STATS)
    single = forward(model, tiny_batch[:1], StatsMode.TRAIN_STATS)
    assert (whole[0] != single[0]).any()


def test_forward_never_touches_running_stats(tiny_arch, tiny_batch):
    model = build_model(tiny_arch, seed=0)
    lid = model.conv_ids[0]
    before = model.bn_runtime[lid].running_mean.copy()
    forward(model, tiny_batch, StatsMode.TRAIN_STATS)
    forward(model, tiny_batch, StatsMode.EVAL_STATS)
    npt.assert_array_equal(model.bn_runtime[lid].running_mean, before)


def test_predict_tie_resolves_to_zero(tiny_arch, tiny_batch):
    model = build_model(tiny_arch, seed=0)
    # zero final layer forces identical logits for both classes
    model.params[("fc1", ParamKind.FC_W)][...] = 0.0
    model.params[("fc1", ParamKind.FC_B)][...] = 0.0
    assert predict(model, tiny_batch[0], StatsMode.EVAL_STATS) == 0
    npt.assert_array_equal(
        predict_batch(model, tiny_batch, StatsMode.EVAL_STATS),
        np.zeros(4, dtype=np.uint8),
    )


def test_predict_rejects_batch_input(tiny_arch, tiny_batch):
    model = build_model(tiny_arch, seed=0)
    with pytest.raises(ValueError):
        predict(model, tiny_batch)


def test_forward_input_validation(tiny_arch, tiny_batch):
    model = build_model(tiny_arch, seed=0)
    with pytest.raises(ValueError):
        forward(model, [])
    with pytest.raises(ValueError):
        forward(model, tiny_batch[:, :4])
    bad = tiny_batch.copy()
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        forward(model, bad)


def test_update_running_stats_blend(tiny_arch):
    model = build_model(tiny_arch, seed=0)
    lid = model.conv_ids[0]
    rt = model.bn_runtime[lid]
    rt.momentum = 0.5
    c = tiny_arch.conv_blocks[0].filters
    update_running_stats(model, [(np.full(c, 2.0), np.full(c, 3.0))])
    npt.assert_allclose(rt.running_mean, 1.0)  # (1-0.5)*0 + 0.5*2
    npt.assert_allclose(rt.running_var, 2.0)  # (1-0.5)*1 + 0.5*3
    with pytest.raises(ValueError):
        update_running_stats(model, [])


def test_checkpoint_round_trip(tmp_path, tiny_arch, tiny_batch):
    model = build_model(tiny_arch, seed=9)
    model.mode = StatsMode.EVAL_STATS
    model.bn_runtime[model.conv_ids[0]].running_mean[...] = 0.125
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    loaded = load_checkpoint(path)
    npt.assert_array_equal(flatten_params(loaded), flatten_params(model))
    assert loaded.mode is StatsMode.EVAL_STATS
    assert loaded.seed == 9
    assert loaded.arch == model.arch
    for lid in model.conv_ids:
        npt.assert_array_equal(
            loaded.bn_runtime[lid].running_mean,
            model.bn_runtime[lid].running_mean.astype(np.float32).astype(np.float64),
        )
    npt.assert_array_equal(
        forward(loaded, tiny_batch, StatsMode.EVAL_STATS),
        forward(model, tiny_batch, StatsMode.EVAL_STATS),
    )


def test_checkpoint_bytes_deterministic(tmp_path, tiny_arch):
    model = build_model(tiny_arch, seed=4)
    a, b, c = (tmp_path / n for n in ("a.ckpt", "b.ckpt", "c.ckpt"))
    save_checkpoint(model, a)
    save_checkpoint(model, b)
    assert a.read_bytes() == b.read_bytes()
    # a save -> load -> save cycle is also byte stable
    save_checkpoint(load_checkpoint(a), c)
    assert c.read_bytes() == a.read_bytes()


def test_checkpoint_corruption_rejected(tmp_path, tiny_arch):
    model = build_model(tiny_arch, seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()

    bad_magic = tmp_path / "magic.ckpt"
    bad_magic.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        load_checkpoint(bad_magic)

    truncated = tmp_path / "trunc.ckpt"
    truncated.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        load_checkpoint(truncated)

    padded = tmp_path / "pad.ckpt"
    padded.write_bytes(raw + b"\x00\x00")
    with pytest.raises(ValueError):
        load_checkpoint(padded)

    bad_version = tmp_path / "ver.ckpt"
    bad_version.write_bytes(raw[:4] + b"\x7f" + raw[5:])
    with pytest.raises(ValueError):
        load_checkpoint(bad_version)

    header_only = tmp_path / "head.ckpt"
    header_only.write_bytes(raw[:6])
    with pytest.raises(ValueError):
        load_checkpoint(header_only)


BAD_ARCHS = [
    dict(input_shape=(8, 8, 0)),
    dict(conv_blocks=()),
    dict(conv_blocks=(ConvBlock(2, 4, 2),)),  # even kernel
    dict(conv_blocks=(ConvBlock(2, 3, 3),)),  # pool does not divide 8
    dict(conv_blocks=(ConvBlock(0, 3, 2),)),
    dict(fc_sizes=(3,)),  # must end with 2 output units
    dict(fc_sizes=()),
    dict(bn_epsilon=0.0),
]


@pytest.mark.parametrize("override", BAD_ARCHS)
def test_arch_validation_rejects(override):
    base = dict(
        name="t",
        input_shape=(8, 8, 1),
        conv_blocks=(ConvBlock(2, 3, 2),),
        fc_sizes=(2,),
    )
    base.update(override)
    with pytest.raises(ValueError):
        ArchConfig(**base)


def test_arch_dict_round_trip():
    arch = preset_arch("resnet-mini", 5)
    assert ArchConfig.from_dict(arch.to_dict()) == arch


def test_preset_arch_rejects_unknown():
    with pytest.raises(ValueError):
        preset_arch("cloudscout-maxi")
    with pytest.raises(ValueError):
        preset_arch("cloudscout-mini", bands=0)
