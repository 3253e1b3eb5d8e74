"""Shared fixtures.

The desk fixtures are session-scoped because pretraining takes seconds;
tests must treat them as read-only and work on .copy() when adapting.
"""
import time

import numpy as np
import pytest

from cloudadapt import (
    ArchConfig,
    ConvBlock,
    TrainConfig,
    build_model,
    fisher_scores,
    preset_arch,
    pretrain_two_stage,
    synth_domain_pair,
)
from cloudadapt import presets


@pytest.fixture(scope="session")
def desk_timings():
    """Wall-clock seconds spent building each session fixture."""
    return {}


@pytest.fixture(scope="session")
def desk_pair(desk_timings):
    """The documented synthetic source/target pair."""
    t0 = time.perf_counter()
    shift = presets.shift_preset(
        presets.DESK_SHIFT_PRESET, presets.DESK_GEOMETRY[2]
    )
    pair = synth_domain_pair(
        presets.DESK_N_PER_SPLIT,
        presets.DESK_GEOMETRY,
        shift,
        seed=presets.DESK_SEED,
    )
    desk_timings["synth"] = time.perf_counter() - t0
    return pair


@pytest.fixture(scope="session")
def desk_model(desk_pair, desk_timings):
    """Two-stage pretrained detector on the desk source domain. Read-only."""
    t0 = time.perf_counter()
    (s30tr, _), (s70tr, _) = desk_pair[0]
    model = build_model(preset_arch("cloudscout-mini", presets.DESK_GEOMETRY[2]), seed=0)
    cfg = TrainConfig(**presets.DESK_TRAIN)
    pretrain_two_stage(model, s30tr, s70tr, cfg, cfg)
    desk_timings["train"] = time.perf_counter() - t0
    return model


@pytest.fixture(scope="session")
def desk_scores(desk_model, desk_pair, desk_timings):
    """Importance scores of the pretrained model on the target train split."""
    t0 = time.perf_counter()
    (_, _), (t70tr, _) = desk_pair[1]
    scores = fisher_scores(desk_model, t70tr)
    desk_timings["fisher"] = time.perf_counter() - t0
    return scores


@pytest.fixture
def tiny_arch():
    """Smallest architecture the layer stack supports; for oracle tests."""
    return ArchConfig(
        name="tiny",
        input_shape=(8, 8, 1),
        conv_blocks=(ConvBlock(2, 3, 2),),
        fc_sizes=(2,),
    )


@pytest.fixture
def tiny_batch():
    rng = np.random.default_rng(11)
    return np.ascontiguousarray(rng.uniform(0.0, 1.0, (4, 8, 8, 1)))
