"""Desk-scale domain adaptation toolkit for tiny cloud-detection CNNs.

Train a small batch-normalized CNN on a source domain, measure the accuracy
gap on a shifted target domain, then close it: either supervised sparse
fine-tuning packaged as a bit-exact uplink delta, or online unsupervised
adaptation from an unlabeled stream (running-statistics refresh, entropy
descent on the normalization affines).
"""

from .data import (
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
)
from .fish import (
    FisherScores,
    SparseMask,
    apply_delta,
    extract_delta,
    fisher_scores,
    mask_cardinality,
    masked_finetune,
    select_mask,
)
from .metrics import (
    GapReport,
    MetricsReport,
    accuracy,
    evaluate_model,
    false_positive_rate,
    gap_report,
)
from .model import (
    ArchConfig,
    ConvBlock,
    DetectorModel,
    ParamKind,
    StatsMode,
    bn_layers,
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
from .training import (
    TrainConfig,
    bce_loss,
    pretrain_two_stage,
    train_classifier,
    train_extractor,
)
from .tta import (
    AdaptReport,
    DUAConfig,
    DUAState,
    TentConfig,
    dua_adapt,
    entropy,
    run_tta,
    tent_adapt,
)
from .uplink import (
    FP16,
    FP32,
    BudgetReport,
    SparseDelta,
    budget_from_counts,
    budget_report,
    dequantize,
    fingerprint_flat,
    payload_bytes,
    quantize_fp16,
    read_delta,
    write_delta,
)

__version__ = "0.1.0"
