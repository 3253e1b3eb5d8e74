"""Command-line experiment harness.

One entry point with subcommands covering the whole loop: synthesize a
shifted dataset pair, pretrain in two stages, measure the domain gap, adapt
(sparse supervised fine-tune or online unsupervised), package and apply
sparse deltas, and sweep the main knobs with optional plots.

Every run is determined by its flags (plus an optional JSON config file that
supplies defaults); environment variables are never consulted.  Every JSON
artifact echoes the resolved configuration.  Exit code 0 means the requested
artifacts were fully written.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import presets
from .data import load_dataset, save_dataset, synth_domain_pair
from .fish import apply_delta, extract_delta, fisher_scores, masked_finetune, select_mask
from .metrics import evaluate_model, gap_report
from .model import (
    StatsMode,
    build_model,
    flatten_params,
    load_checkpoint,
    preset_arch,
    save_checkpoint,
    unflatten_params,
)
from .training import TrainConfig, pretrain_two_stage
from .tta import AdaptReport, DUAConfig, TentConfig, run_tta
from .uplink import FP16, FP32, budget_report, read_delta, write_delta

REPORT_VERSION = 1

_STATS = {"eval": StatsMode.EVAL_STATS, "train": StatsMode.TRAIN_STATS}


# ---------------------------------------------------------------- helpers

def _geometry(value) -> tuple[int, int, int]:
    """Accepts "HxWxC" or a 3-element list (config file form)."""
    if isinstance(value, (list, tuple)):
        parts = [int(v) for v in value]
    else:
        parts = [int(p) for p in str(value).lower().split("x")]
    if len(parts) != 3 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"geometry must be HxWxC, got {value!r}")
    return tuple(parts)


def _float_list(value) -> list[float]:
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(p) for p in str(value).split(",") if p.strip()]


def _int_list(value) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    return [int(p) for p in str(value).split(",") if p.strip()]


def _write_json(path, payload: dict) -> None:
    """Deterministic bytes: sorted keys, fixed indent, trailing newline."""
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
        return
    tmp = f"{path}.tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _save_ckpt(model, path) -> None:
    tmp = f"{path}.tmp"
    save_checkpoint(model, tmp)
    os.replace(tmp, path)


def _echo_config(ns: argparse.Namespace) -> dict:
    cfg = {}
    for key, val in sorted(vars(ns).items()):
        if key.startswith("_") or key in ("handler", "command", "method"):
            continue
        if isinstance(val, tuple):
            val = list(val)
        cfg[key] = val
    return cfg


def _report(ns: argparse.Namespace, **payload) -> dict:
    body = {
        "format_version": REPORT_VERSION,
        "command": ns.command if ns.method is None else f"{ns.command} {ns.method}",
        "config": _echo_config(ns),
    }
    body.update(payload)
    return body


def _dataset_dir(root: str, domain: str, name: str) -> str:
    return os.path.join(root, domain, name)


def _load_split(root: str, domain: str, name: str):
    path = _dataset_dir(root, domain, name)
    if not os.path.isdir(path):
        raise FileNotFoundError(f"no dataset at {path}")
    return load_dataset(path)


def _dataset_bands(ds) -> int:
    shape = ds.cube_shape
    if shape is None:
        raise ValueError(f"dataset {ds.name} is empty")
    return shape[2]


def _stream_pixels(ds, n_samples: int | None) -> np.ndarray:
    """Unlabeled adaptation stream: the dataset's cubes in stored order."""
    x, _ = ds.stacked()
    if n_samples is not None:
        if n_samples < 0:
            raise ValueError("n-samples must be nonnegative")
        x = x[:n_samples]
    return x


def _plot_curves(path, xs, series: dict[str, list], xlabel: str, title: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.2, 3.4), dpi=120)
    for label, ys in series.items():
        ax.plot(xs, ys, marker="o", linewidth=1.2, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("percent")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# ---------------------------------------------------------------- commands

def cmd_synth(ns) -> int:
    geometry = _geometry(ns.geometry)
    shift = presets.shift_preset(ns.shift_preset, geometry[2])
    source, target = synth_domain_pair(ns.n_per_split, geometry, shift, ns.seed)
    for domain, pair in (("source", source), ("target", target)):
        for tr, te in pair:
            for ds in (tr, te):
                save_dataset(ds, _dataset_dir(ns.out, domain, ds.name))
    _write_json(
        os.path.join(ns.out, "synth.json"),
        _report(
            ns,
            shift={
                "gain": list(shift.gain),
                "offset": list(shift.offset),
                "noise_sigma": shift.noise_sigma,
                "seed": shift.seed,
            },
            datasets=sorted(
                f"{domain}/{ds.name}"
                for domain, pair in (("source", source), ("target", target))
                for tr, te in pair
                for ds in (tr, te)
            ),
        ),
    )
    return 0


def cmd_train(ns) -> int:
    th30_train = _load_split(ns.data, "source", "th30-train")
    th70_train = _load_split(ns.data, "source", "th70-train")
    arch = preset_arch(ns.arch, _dataset_bands(th30_train))
    model = build_model(arch, seed=ns.seed)
    cfg = TrainConfig(
        learning_rate=ns.learning_rate,
        epochs=ns.epochs,
        batch_size=ns.batch_size,
        seed=ns.seed,
        lr_schedule=ns.lr_schedule,
        lr_decay_factor=ns.lr_decay_factor,
        lr_decay_period=ns.lr_decay_period,
    )
    cfg_cls = cfg
    if ns.classifier_epochs is not None or ns.classifier_learning_rate is not None:
        cfg_cls = TrainConfig(
            learning_rate=(
                cfg.learning_rate
                if ns.classifier_learning_rate is None
                else ns.classifier_learning_rate
            ),
            epochs=cfg.epochs if ns.classifier_epochs is None else ns.classifier_epochs,
            batch_size=cfg.batch_size,
            seed=cfg.seed,
            lr_schedule=cfg.lr_schedule,
            lr_decay_factor=cfg.lr_decay_factor,
            lr_decay_period=cfg.lr_decay_period,
        )
    log: list = []
    pretrain_two_stage(model, th30_train, th70_train, cfg, cfg_cls, log)
    _save_ckpt(model, ns.out)
    _write_json(ns.log, _report(ns, training_log=log))
    return 0


def cmd_gap(ns) -> int:
    model = load_checkpoint(ns.model)
    name = f"th{ns.threshold}-test"
    source_test = _load_split(ns.data, "source", name)
    target_test = _load_split(ns.data, "target", name)
    rep = gap_report(model, source_test, target_test, model_name=ns.model)
    _write_json(ns.out, _report(ns, gap=rep.to_dict()))
    return 0


def cmd_eval(ns) -> int:
    model = load_checkpoint(ns.model)
    ds = load_dataset(ns.data)
    rep = evaluate_model(
        model,
        ds,
        stats_mode=_STATS[ns.stats_mode],
        batch_size=ns.batch_size,
        model_name=ns.model,
    )
    _write_json(ns.out, _report(ns, metrics=rep.to_dict()))
    return 0


def cmd_adapt_fish(ns) -> int:
    model = load_checkpoint(ns.model)
    model.mode = StatsMode.EVAL_STATS
    train_ds = _load_split(ns.data, "target", f"th{ns.threshold}-train")
    scores = fisher_scores(model, train_ds)
    mask = select_mask(scores, ns.sparsity)
    base = flatten_params(model)
    cfg = TrainConfig(
        learning_rate=ns.learning_rate,
        epochs=ns.epochs,
        batch_size=ns.batch_size,
        seed=ns.seed,
    )
    masked_finetune(model, mask, train_ds, cfg)
    delta = extract_delta(base, flatten_params(model), mask)
    dtype = FP16 if ns.dtype == "fp16" else FP32
    tmp = f"{ns.out_delta}.tmp"
    write_delta(delta, dtype, tmp)
    os.replace(tmp, ns.out_delta)
    _save_ckpt(model, ns.out_model)
    budget = budget_report(delta, model, dtype, ns.budget_bytes)
    _write_json(ns.out_report, _report(ns, mask_k=mask.k, budget=budget.to_dict()))
    return 0


def cmd_adapt_dua(ns) -> int:
    model = load_checkpoint(ns.model)
    stream = _stream_pixels(
        _load_split(ns.data, "target", f"th{ns.threshold}-train"), ns.n_samples
    )
    cfg = DUAConfig(
        omega=ns.omega,
        delta_floor=ns.delta_floor,
        m0=ns.m0,
        augment_factor=ns.augment_factor,
    )
    adapted, rep = run_tta(model, stream, ns.n_batch, cfg, aug_seed=ns.aug_seed)
    _save_ckpt(adapted, ns.out_model)
    _write_json(ns.out_report, _report(ns, adapt=rep.to_dict()))
    return 0


def cmd_adapt_tent(ns) -> int:
    model = load_checkpoint(ns.model)
    if ns.epochs == 0:
        # zero epochs means "do not adapt": emit the input model unchanged
        adapted, rep = model.copy(), AdaptReport()
    else:
        stream = _stream_pixels(
            _load_split(ns.data, "target", f"th{ns.threshold}-train"), ns.n_samples
        )
        cfg = TentConfig(learning_rate=ns.learning_rate, epochs=ns.epochs)
        adapted, rep = run_tta(model, stream, ns.n_batch, cfg)
    _save_ckpt(adapted, ns.out_model)
    _write_json(ns.out_report, _report(ns, adapt=rep.to_dict()))
    return 0


def cmd_apply_delta(ns) -> int:
    model = load_checkpoint(ns.model)
    delta = read_delta(ns.delta)
    unflatten_params(model, apply_delta(flatten_params(model), delta))
    _save_ckpt(model, ns.out)
    return 0


def cmd_sweep_sparsity(ns) -> int:
    model = load_checkpoint(ns.model)
    model.mode = StatsMode.EVAL_STATS
    train_ds = _load_split(ns.data, "target", f"th{ns.threshold}-train")
    test_ds = _load_split(ns.data, "target", f"th{ns.threshold}-test")
    scores = fisher_scores(model, train_ds)
    cfg = TrainConfig(
        learning_rate=ns.learning_rate,
        epochs=ns.epochs,
        batch_size=ns.batch_size,
        seed=ns.seed,
    )
    points = []
    for lvl in _float_list(ns.values):
        trial = model.copy()
        mask = select_mask(scores, lvl)
        masked_finetune(trial, mask, train_ds, cfg)
        rep = evaluate_model(trial, test_ds, model_name=ns.model)
        points.append(
            {
                "sparsity": lvl,
                "mask_k": mask.k,
                "acc_percent": rep.acc_percent,
                "fp_percent": rep.fp_percent,
            }
        )
    _write_json(ns.out, _report(ns, points=points))
    if ns.plot:
        _plot_curves(
            ns.plot,
            [p["sparsity"] for p in points],
            {
                "ACC": [p["acc_percent"] for p in points],
                "FP": [p["fp_percent"] for p in points],
            },
            "fraction of weights fine-tuned",
            "sparse fine-tune sweep",
        )
    return 0


def cmd_sweep_samples(ns) -> int:
    model = load_checkpoint(ns.model)
    train_ds = _load_split(ns.data, "target", f"th{ns.threshold}-train")
    test_ds = _load_split(ns.data, "target", f"th{ns.threshold}-test")
    cfg = DUAConfig(
        omega=ns.omega,
        delta_floor=ns.delta_floor,
        m0=ns.m0,
        augment_factor=ns.augment_factor,
    )
    points = []
    for n in _int_list(ns.values):
        stream = _stream_pixels(train_ds, n)
        adapted, rep = run_tta(model, stream, ns.n_batch, cfg, aug_seed=ns.aug_seed)
        met = evaluate_model(adapted, test_ds, model_name=ns.model)
        points.append(
            {
                "n_samples": n,
                "batches_processed": rep.batches_processed,
                "acc_percent": met.acc_percent,
                "fp_percent": met.fp_percent,
            }
        )
    _write_json(ns.out, _report(ns, points=points))
    if ns.plot:
        _plot_curves(
            ns.plot,
            [p["n_samples"] for p in points],
            {"ACC": [p["acc_percent"] for p in points]},
            "samples seen",
            "running-stats adaptation vs sample count",
        )
    return 0


def _tent_eval(model, test_ds, n_batch: int, model_name: str):
    # batch-stat normalization is this adapter's inference rule, so score in
    # the same regime it adapts in
    return evaluate_model(
        model,
        test_ds,
        stats_mode=StatsMode.TRAIN_STATS,
        batch_size=n_batch,
        model_name=model_name,
    )


def cmd_sweep_batch(ns) -> int:
    model = load_checkpoint(ns.model)
    train_ds = _load_split(ns.data, "target", f"th{ns.threshold}-train")
    test_ds = _load_split(ns.data, "target", f"th{ns.threshold}-test")
    stream = _stream_pixels(train_ds, ns.n_samples)
    points = []
    for n_b in _int_list(ns.values):
        cfg = TentConfig(learning_rate=ns.learning_rate, epochs=ns.epochs)
        adapted, rep = run_tta(model, stream, n_b, cfg)
        met = _tent_eval(adapted, test_ds, n_b, ns.model)
        points.append(
            {
                "n_batch": n_b,
                "batches_processed": rep.batches_processed,
                "acc_percent": met.acc_percent,
                "fp_percent": met.fp_percent,
            }
        )
    _write_json(ns.out, _report(ns, points=points))
    if ns.plot:
        _plot_curves(
            ns.plot,
            [p["n_batch"] for p in points],
            {"ACC": [p["acc_percent"] for p in points]},
            "adaptation batch size",
            "entropy adaptation vs batch size",
        )
    return 0


def cmd_sweep_epochs(ns) -> int:
    model = load_checkpoint(ns.model)
    train_ds = _load_split(ns.data, "target", f"th{ns.threshold}-train")
    test_ds = _load_split(ns.data, "target", f"th{ns.threshold}-test")
    stream = _stream_pixels(train_ds, ns.n_samples)
    points = []
    for epochs in _int_list(ns.values):
        if epochs == 0:
            adapted, rep = model.copy(), AdaptReport()
        else:
            cfg = TentConfig(learning_rate=ns.learning_rate, epochs=epochs)
            adapted, rep = run_tta(model, stream, ns.n_batch, cfg)
        met = _tent_eval(adapted, test_ds, ns.n_batch, ns.model)
        points.append(
            {
                "epochs": epochs,
                "batches_processed": rep.batches_processed,
                "acc_percent": met.acc_percent,
                "fp_percent": met.fp_percent,
            }
        )
    _write_json(ns.out, _report(ns, points=points))
    if ns.plot:
        _plot_curves(
            ns.plot,
            [p["epochs"] for p in points],
            {"ACC": [p["acc_percent"] for p in points]},
            "gradient epochs per batch",
            "entropy adaptation vs epochs",
        )
    return 0


# ---------------------------------------------------------------- parser

def _arg(*flags, **kwargs):
    return flags, kwargs


_TRAIN_ARGS = [
    _arg("--learning-rate", type=float, default=1e-2),
    _arg("--epochs", type=int, default=20),
    _arg("--batch-size", type=int, default=16),
    _arg("--seed", type=int, default=0),
]

# fine-tuning on the shifted domain needs a gentler rate; see presets
_FT_ARGS = [
    _arg("--learning-rate", type=float, default=presets.DESK_FINETUNE["learning_rate"]),
    _arg("--epochs", type=int, default=presets.DESK_FINETUNE["epochs"]),
    _arg("--batch-size", type=int, default=presets.DESK_FINETUNE["batch_size"]),
    _arg("--seed", type=int, default=presets.DESK_FINETUNE["seed"]),
]

_DUA_ARGS = [
    _arg("--omega", type=float, default=0.94),
    _arg("--delta-floor", type=float, default=0.005),
    _arg("--m0", type=float, default=0.1),
    _arg("--augment-factor", type=int, default=1),
    _arg("--aug-seed", type=int, default=0),
]

_COMMANDS = [
    (
        "synth",
        None,
        "synthesize a shifted source/target dataset pair",
        [
            _arg("--out", required=True, help="output directory"),
            _arg("--seed", type=int, default=presets.DESK_SEED),
            _arg(
                "--shift-preset",
                choices=("none", "mild", "strong"),
                default=presets.DESK_SHIFT_PRESET,
            ),
            _arg("--geometry", default="32x32x3", help="tile shape HxWxC"),
            _arg("--n-per-split", type=int, default=presets.DESK_N_PER_SPLIT),
        ],
        cmd_synth,
    ),
    (
        "train",
        None,
        "two-stage pretraining on the source domain",
        [
            _arg("--data", required=True, help="synth output directory"),
            _arg("--out", required=True, help="checkpoint path"),
            _arg("--arch", choices=("cloudscout-mini", "resnet-mini"), default="cloudscout-mini"),
            *_TRAIN_ARGS,
            _arg("--lr-schedule", choices=("constant", "step"), default="constant"),
            _arg("--lr-decay-factor", type=float, default=0.5),
            _arg("--lr-decay-period", type=int, default=8),
            _arg("--classifier-epochs", type=int, default=None),
            _arg("--classifier-learning-rate", type=float, default=None),
            _arg("--log", default=None, help="write the loss log JSON here"),
        ],
        cmd_train,
    ),
    (
        "gap",
        None,
        "source-vs-target test metrics for one checkpoint",
        [
            _arg("--model", required=True),
            _arg("--data", required=True),
            _arg("--threshold", type=int, choices=(30, 70), default=70),
            _arg("--out", default=None, help="JSON path (default stdout)"),
        ],
        cmd_gap,
    ),
    (
        "eval",
        None,
        "metrics for one checkpoint on one dataset directory",
        [
            _arg("--model", required=True),
            _arg("--data", required=True, help="a single dataset directory"),
            _arg("--stats-mode", choices=("eval", "train"), default="eval"),
            _arg("--batch-size", type=int, default=None),
            _arg("--out", default=None),
        ],
        cmd_eval,
    ),
    (
        "adapt",
        "fish",
        "supervised sparse fine-tune; writes checkpoint + delta",
        [
            _arg("--model", required=True),
            _arg("--data", required=True),
            _arg("--threshold", type=int, choices=(30, 70), default=70),
            _arg("--sparsity", type=float, default=0.25),
            *_FT_ARGS,
            _arg("--dtype", choices=("fp32", "fp16"), default="fp32"),
            _arg("--budget-bytes", type=int, default=5_000_000),
            _arg("--out-model", required=True),
            _arg("--out-delta", required=True),
            _arg("--out-report", default=None),
        ],
        cmd_adapt_fish,
    ),
    (
        "adapt",
        "dua",
        "unsupervised running-statistics refresh",
        [
            _arg("--model", required=True),
            _arg("--data", required=True),
            _arg("--threshold", type=int, choices=(30, 70), default=70),
            _arg("--n-samples", type=int, default=None),
            _arg("--n-batch", type=int, default=8),
            *_DUA_ARGS,
            _arg("--out-model", required=True),
            _arg("--out-report", default=None),
        ],
        cmd_adapt_dua,
    ),
    (
        "adapt",
        "tent",
        "unsupervised entropy descent on BN scale/shift",
        [
            _arg("--model", required=True),
            _arg("--data", required=True),
            _arg("--threshold", type=int, choices=(30, 70), default=70),
            _arg("--n-samples", type=int, default=None),
            _arg("--n-batch", type=int, default=8),
            _arg("--learning-rate", type=float, default=1e-3),
            _arg("--epochs", type=int, default=1),
            _arg("--out-model", required=True),
            _arg("--out-report", default=None),
        ],
        cmd_adapt_tent,
    ),
    (
        "apply-delta",
        None,
        "apply a sparse delta file to a checkpoint",
        [
            _arg("--model", required=True),
            _arg("--delta", required=True),
            _arg("--out", required=True),
        ],
        cmd_apply_delta,
    ),
    (
        "sweep",
        "sparsity",
        "fine-tune at several sparsity levels and score each",
        [
            _arg("--model", required=True),
            _arg("--data", required=True),
            _arg("--threshold", type=int, choices=(30, 70), default=70),
            _arg("--values", default="0.01,0.05,0.1,0.25,0.5,1.0"),
            *_FT_ARGS,
            _arg("--out", default=None),
            _arg("--plot", default=None, help="image path for the curve"),
        ],
        cmd_sweep_sparsity,
    ),
    (
        "sweep",
        "samples",
        "running-stats adaptation at several stream lengths",
        [
            _arg("--model", required=True),
            _arg("--data", required=True),
            _arg("--threshold", type=int, choices=(30, 70), default=70),
            _arg("--values", default="0,8,16,32,64,128"),
            _arg("--n-batch", type=int, default=8),
            *_DUA_ARGS,
            _arg("--out", default=None),
            _arg("--plot", default=None),
        ],
        cmd_sweep_samples,
    ),
    (
        "sweep",
        "batch",
        "entropy adaptation at several batch sizes",
        [
            _arg("--model", required=True),
            _arg("--data", required=True),
            _arg("--threshold", type=int, choices=(30, 70), default=70),
            _arg("--values", default="2,4,8,16,32"),
            _arg("--n-samples", type=int, default=None),
            _arg("--learning-rate", type=float, default=1e-3),
            _arg("--epochs", type=int, default=1),
            _arg("--out", default=None),
            _arg("--plot", default=None),
        ],
        cmd_sweep_batch,
    ),
    (
        "sweep",
        "epochs",
        "entropy adaptation at several per-batch epoch counts",
        [
            _arg("--model", required=True),
            _arg("--data", required=True),
            _arg("--threshold", type=int, choices=(30, 70), default=70),
            _arg("--values", default="0,1,2,3,5"),
            _arg("--n-samples", type=int, default=None),
            _arg("--n-batch", type=int, default=8),
            _arg("--learning-rate", type=float, default=1e-3),
            _arg("--out", default=None),
            _arg("--plot", default=None),
        ],
        cmd_sweep_epochs,
    ),
]


def _add_args(parser: argparse.ArgumentParser, specs, overrides: dict) -> None:
    for flags, kwargs in specs:
        dest = kwargs.get("dest") or flags[0].lstrip("-").replace("-", "_")
        if dest in overrides:
            kwargs = dict(kwargs)
            kwargs["default"] = overrides[dest]
            kwargs.pop("required", None)
        parser.add_argument(*flags, **kwargs)


def _build_parser(overrides: dict) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cloudadapt",
        description="domain-gap measurement and adaptation for tiled detectors",
    )
    parser.add_argument(
        "--config",
        default=None,
        help="JSON file whose keys preset any flag of the chosen subcommand",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    groups: dict[str, argparse.ArgumentParser] = {}
    for command, method, help_text, specs, handler in _COMMANDS:
        if method is None:
            sp = subs.add_parser(command, help=help_text)
        else:
            if command not in groups:
                group = subs.add_parser(command, help=f"{command} subcommands")
                groups[command] = group
                group.set_defaults(
                    _methods=group.add_subparsers(dest="method", required=True)
                )
            sp = groups[command].get_default("_methods").add_parser(
                method, help=help_text
            )
        _add_args(sp, specs, overrides)
        sp.set_defaults(handler=handler, command=command, method=method)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    overrides: dict = {}
    if known.config is not None:
        try:
            with open(known.config) as f:
                overrides = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            print(f"cloudadapt: cannot read config {known.config}: {e}", file=sys.stderr)
            return 2
        if not isinstance(overrides, dict):
            print("cloudadapt: config file must hold a JSON object", file=sys.stderr)
            return 2
    parser = _build_parser(overrides)
    ns = parser.parse_args(argv)
    unknown = set(overrides) - set(vars(ns))
    if unknown:
        parser.error(f"config keys not used by this command: {sorted(unknown)}")
    try:
        return ns.handler(ns)
    except (ValueError, RuntimeError, FileNotFoundError, OSError) as e:
        print(f"cloudadapt: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
