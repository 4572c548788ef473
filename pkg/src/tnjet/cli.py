"""Command-line entry point.

Single runs emit JSON reports, sweeps emit CSV; both get a figure rendered
alongside and a manifest recording the resolved configuration, the seed and
content hashes of every input file.  Identical manifests imply byte-identical
outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, checkpoint, hardware, mps, ttn
from .data import (
    CLASS_NAMES,
    JetBatch,
    ScalerParams,
    fit_scaler,
    load_dataset,
    make_batch,
)
from .embedding import Layout, pt_first_permutation, site_labels
from .qmi import qmi_matrix
from .quantization import FxpFormat, QuantMode, detect_knee, ptq_sweep
from .reporting import (
    build_manifest,
    render_loss_curve,
    render_qmi_figure,
    render_sweep_figure,
    write_csv,
    write_json,
    write_manifest,
)
from .synth import write_synthetic_dataset
from .training import Loss, TrainConfig, evaluate, train_model
from .util import is_power_of_two

__all__ = ["main", "run"]


class ConfigError(ValueError):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tnjet",
        description="Train, quantize and cost-model tensor-network jet classifiers.",
    )
    parser.add_argument("--version", action="version", version=f"tnjet {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_seed(p):
        p.add_argument("--seed", type=int, default=0, help="random seed (u64)")

    p = sub.add_parser("params", help="print the parameter count of a topology")
    p.add_argument("--arch", choices=("mps", "ttn"), required=True)
    p.add_argument("--n", type=int, required=True, help="constituents per jet")
    p.add_argument("--bond", "--chi", dest="bond", type=int, required=True,
                   help="bond-dimension cap")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--phys-dim", type=int, default=7)
    add_seed(p)

    p = sub.add_parser("train", help="train a classifier on a JTN1 dataset")
    p.add_argument("--arch", choices=("mps", "ttn"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--bond", "--chi", dest="bond", type=int, default=10)
    p.add_argument("--data", required=True, help="training JTN1 file")
    p.add_argument("--test-data", help="held-out JTN1 file (default: split --data)")
    p.add_argument("--holdout", type=float, default=0.2,
                   help="held-out fraction when --test-data is absent")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch", type=int, default=512)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--loss", choices=("ce", "mse"), help="default: ce for mps, mse for ttn")
    p.add_argument("--max-jets", type=int, help="subsample the training split")
    add_seed(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a JTN1 dataset")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.add_argument("--max-jets", type=int)
    add_seed(p)

    p = sub.add_parser("ptq-sweep", help="accuracy over fractional bit widths")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--fb", default="2..14", help="range like 2..14 or list like 4,6,8")
    p.add_argument("--mode", choices=("fpop", "qop", "both"), default="both")
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--max-jets", type=int)
    p.add_argument("--no-calibrate", action="store_true",
                   help="skip power-of-two range calibration")
    p.add_argument("--no-plot", action="store_true")
    add_seed(p)

    p = sub.add_parser("qmi", help="pairwise mutual information between sites")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.add_argument("--layout", choices=("per-particle", "per-feature"),
                   default="per-particle", help="site naming convention")
    p.add_argument("--pt-first", action="store_true",
                   help="per-feature sites were permuted pt-first at training time")
    p.add_argument("--no-plot", action="store_true")
    add_seed(p)

    p = sub.add_parser("estimate", help="latency/memory report for a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--fb", type=int, required=True, help="fractional bits")
    p.add_argument("--nreg", type=int, help="cycles per multiply (default per arch)")
    p.add_argument("--clock-mhz", type=float, default=250.0)
    p.add_argument("--out", required=True, help="report JSON path")
    add_seed(p)

    p = sub.add_parser("convert-check", help="validate a JTN1 file")
    p.add_argument("--data", required=True)
    add_seed(p)

    p = sub.add_parser("synth", help="write a synthetic JTN1 fixture dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--jets", type=int, required=True)
    p.add_argument("--max-constituents", type=int, default=48)
    add_seed(p)
    return parser


def _parse_fb_list(spec: str) -> list[int]:
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(tok) for tok in spec.split(",") if tok]


def _scaler_path(ckpt: str) -> Path:
    return Path(str(ckpt) + ".scaler.json")


def _load_batch(
    path: str, n: int, max_jets: int | None, seed: int, ckpt: str | None = None
) -> JetBatch:
    """Batch a JTN1 file, preferring the scaler fitted at training time
    (stored next to the checkpoint) over refitting on this data."""
    records = load_dataset(path)
    if max_jets is not None and max_jets < len(records):
        idx = np.random.default_rng([seed, 0xDA7A]).permutation(len(records))[:max_jets]
        records = [records[i] for i in idx]
    scaler = None
    if ckpt is not None and _scaler_path(ckpt).exists():
        scaler = ScalerParams.from_dict(json.loads(_scaler_path(ckpt).read_text()))
    if scaler is None:
        scaler = fit_scaler(records)
    return make_batch(records, scaler, n)


def _build_model(arch: str, n: int, bond: int, classes: int, phys_dim: int, seed: int):
    if arch == "ttn":
        if not is_power_of_two(n) or n < 4:
            raise ConfigError(
                f"--arch ttn requires --n to be a power of two >= 4, got {n}"
            )
        return ttn.build_ttn(n, phys_dim, bond, classes, seed=seed)
    return mps.build_mps(n, phys_dim, bond, classes, seed=seed)


def _model_n(model) -> int:
    return model.n_sites if isinstance(model, mps.MpsModel) else model.n_leaves


def _cmd_params(args) -> int:
    model = _build_model(args.arch, args.n, args.bond, args.classes,
                         args.phys_dim, args.seed)
    count = mps.param_count(model) if args.arch == "mps" else ttn.param_count(model)
    print(count)
    return 0


def _cmd_train(args) -> int:
    if not is_power_of_two(args.n):
        raise ConfigError(f"--n must be a power of two, got {args.n}")
    model = _build_model(args.arch, args.n, args.bond, 5, 7, args.seed)
    inputs = [args.data]
    records = load_dataset(args.data)
    if args.test_data:
        test_records = load_dataset(args.test_data)
        inputs.append(args.test_data)
    else:
        if not 0.0 < args.holdout < 1.0:
            raise ConfigError(f"--holdout must be in (0, 1), got {args.holdout}")
        perm = np.random.default_rng([args.seed, 0x5B117]).permutation(len(records))
        n_test = max(1, int(len(records) * args.holdout))
        test_records = [records[i] for i in perm[:n_test]]
        records = [records[i] for i in perm[n_test:]]
    if args.max_jets is not None and args.max_jets < len(records):
        records = records[: args.max_jets]
    if not records:
        raise ConfigError("training split is empty")
    scaler = fit_scaler(records)
    train_batch = make_batch(records, scaler, args.n)
    test_batch = make_batch(test_records, scaler, args.n)
    config = TrainConfig(
        batch_size=args.batch,
        learning_rate=args.lr,
        epochs=args.epochs,
        seed=args.seed,
        loss=Loss(args.loss) if args.loss else None,
    )
    model, metrics = train_model(model, train_batch, test_batch, config)
    checkpoint.save_model(model, args.out)
    write_json(_scaler_path(args.out), scaler.to_dict())
    payload = {
        "arch": args.arch,
        "n": args.n,
        "bond": args.bond,
        "param_count": mps.param_count(model) if args.arch == "mps"
        else ttn.param_count(model),
        "train_jets": len(train_batch),
        "test_jets": len(test_batch),
        **metrics.as_dict(),
    }
    metrics_path = Path(args.out).with_suffix(".metrics.json")
    write_json(metrics_path, payload)
    render_loss_curve(metrics.loss_curve, Path(args.out).with_suffix(".loss.png"))
    manifest = build_manifest("train", _resolved(args), args.seed, inputs)
    write_manifest(args.out, manifest)
    print(json.dumps({"accuracy": metrics.accuracy, "checkpoint": args.out}))
    return 0


def _cmd_eval(args) -> int:
    model = checkpoint.load_model(args.ckpt)
    batch = _load_batch(args.data, _model_n(model), args.max_jets, args.seed,
                        ckpt=args.ckpt)
    metrics = evaluate(model, batch)
    payload = {
        "arch": model.arch,
        "n": _model_n(model),
        "test_jets": len(batch),
        "auc_class_names": list(CLASS_NAMES),
        **metrics.as_dict(),
    }
    write_json(args.out, payload)
    manifest = build_manifest("eval", _resolved(args), args.seed,
                              [args.ckpt, args.data])
    write_manifest(args.out, manifest)
    print(json.dumps({"accuracy": metrics.accuracy}))
    return 0


def _cmd_ptq_sweep(args) -> int:
    model = checkpoint.load_model(args.ckpt)
    fb_list = _parse_fb_list(args.fb)
    if not fb_list:
        raise ConfigError(f"empty fractional-bit list {args.fb!r}")
    modes = {
        "fpop": (QuantMode.FPOP,),
        "qop": (QuantMode.QOP,),
        "both": (QuantMode.FPOP, QuantMode.QOP),
    }[args.mode]
    batch = _load_batch(args.data, _model_n(model), args.max_jets, args.seed,
                        ckpt=args.ckpt)
    rows, calibration = ptq_sweep(
        model, batch, fb_list, modes=modes, calibrate=not args.no_calibrate
    )
    write_csv(
        args.out,
        ("arch", "N", "FB", "mode", "accuracy"),
        [(r.arch, r.n, r.fb, r.mode.value, repr(r.accuracy)) for r in rows],
    )
    if not args.no_plot:
        render_sweep_figure(rows, Path(args.out).with_suffix(".png"))
    manifest = build_manifest("ptq-sweep", _resolved(args), args.seed,
                              [args.ckpt, args.data])
    write_manifest(args.out, manifest)
    summary = {
        "knee": {m.value: detect_knee(rows, m) for m in modes},
        "calibration_shift_bits": calibration.shift_bits if calibration else None,
    }
    print(json.dumps(summary))
    return 0


def _cmd_qmi(args) -> int:
    model = checkpoint.load_model(args.ckpt)
    layout = Layout(args.layout)
    n_sites = _model_n(model)
    if layout is Layout.PER_FEATURE:
        if n_sites % 2:
            raise ConfigError("per-feature site naming needs an even site count")
        n_particles = n_sites // 2
        perm = pt_first_permutation(n_particles) if args.pt_first else None
    else:
        n_particles, perm = n_sites, None
    labels = site_labels(layout, n_particles, perm)
    result = qmi_matrix(model, labels)
    header = ("site",) + tuple(result.site_labels)
    rows = [
        (label,) + tuple(repr(float(v)) for v in result.values[i])
        for i, label in enumerate(result.site_labels)
    ]
    write_csv(args.out, header, rows)
    if not args.no_plot:
        render_qmi_figure(result.values, result.site_labels,
                          Path(args.out).with_suffix(".png"))
    manifest = build_manifest("qmi", _resolved(args), args.seed, [args.ckpt])
    write_manifest(args.out, manifest)
    print(json.dumps({"sites": len(result.site_labels),
                      "max_qmi": float(result.values.max(initial=0.0))}))
    return 0


def _cmd_estimate(args) -> int:
    model = checkpoint.load_model(args.ckpt)
    cost = hardware.default_cost_model(model.arch)
    n_reg = args.nreg if args.nreg is not None else cost.n_reg
    cost = hardware.CostModel(
        n_reg=n_reg, stage_overhead=cost.stage_overhead, clock_mhz=args.clock_mhz
    )
    report = hardware.hardware_report(model, FxpFormat(args.fb), cost)
    write_json(args.out, report)
    manifest = build_manifest("estimate", _resolved(args), args.seed, [args.ckpt])
    write_manifest(args.out, manifest)
    print(json.dumps({"latency_ns": report["latency_ns"],
                      "memory_kilobits": report["memory_kilobits"]}))
    return 0


def _cmd_convert_check(args) -> int:
    records = load_dataset(args.data)
    histogram = {name: 0 for name in CLASS_NAMES}
    for r in records:
        histogram[CLASS_NAMES[r.label]] += 1
    print(
        json.dumps(
            {
                "valid": True,
                "jets": len(records),
                "labels": histogram,
                "max_constituents": max(
                    (len(r.constituents) for r in records), default=0
                ),
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_synth(args) -> int:
    if args.jets < 0:
        raise ConfigError(f"--jets must be nonnegative, got {args.jets}")
    write_synthetic_dataset(args.out, args.jets, args.seed, args.max_constituents)
    manifest = build_manifest("synth", _resolved(args), args.seed, [])
    write_manifest(args.out, manifest)
    print(json.dumps({"jets": args.jets, "path": args.out}))
    return 0


_HANDLERS = {
    "params": _cmd_params,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "ptq-sweep": _cmd_ptq_sweep,
    "qmi": _cmd_qmi,
    "estimate": _cmd_estimate,
    "convert-check": _cmd_convert_check,
    "synth": _cmd_synth,
}


def _resolved(args) -> dict:
    config = {k: v for k, v in vars(args).items() if k != "subcommand"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in config.items()}


def run(argv: list[str] | None = None) -> int:
    """Dispatch one subcommand; nonzero exit with a machine-parsable error
    record on stderr when it fails."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.subcommand](args)
    except Exception as exc:  # noqa: BLE001
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
