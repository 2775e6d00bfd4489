"""Command line front end.

Subcommands:
  gen-data    write a synthetic cohort CSV
  cv          cross-validated training and evaluation on a cohort
  interpret   coefficient importance and region saliency from a checkpoint

Every run writes a manifest.json recording the command, configuration,
input digests, outputs, and wall-clock timing. All other outputs are
deterministic functions of the inputs and the seed.
"""

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

from . import checkpoint as ckpt
from . import interpret as interp
from . import metrics as M
from .cohort import load_cohort, save_cohort, select_task
from .errors import ConfigError, GcnKanError
from .synth import SynthSpec, generate_group_cohort
from .training import TrainConfig, run_cross_validation

DEFAULT_GROUPS = "CN:43:0,MCI:46:0.5,AD:45:1"


def _parse_task(text):
    parts = text.split(":")
    if len(parts) != 2 or not parts[0] or not parts[1]:
        raise ConfigError(
            f"task must look like POSITIVE:NEGATIVE, got {text!r}")
    return parts[0], parts[1]


def _parse_groups(text):
    groups = []
    for chunk in text.split(","):
        parts = chunk.split(":")
        if len(parts) != 3:
            raise ConfigError(
                f"group must look like NAME:COUNT:SCALE, got {chunk!r}")
        name, count, scale = parts
        try:
            groups.append((name, int(count), float(scale)))
        except ValueError as exc:
            raise ConfigError(f"bad group {chunk!r}: {exc}") from None
    return groups


def _parse_roi_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v != "")
    except ValueError as exc:
        raise ConfigError(f"bad roi list {text!r}: {exc}") from None


def _parse_block(text):
    """A correlated block spec: '0-9:0.9' or '3,5,7:0.8'."""
    head, sep, tail = text.rpartition(":")
    if not sep:
        raise ConfigError(f"block must look like ROIS:RHO, got {text!r}")
    try:
        rho = float(tail)
    except ValueError:
        raise ConfigError(f"bad block correlation in {text!r}") from None
    rois = []
    for chunk in head.split(","):
        if "-" in chunk:
            lo, _, hi = chunk.partition("-")
            try:
                lo_i, hi_i = int(lo), int(hi)
            except ValueError:
                raise ConfigError(f"bad roi range {chunk!r}") from None
            if hi_i < lo_i:
                raise ConfigError(f"empty roi range {chunk!r}")
            rois.extend(range(lo_i, hi_i + 1))
        elif chunk:
            try:
                rois.append(int(chunk))
            except ValueError:
                raise ConfigError(f"bad roi index {chunk!r}") from None
    if not rois:
        raise ConfigError(f"block {text!r} names no regions")
    return tuple(rois), rho


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(out_dir, argv, config_dict, seed, inputs, outputs, seconds):
    manifest = {
        "command": list(argv),
        "config": config_dict,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": sorted(str(Path(p).relative_to(out_dir)) for p in outputs),
        "wall_seconds": seconds,
    }
    path = Path(out_dir) / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return path


def _load_binary_table(cohort_path, task):
    cohort = load_cohort(cohort_path)
    positive, negative = _parse_task(task)
    return select_task(cohort, positive, negative)


def _cmd_gen_data(args, argv):
    t0 = time.perf_counter()
    spec = SynthSpec(
        n_roi=args.n_roi,
        signal_rois=_parse_roi_list(args.signal_rois),
        signal_strength=args.signal_strength,
        nonlinearity=args.nonlinearity,
        noise_sd=args.noise_sd,
        correlation_blocks=tuple(_parse_block(b) for b in args.corr_block),
        seed=args.seed)
    groups = _parse_groups(args.groups)
    cohort = generate_group_cohort(spec, groups)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cohort_path = out_dir / "cohort.csv"
    save_cohort(cohort, cohort_path)
    config_dict = {
        "n_roi": spec.n_roi,
        "signal_rois": list(spec.signal_rois),
        "signal_strength": spec.signal_strength,
        "nonlinearity": spec.nonlinearity,
        "noise_sd": spec.noise_sd,
        "correlation_blocks": [[list(r), rho]
                               for r, rho in spec.correlation_blocks],
        "groups": [list(g) for g in groups],
    }
    _write_manifest(out_dir, argv, config_dict, args.seed, [], [cohort_path],
                    time.perf_counter() - t0)
    counts = ", ".join(f"{name}={count}" for name, count, _ in groups)
    print(f"wrote {cohort_path} ({counts}, {spec.n_roi} regions)")
    return 0


def _cmd_cv(args, argv):
    t0 = time.perf_counter()
    config = TrainConfig(
        batch_size=args.batch_size, lr=args.lr,
        weight_decay=args.weight_decay, dropout=args.dropout,
        grid_size=args.grid_size, tau=args.tau, epochs_max=args.epochs_max,
        seed=args.seed, folds=args.folds, model=args.model).validate()
    table = _load_binary_table(args.cohort, args.task)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = run_cross_validation(table, config)
    outputs = []
    for fold in result.folds:
        fold_dir = out_dir / f"fold_{fold.fold_index}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = fold_dir / "checkpoint.json"
        ckpt.save_checkpoint(ckpt_path, fold.params, config,
                             fold.graph, seed=args.seed, task=args.task)
        curve_path = fold_dir / "loss_curve.csv"
        with open(curve_path, "w") as fh:
            fh.write("epoch,train_loss,val_loss,val_accuracy,lr\n")
            for row in fold.history:
                fh.write(f"{row['epoch']},{row['train_loss']!r},"
                         f"{row['val_loss']!r},{row['val_accuracy']!r},"
                         f"{row['lr']!r}\n")
        outputs.extend([ckpt_path, curve_path])
        print(f"fold {fold.fold_index}: epochs={fold.epochs_run} "
              f"best_epoch={fold.best_epoch} "
              f"val_loss={fold.best_val_loss:.4f} "
              f"acc={fold.report.accuracy:.3f}")

    report_path = M.save_report(out_dir, result, model_name=config.model)
    outputs.extend([report_path, out_dir / "report.txt",
                    out_dir / "per_subject.csv"])
    _write_manifest(out_dir, argv, config.to_dict(), args.seed,
                    [args.cohort], outputs, time.perf_counter() - t0)
    sys.stdout.write(M.format_table({config.model: result.aggregate}))
    return 0


def _cmd_interpret(args, argv):
    t0 = time.perf_counter()
    params, _config, graph, meta = ckpt.load_checkpoint(args.checkpoint)
    task = args.task or meta.get("task") or "1:0"
    table = _load_binary_table(args.cohort, task)
    ckpt.check_cohort_compat(graph, table)
    report = interp.importance_report(params, graph, table)
    out_dir = Path(args.out_dir)
    saliency_path = interp.save_importance(out_dir, report)
    outputs = [saliency_path, out_dir / "unit_importance.csv"]
    _write_manifest(out_dir, argv, {"task": task}, meta.get("seed"),
                    [args.checkpoint, args.cohort], outputs,
                    time.perf_counter() - t0)
    top = report.roi_ranking[:5]
    names = ", ".join(report.roi_names[i] for i in top)
    print(f"wrote {saliency_path} (top regions: {names})")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gcnkan",
        description="Graph classification of region-level cohort data with "
                    "spectral graph convolutions and learned grid activations.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic cohort CSV")
    gen.add_argument("--n-roi", type=int, default=90)
    gen.add_argument("--groups", default=DEFAULT_GROUPS,
                     help="comma list of NAME:COUNT:SCALE "
                          f"(default {DEFAULT_GROUPS})")
    gen.add_argument("--signal-rois", default="7,12,30",
                     help="comma list of region indices carrying signal")
    gen.add_argument("--signal-strength", type=float, default=1.0)
    gen.add_argument("--nonlinearity", default="none",
                     choices=["none", "quadratic", "sine"])
    gen.add_argument("--noise-sd", type=float, default=1.0)
    gen.add_argument("--corr-block", action="append", default=[],
                     metavar="ROIS:RHO",
                     help="correlated block, e.g. 0-9:0.9 (repeatable)")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out-dir", required=True)
    gen.set_defaults(func=_cmd_gen_data)

    cv = sub.add_parser("cv", help="stratified cross-validation on a cohort")
    cv.add_argument("--cohort", required=True)
    cv.add_argument("--model", default="gcn-kan", choices=["gcn-kan", "gcn"])
    cv.add_argument("--task", default="AD:CN",
                    help="POSITIVE:NEGATIVE group labels (default AD:CN)")
    cv.add_argument("--tau", type=float, default=0.1)
    cv.add_argument("--grid-size", type=int, default=10)
    cv.add_argument("--lr", type=float, default=0.0005)
    cv.add_argument("--weight-decay", type=float, default=1e-4)
    cv.add_argument("--dropout", type=float, default=0.2)
    cv.add_argument("--batch-size", type=int, default=32)
    cv.add_argument("--folds", type=int, default=5)
    cv.add_argument("--epochs-max", type=int, default=1000)
    cv.add_argument("--seed", type=int, default=0)
    cv.add_argument("--out-dir", required=True)
    cv.set_defaults(func=_cmd_cv)

    inter = sub.add_parser("interpret",
                           help="importance and saliency from a checkpoint")
    inter.add_argument("--checkpoint", required=True)
    inter.add_argument("--cohort", required=True)
    inter.add_argument("--task", default=None,
                       help="POSITIVE:NEGATIVE; defaults to the task stored "
                            "in the checkpoint")
    inter.add_argument("--out-dir", required=True)
    inter.set_defaults(func=_cmd_interpret)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, argv)
    except GcnKanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
