"""Command-line entry point: gen | adapt | eval | sweep.

Every command writes a JSON manifest next to its outputs recording the fully
resolved configuration, the seed, input/output paths, sha256 hashes of the
outputs, and wall-clock duration.  All commands are deterministic given their
flags.

Exit codes:
    0  success
    2  usage / bad configuration
    3  I/O failure
    4  malformed input file
    5  numeric or data-contract error (degenerate vectors, k too large,
       center sampling failure, single-class metric input, shape mismatch)
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import adapt as adapt_mod
from . import metrics as metrics_mod
from .errors import (CenterSamplingFailed, ConfigError, DegenerateVector,
                     FormatError, IoError, KTooLarge, ShapeMismatch,
                     SingleClass)
from .features import (FeatureMatrix, SyntheticSpec, gen_synthetic,
                       load_features, save_features)
from .scoring import occ_score

EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4
EXIT_NUMERIC = 5

_NUMERIC_ERRORS = (DegenerateVector, ShapeMismatch, KTooLarge,
                   CenterSamplingFailed, SingleClass)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_path, command, config, seed, inputs, outputs,
                    started) -> None:
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": {str(p): _sha256(p) for p in outputs},
        "duration_s": round(time.monotonic() - started, 3),
    }
    path = str(out_path) + ".manifest.json"
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(tmp, path)


def _read_config_file(path) -> dict:
    """key = value lines; '#' starts a comment."""
    values = {}
    try:
        with open(path) as f:
            for ln_no, ln in enumerate(f, start=1):
                ln = ln.split("#", 1)[0].strip()
                if not ln:
                    continue
                if "=" not in ln:
                    raise ConfigError(f"{path}:{ln_no}: expected key=value")
                key, val = ln.split("=", 1)
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as e:
        raise IoError(str(e)) from e
    return values


def _apply_config_file(args, parser):
    """Config-file values fill in only flags left at their defaults."""
    if not getattr(args, "config", None):
        return
    values = _read_config_file(args.config)
    defaults = {a.dest: a.default for a in parser._actions}
    for key, raw in values.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        if getattr(args, key) != defaults[key]:
            continue  # explicit flag wins
        current = defaults[key]
        try:
            if isinstance(current, bool):
                value = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw
        except ValueError as e:
            raise ConfigError(f"config key {key}: {e}") from e
        setattr(args, key, value)


def derive_seed(base_seed: int, cell_id: str) -> int:
    digest = hashlib.sha256(f"{base_seed}:{cell_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little") % (1 << 63)


# --- gen -------------------------------------------------------------------

def _add_gen_args(p):
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--outlier-classes", type=int, default=1)
    p.add_argument("--per-class", type=int, default=64)
    p.add_argument("--per-outlier-class", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--gap", type=float, default=0.5,
                   help="max allowed pairwise cosine between class centers")
    _add_geometry_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", default="train.occf")
    p.add_argument("--out-test", default="test.occf")


def _add_geometry_flags(p):
    p.add_argument("--radial-spread", type=float, default=0.0,
                   help="log-std of the per-sample radius multiplier")
    p.add_argument("--outlier-mode",
                   choices=["separated", "between", "edge"],
                   default="separated")
    p.add_argument("--outlier-noise-factor", type=float, default=1.0)


def cmd_gen(args, parser):
    started = time.monotonic()
    try:
        spec = SyntheticSpec(d=args.dim, m=args.classes,
                             n_per_class=args.per_class,
                             noise_sigma=args.noise,
                             o=args.outlier_classes,
                             n_per_outlier_class=args.per_outlier_class,
                             min_center_cosine_gap=args.gap,
                             radial_spread=args.radial_spread,
                             outlier_mode=args.outlier_mode,
                             outlier_noise_factor=args.outlier_noise_factor,
                             seed=args.seed)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    train, test = gen_synthetic(spec)
    save_features(train, args.out_train)
    save_features(test, args.out_test)
    _write_manifest(args.out_train, "gen", dataclasses.asdict(spec),
                    args.seed, [], [args.out_train, args.out_test], started)
    return 0


# --- adapt -----------------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--objective", choices=["ca2", "center"], default="ca2")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--k-star", type=int, default=2)
    p.add_argument("--beta", type=float, default=0.3)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--max-epochs", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--arch", choices=[adapt_mod.ARCH_LINEAR,
                                      adapt_mod.ARCH_RESIDUAL],
                   default=adapt_mod.ARCH_LINEAR)
    p.add_argument("--hidden", type=int, default=None)


def _add_adapt_args(p):
    p.add_argument("train_file")
    p.add_argument("--config", default=None, help="key=value config file")
    _add_train_flags(p)
    p.add_argument("--out", default="adapter.occa")
    p.add_argument("--log", default=None, help="per-epoch CSV log path")


def _train_config_from_args(args) -> adapt_mod.TrainConfig:
    return adapt_mod.TrainConfig(
        objective=args.objective, k=args.k, k_star=args.k_star,
        beta=args.beta, lr=args.lr, momentum=args.momentum,
        weight_decay=args.weight_decay, batch_size=args.batch_size,
        patience=args.patience, max_epochs=args.max_epochs, seed=args.seed,
        arch=args.arch, hidden=args.hidden)


def _write_train_log(path, log: adapt_mod.TrainLog) -> None:
    with open(path, "w") as f:
        has_trace = bool(log.trace)
        f.write("epoch,loss,active_fraction" +
                (",trace" if has_trace else "") + "\n")
        for i, (loss, frac) in enumerate(zip(log.losses, log.active_fraction)):
            line = f"{i},{loss!r},{frac!r}"
            if has_trace:
                line += f",{log.trace[i]!r}"
            f.write(line + "\n")
        f.write(f"# best_epoch={log.best_epoch} stop_reason={log.stop_reason}\n")


def cmd_adapt(args, parser):
    started = time.monotonic()
    _apply_config_file(args, parser)
    features = load_features(args.train_file)
    cfg = _train_config_from_args(args)
    params, log = adapt_mod.train(features, cfg)
    adapt_mod.save_adapter(params, args.out)
    outputs = [args.out]
    if args.log:
        _write_train_log(args.log, log)
        outputs.append(args.log)
    _write_manifest(args.out, "adapt", dataclasses.asdict(cfg), cfg.seed,
                    [args.train_file], outputs, started)
    return 0


# --- eval ------------------------------------------------------------------

def _add_eval_args(p):
    p.add_argument("train_file")
    p.add_argument("test_file")
    p.add_argument("--adapter", default=None)
    p.add_argument("--k-star", type=int, default=2)
    p.add_argument("--normalize", action="store_true",
                   help="L2-normalize features before scoring")
    p.add_argument("--out", default="report.csv")
    p.add_argument("--scores", default=None, help="per-sample score CSV path")


def _apply_adapter(params, fm: FeatureMatrix) -> FeatureMatrix:
    if params is None:
        return fm
    return FeatureMatrix(data=adapt_mod.adapter_forward(params, fm.data),
                         labels=fm.labels, ids=fm.ids)


def run_eval(train_fm, test_fm, params, k_star, normalize):
    """Score the test set against the (optionally adapted) train set."""
    train_a = _apply_adapter(params, train_fm)
    test_a = _apply_adapter(params, test_fm)
    result = occ_score(train_a, test_a, k_star, normalize=normalize)
    if test_fm.labels is None:
        raise SingleClass("test file has no labels; cannot evaluate")
    report = metrics_mod.evaluate_scores(result.scores, test_fm.labels)
    return result, report


def cmd_eval(args, parser):
    started = time.monotonic()
    train_fm = load_features(args.train_file)
    test_fm = load_features(args.test_file)
    params = adapt_mod.load_adapter(args.adapter) if args.adapter else None
    result, report = run_eval(train_fm, test_fm, params, args.k_star,
                              args.normalize)
    with open(args.out, "w") as f:
        f.write(metrics_mod.EvalReport.CSV_HEADER + "\n")
        f.write(report.csv_line() + "\n")
    outputs = [args.out]
    if args.scores:
        with open(args.scores, "w") as f:
            f.write("id,score\n")
            for i, s in enumerate(result.scores):
                f.write(f"{i},{s!r}\n")
        outputs.append(args.scores)
    inputs = [args.train_file, args.test_file]
    if args.adapter:
        inputs.append(args.adapter)
    _write_manifest(args.out, "eval",
                    {"k_star": args.k_star, "normalize": args.normalize},
                    None, inputs, outputs, started)
    print(report.pretty())
    return 0


# --- sweep -----------------------------------------------------------------

def _add_sweep_args(p):
    p.add_argument("--class-counts", default="1,2,4,8,16",
                   help="comma-separated inlier class counts")
    p.add_argument("--objectives", default="none,center,ca2")
    p.add_argument("--out-dir", default="sweep")
    p.add_argument("--trace", action="store_true",
                   help="record per-epoch AUROC traces (runs full max_epochs)")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--outlier-classes", type=int, default=1)
    p.add_argument("--per-class", type=int, default=64)
    p.add_argument("--per-outlier-class", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--gap", type=float, default=0.5)
    _add_geometry_flags(p)
    _add_train_flags(p)


SWEEP_HEADER = ("class_count,objective,auroc_before,auroc_after,"
                "fpr_before,fpr_after,status")


def cmd_sweep(args, parser):
    started = time.monotonic()
    _apply_config_file(args, parser)
    class_counts = [int(c) for c in args.class_counts.split(",") if c.strip()]
    objectives = [o.strip() for o in args.objectives.split(",") if o.strip()]
    for o in objectives:
        if o not in ("none", "center", "ca2"):
            raise ConfigError(f"unknown objective {o!r}")
    os.makedirs(args.out_dir, exist_ok=True)
    out_csv = os.path.join(args.out_dir, "sweep.csv")
    rows = []
    outputs = [out_csv]
    for m in class_counts:
        cell_seed = derive_seed(args.seed, f"gen:m={m}")
        try:
            spec = SyntheticSpec(d=args.dim, m=m, n_per_class=args.per_class,
                                 noise_sigma=args.noise,
                                 o=args.outlier_classes,
                                 n_per_outlier_class=args.per_outlier_class,
                                 min_center_cosine_gap=args.gap,
                                 radial_spread=args.radial_spread,
                                 outlier_mode=args.outlier_mode,
                                 outlier_noise_factor=args.outlier_noise_factor,
                                 seed=cell_seed)
            train_fm, test_fm = gen_synthetic(spec)
            base = run_eval(train_fm, test_fm, None, args.k_star, False)[1]
        except Exception as e:  # record and move to the next class count
            for obj in objectives:
                rows.append(f"{m},{obj},,,,,error:{type(e).__name__}")
            continue
        for obj in objectives:
            try:
                if obj == "none":
                    rows.append(f"{m},{obj},{base.auroc!r},{base.auroc!r},"
                                f"{base.tpr95fpr!r},{base.tpr95fpr!r},ok")
                    continue
                cfg = _train_config_from_args(args)
                cfg.objective = obj
                cfg.seed = derive_seed(args.seed, f"train:m={m}:obj={obj}")
                hook = None
                if args.trace:
                    cfg.patience = cfg.max_epochs  # run the full budget
                    def hook(epoch, params, _tr=train_fm, _te=test_fm):
                        return run_eval(_tr, _te, params, args.k_star,
                                        False)[1].auroc
                params, log = adapt_mod.train(train_fm, cfg, epoch_hook=hook)
                after = run_eval(train_fm, test_fm, params, args.k_star,
                                 False)[1]
                rows.append(f"{m},{obj},{base.auroc!r},{after.auroc!r},"
                            f"{base.tpr95fpr!r},{after.tpr95fpr!r},ok")
                if args.trace:
                    trace_path = os.path.join(args.out_dir,
                                              f"trace_m{m}_{obj}.csv")
                    with open(trace_path, "w") as f:
                        f.write("epoch,auroc\n")
                        for e, a in enumerate(log.trace):
                            f.write(f"{e},{a!r}\n")
                    outputs.append(trace_path)
            except Exception as e:
                rows.append(f"{m},{obj},,,,,error:{type(e).__name__}")
    with open(out_csv, "w") as f:
        f.write(SWEEP_HEADER + "\n")
        for row in rows:
            f.write(row + "\n")
    _write_manifest(out_csv, "sweep",
                    {"class_counts": class_counts, "objectives": objectives,
                     "dim": args.dim, "noise": args.noise, "gap": args.gap,
                     "radial_spread": args.radial_spread,
                     "outlier_mode": args.outlier_mode,
                     "outlier_noise_factor": args.outlier_noise_factor,
                     "trace": args.trace},
                    args.seed, [], outputs, started)
    return 0


# --- driver ----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="occadapt",
        description="One-class feature adaptation experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    subparsers = {}
    for name, add_args, help_text in [
            ("gen", _add_gen_args, "generate synthetic features"),
            ("adapt", _add_adapt_args, "train an adapter"),
            ("eval", _add_eval_args, "score and report metrics"),
            ("sweep", _add_sweep_args, "class-count grid run")]:
        sp = sub.add_parser(name, help=help_text)
        add_args(sp)
        subparsers[name] = sp
    return parser, subparsers


_HANDLERS = {"gen": cmd_gen, "adapt": cmd_adapt,
             "eval": cmd_eval, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args, subparsers[args.command])
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except IoError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except FormatError as e:
        print(f"format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except _NUMERIC_ERRORS as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
