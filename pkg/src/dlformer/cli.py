"""Command-line entry point: train, eval, explain, predict, synth, inspect.

Runs are described by a flat ``key = value`` configuration file (see
``CONFIG_SCHEMA``); command-line flags override file values.  Unknown keys
are rejected.  Every command is deterministic under a fixed seed with
``--threads 1``, and all file outputs carry a provenance header with the
config hash, the seed and the artifact version.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

VERSION = "0.1.0"

# name -> (parser, default); parsing happens before numpy is imported
_bool_words = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


def _parse_bool(text: str) -> bool:
    try:
        return _bool_words[text.strip().lower()]
    except KeyError:
        raise ValueError(f"expected a boolean, got {text!r}")


def _parse_floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(part) for part in text.split(","))


CONFIG_SCHEMA: dict[str, tuple] = {
    "data": (str, None),
    "target": (str, None),
    "outdir": (str, "dlformer_out"),
    "seed": (int, 0),
    "lag": (int, 12),
    "horizon": (int, 1),
    "reference": (int, None),           # default: min(horizon, lag)
    "embed_dim": (int, 128),
    "attn_dim": (int, 16),
    "heads": (int, 8),
    "encoder_blocks": (int, 6),
    "decoder_blocks": (int, 6),
    "ff_dim": (int, None),              # default: 4 * embed_dim
    "head_dim": (int, None),            # default: embed_dim // 2
    "period": (float, 10000.0),
    "embed_activation": (str, "both"),
    "causal_mask": (_parse_bool, False),
    "layer_norm": (_parse_bool, False),
    "learning_rate": (float, 1e-4),
    "batch_size": (int, 64),
    "max_epochs": (int, 200),
    "patience": (int, 50),
    "train_ratio": (float, 0.6),
    "valid_ratio": (float, 0.2),
    "test_ratio": (float, 0.2),
    "normalize": (_parse_bool, True),
    "sentinels": (_parse_floats, (-200.0,)),
    "threads": (int, 1),
}

# outputs do not depend on these, so they stay out of the config hash
_NON_EXPERIMENT_KEYS = {"outdir", "threads"}


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key)

    def hash(self) -> str:
        payload = {k: v for k, v in sorted(self.values.items()) if k not in _NON_EXPERIMENT_KEYS}
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode())
        return digest.hexdigest()[:12]


def parse_config_file(path) -> dict:
    from .errors import ConfigError

    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown configuration key {key!r}")
        caster, _ = CONFIG_SCHEMA[key]
        try:
            values[key] = caster(value.strip())
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}")
    return values


def resolve_run_config(args) -> RunConfig:
    """Defaults, then config file, then command-line overrides."""
    from .errors import ConfigError

    values = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for key in CONFIG_SCHEMA:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if values["data"] is None:
        raise ConfigError("no data file given (config key 'data' or --data)")
    if values["target"] is None:
        raise ConfigError("no target feature given (config key 'target' or --target)")
    return RunConfig(values)


def _configure_threads(threads: int) -> None:
    # only effective before numpy loads its BLAS; the CLI imports lazily
    if "numpy" not in sys.modules:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(threads)


def _provenance(config_hash: str, seed) -> dict:
    return {"artifact_version": VERSION, "config_hash": config_hash, "seed": seed}


def _model_config(run: RunConfig, num_features: int):
    from .model import ModelConfig

    return ModelConfig(
        num_features=num_features,
        lag=run.lag,
        horizon=run.horizon,
        reference=run.reference if run.reference is not None else min(run.horizon, run.lag),
        embed_dim=run.embed_dim,
        attn_dim=run.attn_dim,
        num_heads=run.heads,
        num_encoder_blocks=run.encoder_blocks,
        num_decoder_blocks=run.decoder_blocks,
        ff_dim=run.ff_dim,
        head_dim=run.head_dim,
        period=run.period,
        embed_activation=run.embed_activation,
        causal_mask=run.causal_mask,
        layer_norm=run.layer_norm,
    )


def _check_compatible(checkpoint, table) -> None:
    from .errors import ConfigError

    if table.num_features != checkpoint.config.num_features:
        raise ConfigError(
            f"config mismatch: checkpoint expects {checkpoint.config.num_features} "
            f"features, data has {table.num_features}"
        )
    if checkpoint.normalizer is not None and checkpoint.normalizer.feature_names:
        if list(table.feature_names) != list(checkpoint.normalizer.feature_names):
            raise ConfigError(
                f"config mismatch: checkpoint trained on columns "
                f"{checkpoint.normalizer.feature_names}, data has {table.feature_names}"
            )
    trained_target = checkpoint.meta.get("provenance", {}).get("target")
    if trained_target and trained_target != table.target_name:
        raise ConfigError(
            f"config mismatch: checkpoint trained on target {trained_target!r}, "
            f"asked to use {table.target_name!r}"
        )


def _split_windows(table, config, normalizer, split: str, ratios):
    from .data import chronological_split, make_windows
    from .errors import ConfigError, DataError

    parts = dict(zip(("train", "valid", "test"), chronological_split(table, ratios)))
    if split not in parts:
        raise ConfigError(f"split must be train|valid|test, got {split!r}")
    part = parts[split]
    needed = config.lag + config.horizon
    if len(part) < needed:
        raise DataError(
            f"degenerate split: {split} has {len(part)} rows, needs at least {needed}"
        )
    if normalizer is not None:
        part = normalizer.apply(part)
    return make_windows(part, config.lag, config.horizon, config.reference)


# ---------------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    run = resolve_run_config(args)
    _configure_threads(run.threads)
    from .data import load_csv, split_and_window
    from .training import TrainConfig, train

    table = load_csv(run.data, run.target, sentinels=run.sentinels)
    ratios = (run.train_ratio, run.valid_ratio, run.test_ratio)
    reference = run.reference
    data = split_and_window(
        table, run.lag, run.horizon, reference, ratios=ratios, normalize=run.normalize
    )
    model_config = _model_config(run, table.num_features)
    train_config = TrainConfig(
        learning_rate=run.learning_rate, batch_size=run.batch_size,
        max_epochs=run.max_epochs, patience=run.patience, seed=run.seed,
    )
    outdir = Path(run.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    provenance = _provenance(run.hash(), run.seed)
    provenance["target"] = run.target
    provenance["ratios"] = list(ratios)
    checkpoint = train(
        data.train, data.valid, model_config, train_config,
        normalizer=data.normalizer,
        log_path=outdir / "metrics.csv",
        provenance=provenance,
    )
    checkpoint.save(outdir / "checkpoint.npz")
    summary = {
        "provenance": provenance,
        "model_config": model_config.to_dict(),
        "train_config": train_config.to_dict(),
        "best_valid_mse": checkpoint.meta["best_valid_mse"],
        "best_epoch": checkpoint.meta["best_epoch"],
        "epochs_run": checkpoint.meta["epochs_run"],
        "diverged": checkpoint.meta["diverged"],
    }
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"checkpoint written to {outdir / 'checkpoint.npz'}")
    print(f"best validation mse: {checkpoint.meta['best_valid_mse']}")
    return 1 if checkpoint.meta["diverged"] else 0


def cmd_eval(args) -> int:
    _configure_threads(args.threads)
    from .checkpoint import Checkpoint
    from .data import load_csv
    from .metrics import evaluate, lag_sweep
    from .training import TrainConfig

    checkpoint = Checkpoint.load(args.checkpoint)
    meta_prov = checkpoint.meta.get("provenance", {})
    target = args.target or meta_prov.get("target")
    if not target:
        from .errors import ConfigError

        raise ConfigError("target feature unknown: pass --target")
    table = load_csv(args.data, target)
    _check_compatible(checkpoint, table)
    ratios = tuple(meta_prov.get("ratios", (0.6, 0.2, 0.2)))
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    provenance = _provenance(_hash_dict(checkpoint.config.to_dict()), checkpoint.meta.get("seed"))

    if args.sweep:
        train_config = TrainConfig(
            learning_rate=args.learning_rate, batch_size=args.batch_size,
            max_epochs=args.max_epochs, patience=min(args.patience, args.max_epochs),
        )
        overrides = {
            "embed_dim": checkpoint.config.embed_dim,
            "attn_dim": checkpoint.config.attn_dim,
            "num_heads": checkpoint.config.num_heads,
            "num_encoder_blocks": checkpoint.config.num_encoder_blocks,
            "num_decoder_blocks": checkpoint.config.num_decoder_blocks,
        }
        report = lag_sweep(
            table, lags=args.lags, horizons=args.horizons,
            model_overrides=overrides, train_config=train_config,
            ratios=ratios, base_seed=checkpoint.meta.get("seed", 0) or 0,
            split=args.split, console=False,
        )
        _write_with_header(outdir / "sweep.csv", report.grid_csv(), provenance)
        document = {"provenance": provenance, "cells": [c.as_dict() for c in report.cells]}
        (outdir / "sweep.json").write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
        print(report.grid_csv(), end="")
        return 0

    model = checkpoint.build_model()
    windows = _split_windows(table, checkpoint.config, checkpoint.normalizer, args.split, ratios)
    cell = evaluate(model, windows, checkpoint.normalizer, table.target_index)
    from .metrics import MetricReport

    report = MetricReport(cells=[cell])
    _write_with_header(outdir / "report.csv", report.grid_csv(), provenance)
    document = {"provenance": provenance, "cells": [cell.as_dict()]}
    (outdir / "report.json").write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    print(f"rmse: {cell.rmse:.6g}")
    print(f"r2: {cell.r2:.6g}")
    print(f"dtw: {cell.dtw:.6g}")
    return 0


def cmd_explain(args) -> int:
    _configure_threads(args.threads)
    from .checkpoint import Checkpoint
    from .data import load_csv
    from .explain import (
        aggregate_by_feature,
        export_explanation,
        extract_explanation,
        lag_profiles,
        per_horizon_explanations,
    )

    checkpoint = Checkpoint.load(args.checkpoint)
    meta_prov = checkpoint.meta.get("provenance", {})
    target = args.target or meta_prov.get("target")
    if not target:
        from .errors import ConfigError

        raise ConfigError("target feature unknown: pass --target")
    table = load_csv(args.data, target)
    _check_compatible(checkpoint, table)
    ratios = tuple(meta_prov.get("ratios", (0.6, 0.2, 0.2)))
    model = checkpoint.build_model()
    windows = _split_windows(table, checkpoint.config, checkpoint.normalizer, args.split, ratios)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    provenance = _provenance(_hash_dict(checkpoint.config.to_dict()), checkpoint.meta.get("seed"))

    explanation = extract_explanation(model, windows, table.feature_names)
    suffix = "csv" if args.format == "csv" else "json"
    export_explanation(
        explanation, outdir / f"explanation.{suffix}", fmt=args.format,
        top=args.top, provenance=provenance,
    )
    importance = aggregate_by_feature(explanation)
    lines = [f"# {k}: {v}" for k, v in provenance.items()]
    lines.append("feature,weight")
    lines += [f"{name},{value!r}" for name, value in importance.items()]
    (outdir / "feature_importance.csv").write_text("\n".join(lines) + "\n")
    profile_lines = [f"# {k}: {v}" for k, v in provenance.items()]
    profile_lines.append("feature,lag,weight")
    for profile in lag_profiles(explanation):
        for lag_idx, weight in enumerate(profile.weights, start=1):
            profile_lines.append(f"{profile.feature_name},{lag_idx},{weight!r}")
    (outdir / "lag_profiles.csv").write_text("\n".join(profile_lines) + "\n")
    if args.per_horizon:
        for step, step_map in enumerate(per_horizon_explanations(model, windows, table.feature_names), start=1):
            export_explanation(
                step_map, outdir / f"explanation_step{step}.{suffix}",
                fmt=args.format, top=args.top, provenance=provenance,
            )
    print(f"explanation written to {outdir / f'explanation.{suffix}'}")
    print(f"feature importance: {dict(importance.items())}")
    return 0


def cmd_predict(args) -> int:
    _configure_threads(args.threads)
    from .checkpoint import Checkpoint
    from .data import load_csv, stack_windows

    checkpoint = Checkpoint.load(args.checkpoint)
    meta_prov = checkpoint.meta.get("provenance", {})
    target = args.target or meta_prov.get("target")
    if not target:
        from .errors import ConfigError

        raise ConfigError("target feature unknown: pass --target")
    table = load_csv(args.data, target)
    _check_compatible(checkpoint, table)
    ratios = tuple(meta_prov.get("ratios", (0.6, 0.2, 0.2)))
    model = checkpoint.build_model()
    windows = _split_windows(table, checkpoint.config, checkpoint.normalizer, args.split, ratios)
    preds = model.predict(windows)
    _, _, truth = stack_windows(windows)
    if checkpoint.normalizer is not None:
        idx = table.target_index
        preds = checkpoint.normalizer.invert_values(preds, idx)
        truth = checkpoint.normalizer.invert_values(truth, idx)
    provenance = _provenance(_hash_dict(checkpoint.config.to_dict()), checkpoint.meta.get("seed"))
    lines = [f"# {k}: {v}" for k, v in provenance.items()]
    lines.append("window,step,y_true,y_pred")
    for w in range(preds.shape[0]):
        for step in range(preds.shape[1]):
            lines.append(f"{w},{step + 1},{truth[w, step]!r},{preds[w, step]!r}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(lines) + "\n")
    print(f"{preds.shape[0]} forecasts written to {out}")
    return 0


def cmd_synth(args) -> int:
    _configure_threads(args.threads)
    from .errors import ConfigError
    from .synth import GENERATORS, write_csv

    if args.kind not in GENERATORS:
        raise ConfigError(f"unknown generator {args.kind!r}; choose from {sorted(GENERATORS)}")
    if args.kind == "lagged-copy":
        result = GENERATORS[args.kind](
            rows=args.rows, num_features=args.features, driver=args.driver,
            delay=args.delay, noise=args.noise, seed=args.seed,
        )
    elif args.kind == "sinusoid":
        result = GENERATORS[args.kind](
            rows=args.rows, num_features=args.features, noise=args.noise, seed=args.seed
        )
    else:
        result = GENERATORS[args.kind](rows=args.rows, num_features=args.features, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(result, out, provenance={"config_hash": _hash_dict(result.meta)})
    print(f"{args.rows} rows written to {out} (sidecar {out}.meta.json)")
    return 0


def cmd_inspect(args) -> int:
    _configure_threads(args.threads)
    from .checkpoint import FORMAT_VERSION, Checkpoint

    checkpoint = Checkpoint.load(args.checkpoint)
    total = sum(v.size for v in checkpoint.params.values())
    print(f"checkpoint: {args.checkpoint}")
    print(f"format_version: {FORMAT_VERSION}")
    print(f"model_config: {json.dumps(checkpoint.config.to_dict(), sort_keys=True)}")
    print(f"meta: {json.dumps(checkpoint.meta, sort_keys=True)}")
    if checkpoint.normalizer is not None:
        print(f"normalizer_features: {checkpoint.normalizer.feature_names}")
    print(f"parameters: {len(checkpoint.params)} tensors, {total} values")
    for name in sorted(checkpoint.params):
        print(f"  {name}: {checkpoint.params[name].shape}")
    return 0


def _hash_dict(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:12]


def _write_with_header(path, body: str, provenance: dict) -> None:
    header = "".join(f"# {k}: {v}\n" for k, v in provenance.items())
    Path(path).write_text(header + body)


# ---------------------------------------------------------------------------
# parser

def _int_list(text: str):
    return tuple(int(part) for part in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dlformer",
        description="Train, evaluate and explain distributed-lag attention forecasts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and write a checkpoint")
    p_train.add_argument("--config", help="flat key = value run configuration file")
    for key, (caster, _) in CONFIG_SCHEMA.items():
        flag = "--" + key.replace("_", "-")
        if caster is _parse_bool:
            p_train.add_argument(flag, type=_parse_bool, default=None, metavar="BOOL")
        elif caster is _parse_floats:
            p_train.add_argument(flag, type=_parse_floats, default=None, metavar="LIST")
        else:
            p_train.add_argument(flag, type=caster, default=None)
    p_train.set_defaults(func=cmd_train)

    def add_common(p):
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--target", default=None)
        p.add_argument("--split", default="test", choices=("train", "valid", "test"))
        p.add_argument("--outdir", default="dlformer_out")
        p.add_argument("--threads", type=int, default=1)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint (rmse, r2, dtw)")
    add_common(p_eval)
    p_eval.add_argument("--sweep", action="store_true",
                        help="train and evaluate a grid over lags x horizons")
    p_eval.add_argument("--lags", type=_int_list, default=(3, 6, 12, 24))
    p_eval.add_argument("--horizons", type=_int_list, default=(1, 3, 6, 12))
    p_eval.add_argument("--learning-rate", type=float, default=1e-4)
    p_eval.add_argument("--batch-size", type=int, default=64)
    p_eval.add_argument("--max-epochs", type=int, default=200)
    p_eval.add_argument("--patience", type=int, default=50)
    p_eval.set_defaults(func=cmd_eval)

    p_explain = sub.add_parser("explain", help="export per-(feature, lag) importances")
    add_common(p_explain)
    p_explain.add_argument("--format", default="csv", choices=("csv", "json"))
    p_explain.add_argument("--top", type=int, default=None,
                           help="keep only the top-N weights, sorted descending")
    p_explain.add_argument("--per-horizon", action="store_true",
                           help="also write one explanation per forecast step")
    p_explain.set_defaults(func=cmd_explain)

    p_predict = sub.add_parser("predict", help="write forecasts for a split")
    add_common(p_predict)
    p_predict.add_argument("--out", default="predictions.csv")
    p_predict.set_defaults(func=cmd_predict)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--kind", required=True)
    p_synth.add_argument("--rows", type=int, default=1000)
    p_synth.add_argument("--features", type=int, default=3)
    p_synth.add_argument("--driver", type=int, default=2)
    p_synth.add_argument("--delay", type=int, default=3)
    p_synth.add_argument("--noise", type=float, default=0.01)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--threads", type=int, default=1)
    p_synth.set_defaults(func=cmd_synth)

    p_inspect = sub.add_parser("inspect", help="print checkpoint metadata")
    p_inspect.add_argument("--checkpoint", required=True)
    p_inspect.add_argument("--threads", type=int, default=1)
    p_inspect.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    from .errors import CheckpointError, ConfigError, DataError

    try:
        return args.func(args)
    except (ConfigError, DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
