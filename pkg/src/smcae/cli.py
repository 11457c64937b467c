"""Command-line driver.

Subcommands: train, transform, generate-digits, eval-digits, eval-cufsf,
gamma-sweep, gradcheck, toy-gap, make-desk-data. Every option can also come
from a plain-text config file (INI sections; keys named like the options);
command-line flags win over the file.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import experiments
from .datasets import load_optdigits, make_desk_dataset
from .experiments import Settings, write_manifest
from .hog import FeatureScaler
from .model import Variant, load_model, save_model, train_stack, transform
from .shapes import shape_to_text

_FIELDS = {f.name: f for f in dataclasses.fields(Settings)}
_TUPLE_FIELDS = {"layer_sizes", "schedule", "gamma_grid"}
_FLAG_FIELDS = [
    "experiment", "seed", "output_dir", "workers", "digits_dir", "photo_dir",
    "sketch_dir", "split_file", "layer_sizes", "variant", "gamma", "delta", "rho",
    "weight_decay", "max_iterations", "tolerance", "memory", "fine_tune",
    "cell_size", "orientation_bins", "block_size", "block_stride", "image_size",
    "control_points", "migration_steps", "match_iterations", "prototype_images",
    "per_class", "schedule", "replicates", "feature_mode", "c_box", "g_rbf",
    "do_cross_validate", "folds", "gamma_grid", "toy_instances",
    "toy_eval_instances", "toy_dims", "toy_hidden",
]


def _parse_value(name: str, raw: str):
    if name in _TUPLE_FIELDS:
        return tuple(float(v) if "." in v or "e" in v.lower() else int(v)
                     for v in raw.replace(" ", "").split(",") if v)
    default = _FIELDS[name].default
    if isinstance(default, bool):
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{name}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if name == "g_rbf":
        return None if raw.strip().lower() in ("", "auto", "none") else float(raw)
    return raw


def load_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file {path} not found")
    out = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in _FIELDS:
                raise ValueError(f"unknown config key {key!r} in section [{section}]")
            out[key] = _parse_value(key, raw)
    return out


def build_settings(args) -> Settings:
    values = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in _FLAG_FIELDS:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = _parse_value(name, flag) if isinstance(flag, str) else flag
    return Settings(**values)


def _add_common(sub):
    sub.add_argument("--config", help="plain-text config file (INI sections)")
    for name in _FLAG_FIELDS:
        flag = "--" + name.replace("_", "-")
        default = _FIELDS[name].default
        if isinstance(default, bool):
            sub.add_argument(flag, type=str, default=None, metavar="BOOL")
        else:
            sub.add_argument(flag, type=str, default=None)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smcae",
        description="Stacked multichannel autoencoder experiments")
    subs = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
            ("train", "train a variant on digit feature pairs and save the model"),
            ("transform", "transform synthetic features through a saved model"),
            ("generate-digits", "build prototypes, matches and sampled synthetic digits"),
            ("eval-digits", "full digit experiment with classifier comparison"),
            ("eval-cufsf", "photo/sketch matching experiment (user-supplied data)"),
            ("gamma-sweep", "train per balance weight and record quality/iterations"),
            ("gradcheck", "verify analytic gradients against finite differences"),
            ("toy-gap", "controlled shifted-distribution toy comparison"),
            ("make-desk-data", "write a desk-scale digits directory from bundled data")]:
        sub = subs.add_parser(name, help=help_text)
        _add_common(sub)
        if name == "train":
            sub.add_argument("--synthetic", help="synthetic.npz from generate-digits")
            sub.add_argument("--out", default="model.npz")
        if name == "transform":
            sub.add_argument("--model", required=True)
            sub.add_argument("--synthetic", required=True)
            sub.add_argument("--out", default="transformed.npz")
        if name == "gradcheck":
            sub.add_argument("--inject-bug", action="store_true",
                             help=argparse.SUPPRESS)
        if name == "make-desk-data":
            sub.add_argument("directory")
    return parser


def _featurize_pairs(settings, data, synthetic_path):
    """(synthetic features, real features, labels) for the digit pairing."""
    if synthetic_path:
        with np.load(synthetic_path) as z:
            matched = z["matched"].astype(bool)
            matched_labels = z["matched_labels"]
    else:
        models = experiments.build_class_models(data, settings)
        matched = np.concatenate([models[d].matched_rasters for d in range(10)])
        matched_labels = np.concatenate(
            [np.full(len(models[d].matched_rasters), d) for d in range(10)])
    X_s = experiments.bitmap_features(matched, settings)
    order = np.argsort(data.train_bitmap_labels, kind="stable")
    X_r = experiments.bitmap_features(data.train_bitmaps[order], settings)
    return X_s, X_r, matched_labels


def cmd_train(args) -> int:
    settings = build_settings(args)
    data = load_optdigits(settings.digits_dir)
    X_s, X_r, _ = _featurize_pairs(settings, data, args.synthetic)
    if len(X_s) != len(X_r):
        raise ValueError(f"synthetic pairs ({len(X_s)}) do not match the real "
                         f"training bitmaps ({len(X_r)})")
    scaler = FeatureScaler().fit(np.vstack([X_s, X_r]))
    model = train_stack(scaler.transform(X_s), scaler.transform(X_r),
                        settings.smcae_config(), Variant(settings.variant))
    save_model(model, args.out, extras=scaler.to_arrays())
    out_dir = Path(settings.output_dir)
    write_manifest(settings, "train", out_dir,
                   extra={"model_path": str(args.out),
                          "feature_mode": settings.feature_mode})
    print(f"saved model to {args.out} "
          f"({len(model.layers)} layers, {model.total_iterations()} iterations)")
    return 0


def cmd_transform(args) -> int:
    settings = build_settings(args)
    model = load_model(args.model)
    with np.load(args.model) as z:
        scaler = FeatureScaler.from_arrays(z)
    with np.load(args.synthetic) as z:
        rasters = z["sampled"].astype(bool)
        labels = z["sampled_labels"]
    X = scaler.transform(experiments.bitmap_features(rasters, settings))
    Z = transform(model, X)
    np.savez(args.out, features=Z, labels=labels)
    print(f"transformed {len(Z)} synthetic feature rows -> {args.out}")
    return 0


def cmd_generate_digits(args) -> int:
    settings = build_settings(args)
    result = experiments.generate_digits(settings)
    print(f"generated {len(result['sampled'])} synthetic digits "
          f"(mean match IoU {result['mean_match_iou']:.3f}) under {settings.output_dir}")
    return 0


def cmd_eval_digits(args) -> int:
    settings = build_settings(args)
    run = experiments.run_digits_experiment(settings)
    for name, (f1, _) in run.comparison.items():
        print(f"{name:>18s}: F1 = {f1:.4f}")
    print(f"results under {settings.output_dir}")
    return 0


def cmd_eval_cufsf(args) -> int:
    settings = build_settings(args)
    report = experiments.run_cufsf_experiment(settings)
    print(f"AUC = {report.auc:.4f}  VR@0.1%FAR = {report.vr_far:.4f}  "
          f"rank-1 = {report.rank1:.4f}")
    return 0


def cmd_gamma_sweep(args) -> int:
    settings = build_settings(args)
    rows = experiments.run_gamma_sweep(settings)
    for gamma, f1, iters in rows:
        print(f"gamma={gamma:<6g} f1={f1:.4f} iterations={iters}")
    return 0


def cmd_gradcheck(args) -> int:
    settings = build_settings(args)
    result = experiments.run_gradcheck(settings, inject_bug=args.inject_bug)
    for line in result["lines"]:
        print(line)
    return 0 if result["ok"] else 1


def cmd_toy_gap(args) -> int:
    settings = build_settings(args)
    rows = experiments.run_toy_gap(settings)
    for variant, seed, before, after, _ in rows:
        print(f"{variant:<9s} seed={seed} distance {before:.4f} -> {after:.4f}")
    return 0


def cmd_make_desk_data(args) -> int:
    settings = build_settings(args)
    sizes = make_desk_dataset(args.directory, seed=settings.seed)
    print(f"wrote desk-scale digits ({sizes['train']} train / {sizes['test']} test) "
          f"to {args.directory}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "transform": cmd_transform,
    "generate-digits": cmd_generate_digits,
    "eval-digits": cmd_eval_digits,
    "eval-cufsf": cmd_eval_cufsf,
    "gamma-sweep": cmd_gamma_sweep,
    "gradcheck": cmd_gradcheck,
    "toy-gap": cmd_toy_gap,
    "make-desk-data": cmd_make_desk_data,
}


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
