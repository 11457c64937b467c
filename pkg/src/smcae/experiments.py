"""Experiment drivers: the handwritten-digit pipeline (synthesis, transform,
classifier comparison, growing-training-set sweep), the photo/sketch matching
pipeline, the balance-weight sweep, the gradient checker and a controlled
shifted-distribution toy task.

Every run is deterministic under (settings, seed) and writes a manifest with
the resolved configuration and its hash next to any CSV output.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .channel import SparsityConfig, channel_gradient, channel_objective
from .datasets import load_optdigits, load_image_pairs
from .hog import FeatureScaler, HogConfig, hog_stack, resize
from .metrics import MetricReport, f1_score, rank1, roc_and_auc, vr_at_far
from .model import (MODEL_FORMAT, SmcaeConfig, Variant, init_layer, layer_pack_slices,
                    pack_layer, smcae_gradient, smcae_objective, train_stack,
                    transform, unpack_layer)
from .optim import finite_diff
from .shapes import (binarize, build_prototype, extract_control_points, iou,
                     match_synthetic, rasterize, fit_mvn, sample_shapes,
                     shape_to_text)
from .svm import cross_validate, svm_predict, svm_train

SHAPE_FORMAT = "shape-text-v1"
CSV_COLUMNS = ["experiment", "variant", "training_set", "count", "seed", "f1"]


@dataclass
class Settings:
    """Resolved experiment configuration; every field can come from the config
    file (section.key matching the field name) or a command-line flag."""

    experiment: str = "digits"
    seed: int = 0
    output_dir: str = "results"
    workers: int = 1

    digits_dir: str | None = None
    photo_dir: str | None = None
    sketch_dir: str | None = None
    split_file: str | None = None

    layer_sizes: tuple = (1000, 1000)
    variant: str = "smcae"
    gamma: float = 50.0
    delta: float = 0.05
    rho: float = 0.1
    weight_decay: float = 1e-4
    max_iterations: int = 400
    tolerance: float = 1e-7
    memory: int = 10
    fine_tune: bool = True

    cell_size: int = 3
    orientation_bins: int = 9
    block_size: int = 2
    block_stride: int = 1
    image_size: int = 50  # photo/sketch working resolution

    control_points: int = 32
    migration_steps: int = 5
    match_iterations: int = 20
    prototype_images: int = 40
    per_class: int = 3000
    schedule: tuple = (300, 3300, 300)
    replicates: int = 3
    feature_mode: str = "hog"  # or "preprocessed" (8x8 block counts)

    c_box: float = 10.0
    g_rbf: float | None = None  # None: 1 / (dims * mean feature variance)
    do_cross_validate: bool = False
    folds: int = 5

    gamma_grid: tuple = (0.0, 0.5, 1.0, 5.0, 10.0, 50.0, 100.0)

    toy_instances: int = 150
    toy_eval_instances: int = 400
    toy_dims: int = 16
    toy_hidden: int = 8
    toy_latent: int = 2
    toy_noise: float = 0.1
    toy_shift: float = 0.2

    def smcae_config(self, gamma=None, seed=None) -> SmcaeConfig:
        return SmcaeConfig(
            layer_sizes=tuple(self.layer_sizes),
            sparsity=SparsityConfig(delta=self.delta, rho=self.rho,
                                    weight_decay=self.weight_decay),
            gamma=self.gamma if gamma is None else gamma,
            max_iterations=self.max_iterations, tolerance=self.tolerance,
            memory=self.memory, fine_tune=self.fine_tune,
            rng_seed=self.seed if seed is None else seed)

    def hog_config(self) -> HogConfig:
        return HogConfig(cell_size=self.cell_size, orientation_bins=self.orientation_bins,
                         block_size=self.block_size, block_stride=self.block_stride)

    def schedule_counts(self) -> list:
        start, stop, step = self.schedule
        return list(range(int(start), int(stop) + 1, int(step)))

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("layer_sizes", "schedule", "gamma_grid"):
            out[key] = list(out[key])
        return out


def settings_hash(settings: Settings) -> str:
    return hashlib.sha256(
        json.dumps(settings.to_dict(), sort_keys=True).encode()).hexdigest()


def write_manifest(settings: Settings, command: str, out_dir: Path, extra=None) -> Path:
    manifest = {
        "command": command,
        "package_version": __version__,
        "config": settings.to_dict(),
        "config_hash": settings_hash(settings),
        "seed": settings.seed,
        "artifact_formats": {"model": MODEL_FORMAT, "shapes": SHAPE_FORMAT},
    }
    if extra:
        manifest.update(extra)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


# --------------------------------------------------------------------------
# digit synthesis


@dataclass
class ClassModel:
    digit: int
    prototype: np.ndarray      # binary prototype
    start_shape: object        # control points on the prototype
    start_raster: np.ndarray
    matched_shapes: list       # one migrated shape per real training bitmap
    matched_rasters: np.ndarray
    matched_ious: np.ndarray
    distribution: object


def build_class_models(data, settings: Settings) -> dict:
    """Per digit: aligned prototype, boundary control points, the migrated
    match for every real training bitmap, and the fitted point distribution."""
    if not data.has_bitmaps:
        raise ValueError("digit synthesis needs the original 32x32 bitmap files")
    models = {}
    for digit in range(10):
        mask = data.train_bitmap_labels == digit
        bits = data.train_bitmaps[mask]
        if len(bits) < 2:
            raise ValueError(f"digit {digit} has fewer than two training bitmaps")
        proto_gray = build_prototype(
            [b.astype(float) for b in bits[:settings.prototype_images]],
            outer_iterations=2)
        proto = binarize(proto_gray, 0.5, mode="intensity")
        start = extract_control_points(proto, settings.control_points)
        start_raster = rasterize(start)
        shapes = []
        rasters = []
        scores = []
        for U in bits:
            res = match_synthetic(U, start, V0=start_raster,
                                  max_iterations=settings.match_iterations,
                                  steps=settings.migration_steps)
            shapes.append(res.shape)
            rasters.append(res.image)
            scores.append(res.iou)
        models[digit] = ClassModel(
            digit=digit, prototype=proto, start_shape=start, start_raster=start_raster,
            matched_shapes=shapes, matched_rasters=np.array(rasters),
            matched_ious=np.array(scores), distribution=fit_mvn(shapes))
    return models


def sample_synthetic(models: dict, per_class: int, seed: int) -> tuple:
    """Rasterized fresh samples, round-robin interleaved over digits so any
    prefix stays class-balanced. Returns (rasters, labels)."""
    per_digit = {}
    for digit, cm in models.items():
        shapes = sample_shapes(cm.distribution, per_class, seed=int(seed) * 100 + digit)
        per_digit[digit] = [rasterize(s) for s in shapes]
    rasters = []
    labels = []
    for i in range(per_class):
        for digit in sorted(per_digit):
            rasters.append(per_digit[digit][i])
            labels.append(digit)
    return np.array(rasters), np.array(labels)


def bitmap_features(bitmaps, settings: Settings) -> np.ndarray:
    """Feature rows for 32x32 bitmaps: HOG descriptors, or the dataset's own
    8x8 block-count encoding as the cheap fallback."""
    if settings.feature_mode == "hog":
        return hog_stack([b.astype(float) for b in bitmaps], settings.hog_config())
    if settings.feature_mode == "preprocessed":
        b = np.asarray(bitmaps, dtype=float)
        return b.reshape(len(b), 8, 4, 8, 4).sum(axis=(2, 4)).reshape(len(b), 64)
    raise ValueError(f"unknown feature_mode {settings.feature_mode!r}")


def _default_g_rbf(X) -> float:
    var = float(X.var())
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0 / X.shape[1]


def _svm_params(settings: Settings, X_train, y_train):
    if settings.do_cross_validate:
        c, g, _ = cross_validate(X_train, y_train, folds=settings.folds,
                                 seed=settings.seed)
        return c, g
    g = settings.g_rbf if settings.g_rbf is not None else _default_g_rbf(X_train)
    return settings.c_box, g


@dataclass
class DigitRun:
    """Everything the digit experiment produces for one variant."""

    model: object
    scaler: FeatureScaler
    comparison: dict            # training-set name -> (f1, n_synthetic)
    schedule_rows: list         # (count, seed, f1)
    class_models: dict
    svm_params: tuple


def run_digit_pipeline(data, settings: Settings, class_models=None) -> DigitRun:
    if class_models is None:
        class_models = build_class_models(data, settings)

    # Matched rasters are stored per class; align the real bitmaps to pair up.
    order = np.argsort(data.train_bitmap_labels, kind="stable")
    X_r = bitmap_features(data.train_bitmaps[order], settings)
    y_r = data.train_bitmap_labels[order]
    matched = np.concatenate([class_models[d].matched_rasters for d in range(10)])
    X_s = bitmap_features(matched, settings)
    X_test = bitmap_features(data.test_bitmaps, settings)
    y_test = data.test_bitmap_labels

    scaler = FeatureScaler().fit(np.vstack([X_s, X_r]))
    Xs_scaled = scaler.transform(X_s)
    Xr_scaled = scaler.transform(X_r)
    Xtest_scaled = scaler.transform(X_test)

    model = train_stack(Xs_scaled, Xr_scaled, settings.smcae_config(),
                        Variant(settings.variant))

    syn_rasters, syn_labels = sample_synthetic(class_models, settings.per_class,
                                               seed=settings.seed)
    Xsyn_scaled = scaler.transform(bitmap_features(syn_rasters, settings))
    Xsyn_transformed = transform(model, Xsyn_scaled)

    c_box, g_rbf = _svm_params(settings, Xr_scaled, y_r)

    def evaluate(X_train, y_train):
        svm = svm_train(X_train, y_train, c_box, g_rbf)
        return f1_score(svm_predict(svm, Xtest_scaled), y_test, average="macro")

    n_syn = len(syn_labels)
    comparison = {
        "real": (evaluate(Xr_scaled, y_r), 0),
        "synthetic": (evaluate(Xsyn_scaled, syn_labels), n_syn),
        "transformed": (evaluate(Xsyn_transformed, syn_labels), n_syn),
        "real+transformed": (evaluate(np.vstack([Xr_scaled, Xsyn_transformed]),
                                      np.concatenate([y_r, syn_labels])), n_syn),
    }

    schedule_rows = []
    counts = settings.schedule_counts()
    if counts:
        for rep in range(settings.replicates):
            rep_seed = settings.seed + rep
            rasters, labels = sample_synthetic(
                class_models, max(counts) // 10 + (max(counts) % 10 > 0),
                seed=rep_seed)
            Xrep = transform(model, scaler.transform(bitmap_features(rasters, settings)))
            for count in counts:
                take = min(count, len(labels))
                f1 = evaluate(np.vstack([Xr_scaled, Xrep[:take]]),
                              np.concatenate([y_r, labels[:take]]))
                schedule_rows.append((count, rep_seed, f1))

    return DigitRun(model=model, scaler=scaler, comparison=comparison,
                    schedule_rows=schedule_rows, class_models=class_models,
                    svm_params=(c_box, g_rbf))


def run_digits_experiment(settings: Settings, data=None, class_models=None) -> DigitRun:
    """Full Fig-8/Fig-9 style digit experiment; writes results.csv, a summary
    of the schedule sweep, and the manifest."""
    if data is None:
        data = load_optdigits(settings.digits_dir)
    run = run_digit_pipeline(data, settings, class_models=class_models)
    out = Path(settings.output_dir)
    rows = []
    for name, (f1, n_syn) in run.comparison.items():
        rows.append(["digits", settings.variant, name, n_syn, settings.seed, f1])
    for count, seed, f1 in run.schedule_rows:
        rows.append(["digits", settings.variant, "real+transformed(schedule)",
                     count, seed, f1])
    write_csv(out / "results.csv", CSV_COLUMNS, rows)

    by_count = {}
    for count, _, f1 in run.schedule_rows:
        by_count.setdefault(count, []).append(f1)
    summary = [[count, len(v), float(np.mean(v)), float(np.std(v))]
               for count, v in sorted(by_count.items())]
    write_csv(out / "schedule_summary.csv", ["count", "replicates", "mean_f1", "std_f1"],
              summary)
    write_manifest(settings, "eval-digits", out,
                   extra={"feature_mode": settings.feature_mode,
                          "svm_params": list(run.svm_params)})
    return run


def generate_digits(settings: Settings, data=None) -> dict:
    """Synthesis stage only: prototypes, matches, sampled rasters and shape
    files under the output directory."""
    if data is None:
        data = load_optdigits(settings.digits_dir)
    class_models = build_class_models(data, settings)
    out = Path(settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    shape_dir = out / "shapes"
    shape_dir.mkdir(exist_ok=True)
    rasters, labels = sample_synthetic(class_models, settings.per_class, settings.seed)
    matched = np.concatenate([class_models[d].matched_rasters for d in range(10)])
    matched_labels = np.concatenate(
        [np.full(len(class_models[d].matched_rasters), d) for d in range(10)])
    np.savez(out / "synthetic.npz",
             matched=matched.astype(np.uint8), matched_labels=matched_labels,
             sampled=rasters.astype(np.uint8), sampled_labels=labels)
    for digit, cm in class_models.items():
        (shape_dir / f"prototype_{digit}.txt").write_text(shape_to_text(cm.start_shape))
    mean_iou = float(np.mean(np.concatenate(
        [class_models[d].matched_ious for d in range(10)])))
    write_manifest(settings, "generate-digits", out, extra={"mean_match_iou": mean_iou})
    return {"class_models": class_models, "mean_match_iou": mean_iou,
            "sampled": rasters, "sampled_labels": labels}


# --------------------------------------------------------------------------
# photo/sketch experiment


def run_cufsf_experiment(settings: Settings) -> MetricReport:
    """Train on (sketch, photo) feature pairs from the train split, transform
    the test sketches and match them against the test photos."""
    for name, value in (("photo_dir", settings.photo_dir),
                        ("sketch_dir", settings.sketch_dir),
                        ("split_file", settings.split_file)):
        if not value:
            raise FileNotFoundError(
                f"{name} is required; the face/sketch dataset is licensed and "
                f"user-supplied")
    pairs = load_image_pairs(settings.photo_dir, settings.sketch_dir,
                             settings.split_file)
    if "train" not in pairs or "test" not in pairs:
        raise ValueError("split file must define 'train' and 'test' partitions")

    size = settings.image_size
    cfg = settings.hog_config()

    def featurize(rows):
        photos = hog_stack([resize(p, size, size) for _, p, _ in rows], cfg)
        sketches = hog_stack([resize(s, size, size) for _, _, s in rows], cfg)
        return photos, sketches

    photo_tr, sketch_tr = featurize(pairs["train"])
    photo_te, sketch_te = featurize(pairs["test"])

    scaler = FeatureScaler().fit(np.vstack([sketch_tr, photo_tr]))
    model = train_stack(scaler.transform(sketch_tr), scaler.transform(photo_tr),
                        settings.smcae_config(), Variant(settings.variant))
    queries = transform(model, scaler.transform(sketch_te))
    gallery = scaler.transform(photo_te)

    n = len(gallery)
    d2 = (np.sum(queries ** 2, axis=1)[:, None] + np.sum(gallery ** 2, axis=1)[None, :]
          - 2.0 * queries @ gallery.T)
    scores = -np.sqrt(np.maximum(d2, 0.0))
    labels = np.eye(n, dtype=bool)
    points, auc = roc_and_auc(scores.ravel(), labels.ravel())
    vr = vr_at_far(scores.ravel(), labels.ravel(), 0.001)
    r1 = rank1(queries, gallery, np.arange(n))
    report = MetricReport(auc=auc, vr_far=vr, far=0.001, rank1=r1, roc=points,
                          extra={"n_test_pairs": n})

    out = Path(settings.output_dir)
    write_csv(out / "cufsf_metrics.csv", ["experiment", "variant", "metric", "value"],
              [["cufsf", settings.variant, "auc", auc],
               ["cufsf", settings.variant, "vr_at_0.001_far", vr],
               ["cufsf", settings.variant, "rank1", r1]])
    write_csv(out / "cufsf_roc.csv", ["far", "vr"],
              [[float(f), float(v)] for f, v in points])
    (out / "cufsf_report.json").write_text(report.to_json() + "\n")
    write_manifest(settings, "eval-cufsf", out)
    return report


# --------------------------------------------------------------------------
# gradient check


def run_gradcheck(settings: Settings, inject_bug: bool = False,
                  gammas=(0.0, 1.0, 50.0), threshold: float = 1e-5) -> dict:
    """Compare analytic gradients of the joint and single-channel objectives
    against central finite differences on random instances. Returns per-block
    errors; ``ok`` is False if any exceeds the threshold."""
    m, k, n = 6, 4, 8
    rng = np.random.default_rng(settings.seed)
    s = SparsityConfig(delta=settings.delta, rho=max(settings.rho, 0.1),
                       weight_decay=max(settings.weight_decay, 0.01))
    X_s = rng.uniform(0.1, 0.9, (n, m))
    X_r = rng.uniform(0.1, 0.9, (n, m))
    layer = init_layer(m, k, rng)
    x0 = pack_layer(layer)
    slices = layer_pack_slices(m, k)
    results = {}
    scale = 2.0 if inject_bug else 1.0

    def block_errors(flat, fd):
        out = {}
        for name, sl in slices.items():
            diff = np.abs(flat[sl] - fd[sl])
            denom = np.maximum(1.0, np.abs(flat[sl]) + np.abs(fd[sl]))
            out[name] = float(np.max(diff / denom))
        return out

    for gamma in gammas:
        def value(v):
            E, _, _ = smcae_objective(unpack_layer(v, m, k), X_s, X_r, s, gamma)
            return E
        grad = smcae_gradient(layer, X_s, X_r, s, gamma)
        flat = np.concatenate([grad.W_e.ravel(), grad.b_e, grad.W_d_L.ravel(),
                               grad.b_d_L, grad.W_d_R.ravel(), grad.b_d_R]) * scale
        results[f"gamma={gamma:g}"] = block_errors(flat, finite_diff(value, x0))

    # Plain single-channel objective through the left parameters.
    def chan_value(v):
        p = unpack_layer(v, m, k)
        return channel_objective(p.left(), X_s, X_r, s)

    cg = channel_gradient(layer.left(), X_s, X_r, s)
    chan_flat = np.zeros_like(x0)
    chan_flat[slices["W_e"]] = cg.W_e.ravel() * scale
    chan_flat[slices["b_e"]] = cg.b_e * scale
    chan_flat[slices["W_d_L"]] = cg.W_d.ravel() * scale
    chan_flat[slices["b_d_L"]] = cg.b_d * scale
    chan_fd = finite_diff(chan_value, x0)
    chan = block_errors(chan_flat, chan_fd)
    chan.pop("W_d_R")
    chan.pop("b_d_R")
    results["channel"] = chan

    worst = max(max(b.values()) for b in results.values())
    ok = worst <= threshold
    lines = []
    for key, blocks in results.items():
        for name, err in blocks.items():
            lines.append(f"{key} {name} max_rel_err={err:.3e}")
    lines.append(f"worst={worst:.3e} threshold={threshold:g} {'OK' if ok else 'FAIL'}")
    return {"results": results, "worst": worst, "ok": ok, "lines": lines}


# --------------------------------------------------------------------------
# balance-weight sweep


def run_gamma_sweep(settings: Settings, data=None) -> list:
    """Train the digit pipeline once per balance weight, recording the final
    classifier quality and the optimizer iterations spent."""
    if data is None:
        data = load_optdigits(settings.digits_dir)
    class_models = build_class_models(data, settings)
    rows = []
    for gamma in settings.gamma_grid:
        run = run_digit_pipeline(data, replace(settings, gamma=gamma,
                                               schedule=(0, -1, 1)),
                                 class_models=class_models)
        f1 = run.comparison["real+transformed"][0]
        iters = run.model.total_iterations()
        rows.append((gamma, f1, iters))
    out = Path(settings.output_dir)
    write_csv(out / "gamma_sweep.csv", ["gamma", "f1", "iterations"],
              [[float(g), float(f), it] for g, f, it in rows])
    write_manifest(settings, "gamma-sweep", out)
    return rows


# --------------------------------------------------------------------------
# controlled shifted-distribution toy task


def make_toy_gap(n: int, dims: int, seed: int, shift: float = 0.2):
    """Paired toy task: real features ~ N(0.6, 0.05^2) clipped into (0, 1),
    source features shifted down by a constant gap."""
    rng = np.random.default_rng(seed)
    X_r = np.clip(rng.normal(0.6, 0.05, (n, dims)), 0.01, 0.99)
    X_s = np.clip(X_r - shift, 0.01, 0.99)
    return X_s, X_r


def make_structured_gap(n: int, dims: int, seed: int, shift: float = 0.2,
                        latent: int = 2, noise: float = 0.1):
    """Shifted-Gaussian gap with shared structure: real features are a fixed
    linear map of a low-dimensional Gaussian latent (marginals ~ N(0.6,
    0.05^2)), and the source rendering adds the constant shift plus noise.
    This is the regime the two-channel model targets: the clean real channel
    carries structure the noisy pairing alone under-determines."""
    rng = np.random.default_rng(seed)
    A = np.random.default_rng(12345).normal(size=(dims, latent))
    A = 0.05 * A / np.linalg.norm(A, axis=1, keepdims=True)
    z = rng.standard_normal((n, latent))
    X_r = np.clip(0.6 + z @ A.T, 0.01, 0.99)
    X_s = np.clip(X_r - shift + rng.normal(0.0, noise, (n, dims)), 0.01, 0.99)
    return X_s, X_r


def run_toy_gap(settings: Settings, variants=None) -> list:
    """Train each variant on the structured gap task and measure the mean
    distance from transformed held-out source features to their paired real
    features. Returns rows (variant, seed, before, after, train_left_error)."""
    variants = [v for v in (variants or [v.value for v in Variant])]

    def make(n, seed):
        return make_structured_gap(n, settings.toy_dims, seed,
                                   shift=settings.toy_shift,
                                   latent=settings.toy_latent,
                                   noise=settings.toy_noise)

    rows = []
    for rep in range(settings.replicates):
        seed = settings.seed + rep
        X_s, X_r = make(settings.toy_instances, seed)
        Xe_s, Xe_r = make(settings.toy_eval_instances, seed + 1000)
        before = float(np.mean(np.linalg.norm(Xe_s - Xe_r, axis=1)))
        for name in variants:
            config = SmcaeConfig(
                layer_sizes=(settings.toy_hidden,),
                sparsity=SparsityConfig(delta=settings.delta, rho=settings.rho,
                                        weight_decay=settings.weight_decay),
                gamma=settings.gamma, max_iterations=settings.max_iterations,
                tolerance=settings.tolerance, memory=settings.memory,
                fine_tune=False, rng_seed=seed)
            model = train_stack(X_s, X_r, config, Variant(name))
            Z = transform(model, Xe_s)
            after = float(np.mean(np.linalg.norm(Z - Xe_r, axis=1)))
            left_err = float(np.mean(np.sum((transform(model, X_s) - X_r) ** 2, axis=1)))
            rows.append((name, seed, before, after, left_err))
    out = Path(settings.output_dir)
    write_csv(out / "toy_gap.csv",
              ["variant", "seed", "distance_before", "distance_after", "left_error"],
              rows)
    write_manifest(settings, "toy-gap", out)
    return rows
