"""Dataset ingestion: the UCI optical-digits text formats (both the 8x8
preprocessed attribute files and the 32x32 original bitmap files) and paired
grayscale image directories for photo/sketch matching.

Parsers are strict and report the offending line; expected partition sizes are
checked with a warning so subset runs stay possible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .hog import resize

# Standard partition sizes of the full UCI distribution: 3823 training and
# 1797 writer-independent test instances (5620 total).
EXPECTED_TRAIN = 3823
EXPECTED_TEST = 1797

# Original-bitmap files making up each partition in the full distribution.
ORIG_TRAIN_FILES = ("optdigits-orig.tra", "optdigits-orig.cv", "optdigits-orig.wdep")
ORIG_TEST_FILES = ("optdigits-orig.windep",)


class DataFormatError(ValueError):
    pass


def parse_preprocessed(path) -> tuple:
    """Parse a comma-separated 64-attribute + label file. Returns
    (features float (n, 64) in 0..16, labels int (n,))."""
    features = []
    labels = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 65:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 65 comma-separated fields, got {len(parts)}")
            try:
                values = [int(p) for p in parts]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: non-integer field ({exc})") from None
            if any(v < 0 or v > 16 for v in values[:64]):
                raise DataFormatError(f"{path}:{lineno}: attribute outside 0..16")
            if not (0 <= values[64] <= 9):
                raise DataFormatError(f"{path}:{lineno}: label outside 0..9")
            features.append(values[:64])
            labels.append(values[64])
    return np.array(features, dtype=float), np.array(labels, dtype=int)


def format_preprocessed_record(attributes, label) -> str:
    """Inverse of one parse_preprocessed line."""
    values = [str(int(v)) for v in attributes] + [str(int(label))]
    return ",".join(values)


def parse_orig_bitmaps(path) -> tuple:
    """Parse a 32x32 original-bitmap file: any preamble lines, then blocks of
    32 lines of 32 '0'/'1' characters followed by one label line. Returns
    (bitmaps (n, 32, 32) bool, labels (n,))."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    bitmaps = []
    labels = []
    i = 0
    started = False

    def is_row(s):
        s = s.strip()
        return len(s) == 32 and set(s) <= {"0", "1"}

    while i < len(lines):
        if not started and not is_row(lines[i]):
            i += 1  # preamble
            continue
        started = True
        block = lines[i:i + 32]
        if len(block) < 32 or not all(is_row(b) for b in block):
            bad = i + next((j for j, b in enumerate(block) if not is_row(b)), 0) + 1
            raise DataFormatError(f"{path}:{bad}: expected a 32-character 0/1 bitmap row")
        if i + 32 >= len(lines):
            raise DataFormatError(f"{path}:{i + 32}: bitmap block missing its label line")
        label_line = lines[i + 32].strip()
        try:
            label = int(label_line)
        except ValueError:
            raise DataFormatError(
                f"{path}:{i + 33}: expected an integer label, got {label_line!r}") from None
        if not (0 <= label <= 9):
            raise DataFormatError(f"{path}:{i + 33}: label outside 0..9")
        bitmaps.append(np.array([[c == "1" for c in row.strip()] for row in block]))
        labels.append(label)
        i += 33
    if not bitmaps:
        raise DataFormatError(f"{path}: no bitmap records found")
    return np.array(bitmaps), np.array(labels, dtype=int)


def format_orig_record(bitmap, label) -> str:
    rows = ["".join("1" if v else "0" for v in row) for row in np.asarray(bitmap, dtype=bool)]
    return "\n".join(rows + [f" {int(label)}"])


@dataclass
class OptdigitsData:
    train_features: np.ndarray
    train_labels: np.ndarray
    test_features: np.ndarray
    test_labels: np.ndarray
    train_bitmaps: np.ndarray | None = None
    train_bitmap_labels: np.ndarray | None = None
    test_bitmaps: np.ndarray | None = None
    test_bitmap_labels: np.ndarray | None = None

    @property
    def has_bitmaps(self):
        return self.train_bitmaps is not None and self.test_bitmaps is not None


def load_optdigits(directory) -> OptdigitsData:
    """Load a directory holding optdigits.tra / optdigits.tes and, when
    present, the original 32x32 bitmap files (train partition assembled from
    the .tra/.cv/.wdep writers, test from .windep)."""
    directory = Path(directory)
    tra = directory / "optdigits.tra"
    tes = directory / "optdigits.tes"
    for p in (tra, tes):
        if not p.exists():
            raise FileNotFoundError(
                f"{p} not found; supply the UCI optical-digits files (user-provided)")
    train_X, train_y = parse_preprocessed(tra)
    test_X, test_y = parse_preprocessed(tes)
    if len(train_y) != EXPECTED_TRAIN or len(test_y) != EXPECTED_TEST:
        warnings.warn(
            f"partition sizes {len(train_y)}/{len(test_y)} differ from the standard "
            f"{EXPECTED_TRAIN}/{EXPECTED_TEST}; continuing with the subset",
            stacklevel=2)

    data = OptdigitsData(train_features=train_X, train_labels=train_y,
                         test_features=test_X, test_labels=test_y)

    def gather(names):
        bitmaps = []
        labels = []
        for name in names:
            p = directory / name
            if p.exists():
                b, l = parse_orig_bitmaps(p)
                bitmaps.append(b)
                labels.append(l)
        if not bitmaps:
            return None, None
        return np.concatenate(bitmaps), np.concatenate(labels)

    data.train_bitmaps, data.train_bitmap_labels = gather(ORIG_TRAIN_FILES)
    data.test_bitmaps, data.test_bitmap_labels = gather(ORIG_TEST_FILES)
    return data


def make_desk_dataset(directory, seed: int = 0, train_fraction: float = 2 / 3) -> dict:
    """Write a desk-scale optdigits directory from the real UCI instances
    bundled with scikit-learn (its copy of the writer-independent test
    partition, 1797 samples), re-split into train/test parts.

    The 32x32 bitmap files are reconstructed by bilinear upsampling of the 8x8
    intensity grid, thresholded at half intensity. Returns partition sizes.
    """
    from sklearn.datasets import load_digits
    from sklearn.model_selection import train_test_split

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    bundle = load_digits()
    idx = np.arange(len(bundle.target))
    train_idx, test_idx = train_test_split(
        idx, train_size=train_fraction, random_state=seed, stratify=bundle.target)
    train_idx = np.sort(train_idx)
    test_idx = np.sort(test_idx)

    def bitmap_of(image8):
        return resize(image8 / 16.0, 32, 32) >= 0.5

    def write_partition(indices, pre_name, orig_name):
        pre_lines = []
        orig_lines = ["desk-scale optical digits reconstructed from the scikit-learn copy",
                      "of the UCI writer-independent partition; 32x32 bitmaps upsampled",
                      "from the 8x8 attribute grid."]
        for i in indices:
            pre_lines.append(format_preprocessed_record(bundle.data[i], bundle.target[i]))
            orig_lines.append(format_orig_record(bitmap_of(bundle.images[i]),
                                                 bundle.target[i]))
        (directory / pre_name).write_text("\n".join(pre_lines) + "\n")
        (directory / orig_name).write_text("\n".join(orig_lines) + "\n")

    write_partition(train_idx, "optdigits.tra", "optdigits-orig.tra")
    write_partition(test_idx, "optdigits.tes", "optdigits-orig.windep")
    return {"train": len(train_idx), "test": len(test_idx)}


# --------------------------------------------------------------------------
# paired grayscale images (photo/sketch layout)

IMAGE_EXTENSIONS = (".pgm", ".png", ".ppm", ".pbm", ".jpg", ".jpeg")


def load_gray_image(path) -> np.ndarray:
    """Read an image as float grayscale in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=float) / 255.0


def _index_by_stem(directory):
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"{directory} is not a directory (user-supplied data)")
    out = {}
    for p in sorted(directory.iterdir()):
        if p.suffix.lower() in IMAGE_EXTENSIONS:
            out.setdefault(p.stem, p)
    return out


def parse_split_file(path) -> dict:
    """Lines of "<identifier> <partition>"; returns partition -> sorted ids."""
    partitions = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataFormatError(
                    f"{path}:{lineno}: expected '<id> <partition>', got {line!r}")
            ident, part = parts
            partitions.setdefault(part, []).append(ident)
    return {part: sorted(ids) for part, ids in partitions.items()}


def load_image_pairs(photo_dir, sketch_dir, split_file) -> dict:
    """Pair photos and sketches by shared filename stem, grouped by the
    partitions named in the split file. Returns
    ``{partition: [(id, photo, sketch), ...]}`` with ids in sorted order."""
    photos = _index_by_stem(photo_dir)
    sketches = _index_by_stem(sketch_dir)
    split = parse_split_file(split_file)
    out = {}
    for part, ids in split.items():
        rows = []
        for ident in ids:
            if ident not in photos:
                raise DataFormatError(f"identifier {ident!r} has no photo in {photo_dir}")
            if ident not in sketches:
                raise DataFormatError(f"identifier {ident!r} has no sketch in {sketch_dir}")
            rows.append((ident, load_gray_image(photos[ident]),
                         load_gray_image(sketches[ident])))
        out[part] = rows
    return out
