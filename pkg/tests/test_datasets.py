import numpy as np
import pytest
from PIL import Image

from smcae.datasets import (DataFormatError, OptdigitsData, format_orig_record,
                            format_preprocessed_record, load_image_pairs,
                            load_optdigits, parse_orig_bitmaps,
                            parse_preprocessed, parse_split_file)


# --------------------------------------------------------------------------
# preprocessed 8x8 format


def test_preprocessed_golden_line_round_trip(tmp_path):
    attrs = list(range(16)) * 4
    line = format_preprocessed_record(attrs, 7)
    path = tmp_path / "one.tra"
    path.write_text(line + "\n")
    X, y = parse_preprocessed(path)
    assert X.shape == (1, 64)
    assert y.tolist() == [7]
    assert format_preprocessed_record(X[0], y[0]) == line


def test_preprocessed_reports_offending_line(tmp_path):
    good = format_preprocessed_record([0] * 64, 1)
    path = tmp_path / "bad.tra"
    path.write_text(good + "\n0,1,2\n")
    with pytest.raises(DataFormatError, match=":2"):
        parse_preprocessed(path)


def test_preprocessed_rejects_out_of_range_values(tmp_path):
    path = tmp_path / "bad.tra"
    path.write_text(format_preprocessed_record([17] + [0] * 63, 1) + "\n")
    with pytest.raises(DataFormatError, match="0..16"):
        parse_preprocessed(path)
    path.write_text(format_preprocessed_record([0] * 64, 11) + "\n")
    with pytest.raises(DataFormatError, match="label"):
        parse_preprocessed(path)


def test_preprocessed_rejects_non_integer_field(tmp_path):
    path = tmp_path / "bad.tra"
    path.write_text(",".join(["x"] + ["0"] * 64) + "\n")
    with pytest.raises(DataFormatError, match=":1"):
        parse_preprocessed(path)


# --------------------------------------------------------------------------
# original 32x32 bitmap format


def test_orig_golden_record_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    bitmap = rng.uniform(size=(32, 32)) > 0.5
    record = format_orig_record(bitmap, 3)
    path = tmp_path / "one.orig"
    path.write_text("some preamble line\nanother header\n" + record + "\n")
    bitmaps, labels = parse_orig_bitmaps(path)
    assert labels.tolist() == [3]
    assert np.array_equal(bitmaps[0], bitmap)
    assert format_orig_record(bitmaps[0], labels[0]) == record


def test_orig_missing_label_line_errors(tmp_path):
    bitmap = np.zeros((32, 32), dtype=bool)
    rows = format_orig_record(bitmap, 0).splitlines()[:32]  # drop the label
    path = tmp_path / "trunc.orig"
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(DataFormatError, match="label"):
        parse_orig_bitmaps(path)


def test_orig_truncated_block_errors(tmp_path):
    bitmap = np.zeros((32, 32), dtype=bool)
    record = format_orig_record(bitmap, 0)
    truncated = "\n".join(record.splitlines()[:20] + ["0011"])
    path = tmp_path / "trunc.orig"
    path.write_text(truncated + "\n")
    with pytest.raises(DataFormatError, match="bitmap row"):
        parse_orig_bitmaps(path)


def test_orig_empty_file_errors(tmp_path):
    path = tmp_path / "empty.orig"
    path.write_text("no records here\n")
    with pytest.raises(DataFormatError, match="no bitmap"):
        parse_orig_bitmaps(path)


# --------------------------------------------------------------------------
# directory loading


def test_desk_dataset_loads_with_subset_warning(desk_data_dir):
    with pytest.warns(UserWarning, match="3823/1797"):
        data = load_optdigits(desk_data_dir)
    assert isinstance(data, OptdigitsData)
    assert data.train_features.shape[1] == 64
    assert data.has_bitmaps
    assert data.train_bitmaps.shape[1:] == (32, 32)
    assert len(data.train_bitmaps) == len(data.train_labels)
    assert set(np.unique(data.train_labels)) == set(range(10))


def test_loader_requires_standard_files(tmp_path):
    with pytest.raises(FileNotFoundError, match="optdigits"):
        load_optdigits(tmp_path)


def test_desk_dataset_is_deterministic(tmp_path):
    from smcae.datasets import make_desk_dataset
    a = tmp_path / "a"
    b = tmp_path / "b"
    make_desk_dataset(a, seed=3)
    make_desk_dataset(b, seed=3)
    assert (a / "optdigits.tra").read_text() == (b / "optdigits.tra").read_text()
    assert (a / "optdigits-orig.windep").read_text() == \
        (b / "optdigits-orig.windep").read_text()


# --------------------------------------------------------------------------
# paired images


@pytest.fixture()
def pair_dirs(tmp_path):
    photos = tmp_path / "photos"
    sketches = tmp_path / "sketches"
    photos.mkdir()
    sketches.mkdir()
    rng = np.random.default_rng(1)
    for ident in ("a01", "a02", "a03"):
        arr = (rng.uniform(size=(12, 10)) * 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(photos / f"{ident}.png")
        Image.fromarray(255 - arr, mode="L").save(sketches / f"{ident}.pgm")
    split = tmp_path / "split.txt"
    split.write_text("a01 train\na02 train\na03 test\n")
    return photos, sketches, split


def test_load_image_pairs_aligned_and_sorted(pair_dirs):
    photos, sketches, split = pair_dirs
    pairs = load_image_pairs(photos, sketches, split)
    assert [i for i, _, _ in pairs["train"]] == ["a01", "a02"]
    assert [i for i, _, _ in pairs["test"]] == ["a03"]
    ident, photo, sketch = pairs["train"][0]
    assert photo.shape == (12, 10)
    assert photo.min() >= 0.0 and photo.max() <= 1.0
    assert np.allclose(photo + sketch, 1.0, atol=1 / 255)


def test_missing_sketch_names_identifier(pair_dirs):
    photos, sketches, split = pair_dirs
    (sketches / "a02.pgm").unlink()
    with pytest.raises(DataFormatError, match="a02"):
        load_image_pairs(photos, sketches, split)


def test_split_file_rejects_malformed_line(tmp_path):
    path = tmp_path / "split.txt"
    path.write_text("a01 train extra\n")
    with pytest.raises(DataFormatError, match=":1"):
        parse_split_file(path)
