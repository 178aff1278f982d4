import struct

import numpy as np
import pytest

from qwdiff.data import (RawDataset, concat, filter_digit, load_idx, parse_idx, quantize,
                         read_pgm, write_pgm)
from qwdiff.errors import FormatError, ParameterError

from conftest import MNIST_IMAGES, MNIST_LABELS, idx_images, idx_labels


def test_parse_single_image():
    header = bytes.fromhex("00000803" "00000001" "0000001C" "0000001C")
    ds = parse_idx(header + bytes(range(256)) * 3 + bytes(16), idx_labels([4]))
    assert ds.images.shape == (1, 28, 28)
    assert ds.labels.tolist() == [4]
    assert ds.images[0, 0, 5] == 5


def test_wrong_magic():
    bad = struct.pack(">IIII", 0x802, 1, 28, 28) + bytes(784)
    with pytest.raises(FormatError):
        parse_idx(bad, idx_labels([0]))


def test_count_mismatch():
    with pytest.raises(FormatError):
        parse_idx(idx_images(np.zeros((2, 3, 3))), idx_labels([1]))


def test_truncated_payload():
    with pytest.raises(FormatError):
        parse_idx(idx_images(np.zeros((2, 3, 3)))[:-1], idx_labels([1, 2]))


def test_quantize_examples():
    assert quantize(np.array([0, 255, 32, 31]), 8).tolist() == [0, 7, 1, 0]


def test_quantize_monotone_and_surjective():
    levels = quantize(np.arange(256), 8)
    assert np.all(np.diff(levels.astype(int)) >= 0)
    assert set(levels.tolist()) == set(range(8))
    assert np.bincount(levels).tolist() == [32] * 8


def test_filter_digit():
    ds = RawDataset(np.arange(5 * 4).reshape(5, 2, 2).astype(np.uint8),
                    np.array([3, 0, 3, 1, 0], dtype=np.uint8))
    sub = filter_digit(ds, 3)
    assert sub.images[:, 0, 0].tolist() == [0, 8]
    empty = RawDataset(np.zeros((0, 2, 2), np.uint8), np.zeros(0, np.uint8))
    assert len(filter_digit(empty, 0)) == 0
    with pytest.raises(ParameterError):
        filter_digit(ds, 10)


def test_concat():
    ds = RawDataset(np.zeros((2, 1, 1), np.uint8), np.array([1, 2], np.uint8))
    assert concat(ds, ds).labels.tolist() == [1, 2, 1, 2]


def test_pgm_format():
    assert write_pgm(np.array([[7]]), 8) == b"P5\n1 1\n7\n\x07"
    blank = write_pgm(np.zeros((28, 28), dtype=np.uint8), 8)
    assert blank.endswith(bytes(784)) and len(blank) == len(b"P5\n28 28\n7\n") + 784


def test_pgm_round_trip(rng):
    img = rng.integers(0, 8, size=(5, 7)).astype(np.uint8)
    back, maxval = read_pgm(write_pgm(img, 8))
    assert maxval == 7
    assert np.array_equal(back, img)


def test_idx_to_pgm_pipeline_lossless(tmp_path, rng):
    raw = rng.integers(0, 256, size=(3, 28, 28)).astype(np.uint8)
    (tmp_path / "img").write_bytes(idx_images(raw))
    (tmp_path / "lab").write_bytes(idx_labels([0, 1, 0]))
    levels = quantize(load_idx(tmp_path / "img", tmp_path / "lab"), 8)
    for img in levels:
        assert np.array_equal(read_pgm(write_pgm(img, 8))[0], img)


def test_bundled_subset_digit_counts():
    ds = load_idx(MNIST_IMAGES, MNIST_LABELS)
    assert ds.images.shape == (5000, 28, 28)
    assert len(filter_digit(ds, 0)) == 500
