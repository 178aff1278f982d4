"""MNIST IDX ingestion, digit filtering, level quantisation and PGM export."""
from dataclasses import dataclass
import gzip
from pathlib import Path
import re
import struct

import numpy as np

from .errors import FormatError, ParameterError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass
class RawDataset:
    images: np.ndarray  # (count, rows, cols) uint8
    labels: np.ndarray  # (count,) uint8

    def __len__(self):
        return len(self.labels)


def _parse(buf: bytes, magic: int, ndim: int, what: str) -> np.ndarray:
    head = 4 + 4 * ndim
    if len(buf) < head:
        raise FormatError(f"{what} file too short for its header")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise FormatError(f"{what} file has magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", buf[4:head])
    n = int(np.prod(dims))
    if len(buf) - head < n:
        raise FormatError(f"{what} payload truncated: {len(buf) - head} of {n} bytes")
    return np.frombuffer(buf, dtype=np.uint8, count=n, offset=head).reshape(dims).copy()


def parse_idx(image_bytes: bytes, label_bytes: bytes) -> RawDataset:
    images = _parse(image_bytes, IMAGES_MAGIC, 3, "image")
    labels = _parse(label_bytes, LABELS_MAGIC, 1, "label")
    if len(images) != len(labels):
        raise FormatError(f"{len(images)} images but {len(labels)} labels")
    return RawDataset(images, labels)


def _read(path) -> bytes:
    path = Path(path)
    with (gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")) as f:
        return f.read()


def load_idx(image_path, label_path) -> RawDataset:
    """Read an IDX image/label pair; ``.gz`` files are decompressed on the fly."""
    return parse_idx(_read(image_path), _read(label_path))


def concat(*parts: RawDataset) -> RawDataset:
    return RawDataset(np.concatenate([p.images for p in parts]),
                      np.concatenate([p.labels for p in parts]))


def quantize(images, k: int = 8) -> np.ndarray:
    """Map 0..255 grey values onto ``k`` equal-width levels, ``floor(p * k / 256)``."""
    if not 1 <= k <= 256:
        raise ParameterError(f"k must lie in 1..256, got {k}")
    if isinstance(images, RawDataset):
        images = images.images
    return (np.asarray(images, dtype=np.int64) * k // 256).astype(np.uint8)


def filter_digit(dataset: RawDataset, digit: int) -> RawDataset:
    if not 0 <= digit <= 9:
        raise ParameterError(f"digit must lie in 0..9, got {digit}")
    keep = dataset.labels == digit
    return RawDataset(dataset.images[keep], dataset.labels[keep])


def write_pgm(levels, k: int = 8) -> bytes:
    """Binary PGM with ``maxval = k - 1``."""
    if not 2 <= k <= 256:
        raise ParameterError(f"k must lie in 2..256, got {k}")
    img = np.asarray(levels, dtype=np.uint8)
    h, w = img.shape
    return f"P5\n{w} {h}\n{k - 1}\n".encode("ascii") + img.tobytes()


_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def read_pgm(buf: bytes):
    """Return ``(levels, maxval)`` from a binary PGM written by ``write_pgm``."""
    m = _PGM_HEADER.match(buf)
    if m is None:
        raise FormatError("not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    payload = buf[m.end():m.end() + w * h]
    if len(payload) != w * h:
        raise FormatError("PGM payload truncated")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy(), maxval
