import struct
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
MNIST_IMAGES = ROOT / "data" / "mnist5k" / "images-idx3-ubyte.gz"
MNIST_LABELS = ROOT / "data" / "mnist5k" / "labels-idx1-ubyte.gz"


def idx_images(images):
    images = np.asarray(images, dtype=np.uint8)
    return struct.pack(">IIII", 0x803, *images.shape) + images.tobytes()


def idx_labels(labels):
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x801, len(labels)) + labels.tobytes()


def random_stochastic(rng, n, m=None, positive=False):
    """Random column-stochastic matrix (or ``m`` of them)."""
    shape = (n, n) if m is None else (m, n, n)
    a = rng.random(shape)
    if not positive:
        a = a * (rng.random(shape) < 0.7)
        a[..., 0, :] += 1e-3
    return a / a.sum(axis=-2, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
