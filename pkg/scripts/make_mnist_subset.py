"""Write the 5000-image MNIST subset bundled with mlxtend as gzipped IDX files.

The full MNIST archive is not always reachable; the mlxtend wheel ships 500
images per digit taken from the original training set. This script re-packs
them in the standard IDX container so the library's parser reads them like
the real files.

    pip install mlxtend
    python scripts/make_mnist_subset.py data/mnist5k
"""
import gzip
import struct
import sys
from pathlib import Path

import numpy as np


def main(out_dir):
    from mlxtend.data import mnist_data

    x, y = mnist_data()
    x = np.asarray(x, dtype=np.uint8)
    y = np.asarray(y, dtype=np.uint8)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = struct.pack(">IIII", 0x00000803, len(x), 28, 28)
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as f:
        f.write(header + x.tobytes())
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as f:
        f.write(struct.pack(">II", 0x00000801, len(y)) + y.tobytes())
    print(f"wrote {len(x)} images to {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/mnist5k")
