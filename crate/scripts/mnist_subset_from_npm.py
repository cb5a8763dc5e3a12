#!/usr/bin/env python3
"""Convert the digits bundled in the `mnist` npm package into IDX files.

The package ships 10,000 MNIST digits as JSON (one file per class, pixel
values already divided by 255 and rounded to three decimals). This script
recovers the original bytes, interleaves the classes with a fixed seed and
writes an 8,000-sample training split and a 2,000-sample test split using
the standard MNIST file names, gzip-compressed.

    npm pack mnist && tar xzf mnist-1.1.0.tgz
    python3 scripts/mnist_subset_from_npm.py package data/mnist
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np

TRAIN = 8000


def main(pkg: Path, out: Path) -> None:
    images, labels = [], []
    for digit in range(10):
        raw = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        arr = np.rint(np.asarray(raw, dtype=np.float64) * 255.0).astype(np.uint8)
        arr = arr.reshape(-1, 28 * 28)
        images.append(arr)
        labels.append(np.full(len(arr), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.RandomState(0).permutation(len(labels))
    images, labels = images[order], labels[order]

    out.mkdir(parents=True, exist_ok=True)
    splits = {"train": slice(0, TRAIN), "t10k": slice(TRAIN, len(labels))}
    for prefix, sl in splits.items():
        imgs, labs = images[sl], labels[sl]
        with gzip.GzipFile(out / f"{prefix}-images-idx3-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">IIII", 0x803, len(imgs), 28, 28))
            f.write(imgs.tobytes())
        with gzip.GzipFile(out / f"{prefix}-labels-idx1-ubyte.gz", "wb", mtime=0) as f:
            f.write(struct.pack(">II", 0x801, len(labs)))
            f.write(labs.tobytes())
        print(prefix, len(labs), np.bincount(labs, minlength=10).tolist())


if __name__ == "__main__":
    main(Path(sys.argv[1]), Path(sys.argv[2]))
