#!/usr/bin/env python3
"""Fetch Fashion-MNIST via the npm registry and convert it to IDX files.

The sandbox/CI environment this project targets has no general network
access, but the npm registry mirror is reachable. The npm package
``fashion-mnist@1.1.0`` ships the full 70k-image dataset as per-class JSON
(10 files with ~7000 images of 784 uint8 pixels each), which this script
repackages into the standard big-endian IDX format (gzipped):

    train-images-idx3-ubyte.gz  train-labels-idx1-ubyte.gz
    t10k-images-idx3-ubyte.gz   t10k-labels-idx1-ubyte.gz

The npm package does not preserve the original train/test split, so the
split is reconstructed deterministically: per class, the first
``--train-per-class`` images become training data and the last 1000 become
the test set (the published test set is also 1000 per class). Classes are
round-robin interleaved so unshuffled prefixes stay balanced.

Usage:
    python3 tools/fetch_fashion_mnist.py --out tests/data/fashion \
        --train-per-class 2500
"""

import argparse
import gzip
import json
import shutil
import struct
import subprocess
import sys
import tarfile
import tempfile
from pathlib import Path

PER_CLASS = 7000
TEST_PER_CLASS = 1000
SIDE = 28


def load_class_images(pkg_dir: Path, label: int) -> list[bytes]:
    with open(pkg_dir / "src" / "clothes" / f"{label}.json") as f:
        data = json.load(f)["data"]
    # some classes carry empty filler entries; drop those, keep the first 7000
    images = [bytes(img) for img in data if len(img) == SIDE * SIDE]
    if len(images) < PER_CLASS:
        raise RuntimeError(f"class {label}: only {len(images)} usable images")
    return images[:PER_CLASS]


def write_idx_images(path: Path, images: list[bytes]) -> None:
    with gzip.open(path, "wb", compresslevel=9) as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(img)


def write_idx_labels(path: Path, labels: list[int]) -> None:
    with gzip.open(path, "wb", compresslevel=9) as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def interleave(per_class: list[list[bytes]]) -> tuple[list[bytes], list[int]]:
    images, labels = [], []
    n = len(per_class[0])
    for i in range(n):
        for label, imgs in enumerate(per_class):
            images.append(imgs[i])
            labels.append(label)
    return images, labels


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, required=True, help="output directory")
    ap.add_argument("--train-per-class", type=int, default=6000,
                    help="training images kept per class (max 6000)")
    ap.add_argument("--tarball", type=Path, default=None,
                    help="use a pre-downloaded fashion-mnist npm tarball")
    args = ap.parse_args(argv)

    if not 1 <= args.train_per_class <= PER_CLASS - TEST_PER_CLASS:
        ap.error(f"--train-per-class must be in [1, {PER_CLASS - TEST_PER_CLASS}]")

    args.out.mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        tarball = args.tarball
        if tarball is None:
            subprocess.run(["npm", "pack", "fashion-mnist@1.1.0"],
                           cwd=tmp, check=True, capture_output=True)
            tarball = tmp / "fashion-mnist-1.1.0.tgz"
        with tarfile.open(tarball) as tf:
            tf.extractall(tmp / "x")
        pkg = tmp / "x" / "package"

        per_class = [load_class_images(pkg, c) for c in range(10)]

    train = [imgs[: args.train_per_class] for imgs in per_class]
    test = [imgs[-TEST_PER_CLASS:] for imgs in per_class]

    train_images, train_labels = interleave(train)
    test_images, test_labels = interleave(test)

    write_idx_images(args.out / "train-images-idx3-ubyte.gz", train_images)
    write_idx_labels(args.out / "train-labels-idx1-ubyte.gz", train_labels)
    write_idx_images(args.out / "t10k-images-idx3-ubyte.gz", test_images)
    write_idx_labels(args.out / "t10k-labels-idx1-ubyte.gz", test_labels)

    print(f"wrote {len(train_images)} train / {len(test_images)} test images "
          f"to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
